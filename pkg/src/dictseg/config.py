"""Flat `key = value` run configuration.

One file drives everything: model shape, losses, optimizer, schedule,
dataset generation, and paths. Unknown keys are rejected so typos fail
loudly. `serialize` emits a canonical echo (fixed key order, full float
precision) which training and ablation runs write next to their outputs;
a run is verifiable from that echo alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .losses import LossWeights
from .synthetic import SyntheticConfig


@dataclass
class RunConfig:
    # data / task
    image_size: int = 64
    n_classes: int = 4
    data_root: str = "data"
    out_dir: str = "runs/default"
    # synthetic generation
    samples_train: int = 200
    samples_val: int = 40
    samples_test: int = 40
    heterogeneity: float = 0.5
    homogeneity: float = 0.5
    ignore_border: int = 0
    # model
    base_channels: int = 8
    embed_channels: int = 32
    stages: int = 3
    residual: bool = False
    reduction: int = 4
    modulator: bool = True
    aggregator: bool = True
    interaction: bool = True
    # losses
    lambda_static: float = 0.4
    lambda_dynamic: float = 1.0
    contrastive: bool = True
    epsilon: float = 1e-6
    ignore_label: int = 255
    # optimization
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    clip_norm: float = 10.0  # global grad-norm ceiling; 0 disables
    batch_size: int = 4
    epochs: int = 6
    max_steps: int = 0  # 0 = run all epochs
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.max_steps < 0:
            raise ConfigError(f"max_steps must be >= 0, got {self.max_steps}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.clip_norm < 0:
            raise ConfigError(f"clip_norm must be >= 0, got {self.clip_norm}")
        if self.reduction < 1:
            raise ConfigError(f"reduction must be >= 1, got {self.reduction}")
        # These constructors validate their own slices of the config.
        self.encoder_config()
        self.decoder_config()
        self.loss_weights()
        self.synthetic_config()

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.base_channels, self.embed_channels)

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(stages=self.stages, residual=self.residual)

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_static=self.lambda_static,
            lambda_dynamic=self.lambda_dynamic,
            epsilon=self.epsilon,
            ignore_label=self.ignore_label,
            use_contrastive=self.contrastive,
        )

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(
            image_size=self.image_size,
            n_classes=self.n_classes,
            samples_train=self.samples_train,
            samples_val=self.samples_val,
            samples_test=self.samples_test,
            seed=self.seed,
            heterogeneity=self.heterogeneity,
            homogeneity=self.homogeneity,
            ignore_border=self.ignore_border,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str, line_no: int):
    ftype = _FIELDS[key].type
    raw = raw.strip()
    try:
        if ftype == "bool":
            if raw not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return raw == "true"
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: bad value for {key}: {exc}") from exc


def parse_config_text(text: str) -> RunConfig:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, line_no)
    return RunConfig(**values)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    lines = [
        f"{f.name} = {_format_value(getattr(config, f.name))}"
        for f in dataclasses.fields(RunConfig)
    ]
    return "\n".join(lines) + "\n"


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(serialize_config(config))


def with_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """A copy of `config` with the given fields replaced (validated)."""
    for key in overrides:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    return dataclasses.replace(config, **overrides)
