"""Convolutional feature pyramid and the multi-level aggregator.

Four stages, each a stride-2 3x3 convolution, a smooth nonlinearity
(`gelu`), and a stride-1 3x3 convolution. Stage i emits base_channels *
2^i channels at 1/2^i resolution. The aggregator projects every level to
the shared embedding width with a per-pixel linear map, resizes all of
them to the level-1 grid, concatenates along channels, and fuses with a
second per-pixel linear map. That fused map is the feature sheet the
decoder attends over; the deepest raw level also feeds the dictionary
modulator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .rng import Rng
from .tensor import (
    Parameter,
    Tensor,
    concat,
    conv2d,
    gelu,
    interpolate_bilinear,
    linear,
    transpose,
)

N_STAGES = 4
DIVISOR = 2**N_STAGES

# Target per-channel deviation scale of the feature sheet after the
# data-dependent calibration pass (see Model.calibrate). The decoder's
# attention scores are raw dot products scaled by 1/sqrt(d_k); with
# unit-norm dictionary rows this target keeps their initial spread O(1).
# Too small and the attention rows start near-uniform; any nonzero shared
# channel mean makes all pixels attend alike; either way every decoder
# output collapses to the same convex blend and training freezes.
FEATURE_SCALE = 4.0

# Per-level damping of the projection init. Deep pyramid levels mix wide
# context, which at init dominates the within-class variance of the fused
# sheet and buries the class signal the shallow level already carries;
# starting the deep projections small keeps the sheet class-pure while the
# weights stay free to bring context back in during training.
LEVEL_INIT_DAMPING = 0.3


@dataclass
class EncoderConfig:
    base_channels: int = 8
    embed_channels: int = 32

    def __post_init__(self):
        if self.base_channels < 4:
            raise DimensionError(
                f"base_channels must be >= 4, got {self.base_channels}"
            )
        if self.embed_channels < 8:
            raise DimensionError(
                f"embed_channels must be >= 8, got {self.embed_channels}"
            )

    def stage_channels(self, i: int) -> int:
        """Output channels of stage i (1-based)."""
        return self.base_channels * 2**i

    @property
    def deep_channels(self) -> int:
        return self.stage_channels(N_STAGES)


def conv_init(rng: Rng, c_out: int, c_in: int) -> np.ndarray:
    # Spatially flat 3x3 kernels (He-scaled per-channel scalars spread over
    # the taps). A flat kernel is a local average, so every response stays
    # inside the hull of the neighboring values; random taps instead act as
    # difference filters whose boundary overshoot compounds across stages
    # into rare huge-norm pixels, and dot-product attention locks onto those
    # outliers at every dictionary row. The spatial shape stays trainable.
    scalars = rng.normal((c_out, c_in, 1, 1), std=np.sqrt(2.0 / c_in))
    return np.broadcast_to(scalars / 9.0, (c_out, c_in, 3, 3)).copy()


def linear_init(rng: Rng, c_in: int, c_out: int) -> np.ndarray:
    return rng.normal((c_in, c_out), std=np.sqrt(1.0 / c_in))


def init_encoder_params(config: EncoderConfig, rng: Rng) -> dict[str, Parameter]:
    """Backbone parameters; every init draws from a substream named after
    the parameter, so values do not depend on creation order."""
    params: dict[str, Parameter] = {}

    def make(name: str, values) -> None:
        params[name] = Parameter(name, values)

    c_prev = 3
    for i in range(1, N_STAGES + 1):
        c_out = config.stage_channels(i)
        make(f"encoder.stage{i}.reduce.weight", conv_init(rng.derive(f"encoder.stage{i}.reduce.weight"), c_out, c_prev))
        make(f"encoder.stage{i}.reduce.bias", np.zeros(c_out))
        make(f"encoder.stage{i}.refine.weight", conv_init(rng.derive(f"encoder.stage{i}.refine.weight"), c_out, c_out))
        make(f"encoder.stage{i}.refine.bias", np.zeros(c_out))
        c_prev = c_out
    return params


def init_level_projection(config: EncoderConfig, rng: Rng, i: int) -> dict[str, Parameter]:
    c_i = config.stage_channels(i)
    c_out = config.embed_channels
    name = f"encoder.level{i}.proj"
    damping = LEVEL_INIT_DAMPING ** (i - 1)
    return {
        f"{name}.weight": Parameter(
            f"{name}.weight",
            damping * linear_init(rng.derive(f"{name}.weight"), c_i, c_out),
        ),
        f"{name}.bias": Parameter(f"{name}.bias", np.zeros(c_out)),
    }


def init_fusion_params(config: EncoderConfig, rng: Rng) -> dict[str, Parameter]:
    c_in = 4 * config.embed_channels
    c_out = config.embed_channels
    return {
        "encoder.fuse.weight": Parameter(
            "encoder.fuse.weight", linear_init(rng.derive("encoder.fuse.weight"), c_in, c_out)
        ),
        "encoder.fuse.bias": Parameter("encoder.fuse.bias", np.zeros(c_out)),
    }


def _with_batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected (3,H,W) or (B,3,H,W), got {x.shape}")


def encode(x: Tensor, params: dict, config: EncoderConfig) -> list[Tensor]:
    """Run the backbone; returns the four pyramid levels.

    Accepts a single image (3,H,W) or a batch (B,3,H,W); the levels
    mirror the input's batchedness.
    """
    x, squeeze = _with_batch(x)
    h, w = x.shape[2], x.shape[3]
    if h % DIVISOR or w % DIVISOR:
        raise DimensionError(
            f"input size {h}x{w} must be divisible by {DIVISOR}"
        )
    levels = []
    out = x
    for i in range(1, N_STAGES + 1):
        out = conv2d(
            out,
            params[f"encoder.stage{i}.reduce.weight"],
            params[f"encoder.stage{i}.reduce.bias"],
            stride=2,
        )
        out = gelu(out)
        out = conv2d(
            out,
            params[f"encoder.stage{i}.refine.weight"],
            params[f"encoder.stage{i}.refine.bias"],
            stride=1,
        )
        levels.append(out)
    if squeeze:
        levels = [lv.reshape(lv.shape[1:]) for lv in levels]
    return levels


def _project_channels(f: Tensor, weight: Parameter, bias: Parameter) -> Tensor:
    """1x1 projection: move channels last, apply the linear map, move back."""
    batched = f.ndim == 4
    axes_in = (0, 2, 3, 1) if batched else (1, 2, 0)
    axes_out = (0, 3, 1, 2) if batched else (2, 0, 1)
    return transpose(linear(transpose(f, axes_in), weight, bias), axes_out)


def map_level(f_i: Tensor, params: dict, level: int, out_hw: tuple[int, int]) -> Tensor:
    """Project level `level` to the embedding width and resize to `out_hw`."""
    projected = _project_channels(
        f_i, params[f"encoder.level{level}.proj.weight"], params[f"encoder.level{level}.proj.bias"]
    )
    return interpolate_bilinear(projected, out_hw[0], out_hw[1])


def aggregate(mapped: list[Tensor], params: dict) -> Tensor:
    """Concatenate the four mapped levels on channels and fuse to C'."""
    if len(mapped) != N_STAGES:
        raise DimensionError(f"expected {N_STAGES} mapped levels, got {len(mapped)}")
    shapes = {m.shape for m in mapped}
    if len(shapes) != 1:
        raise DimensionError(f"mapped levels disagree on shape: {sorted(shapes)}")
    axis = 1 if mapped[0].ndim == 4 else 0
    stackd = concat(mapped, axis=axis)
    return _project_channels(stackd, params["encoder.fuse.weight"], params["encoder.fuse.bias"])
