"""Model assembly: parameter registry, dual-branch forward, inference path.

The forward pass encodes a batch once, then runs two segmentation
branches over the shared features: the dynamic branch decodes with the
per-image modulated dictionary, the static branch with the shared static
dictionary. Inference uses the dynamic branch only; decode-invocation
counters make that checkable rather than a promise.

Component switches (used by the ablation runner):

* modulator off  -> the dynamic dictionary is the static one, unmodulated
* aggregator off -> features are the projected level-1 map alone
* interaction off-> no refinement rounds; the head reads (D0, E0) directly
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .decoder import StageTrace, decode, decode_bypass, init_decoder_params
from .dictionary import (
    attention_map,
    init_modulator_params,
    init_static_dictionary,
    modulate,
)
from .encoder import (
    FEATURE_SCALE,
    N_STAGES,
    aggregate,
    encode,
    init_encoder_params,
    init_fusion_params,
    init_level_projection,
    map_level,
)
from .errors import ConfigError, NumericalError
from .rng import Rng
from .tensor import Parameter, Tensor, no_grad, slice_axis, stack


@dataclass
class ForwardResult:
    dynamic_logits: Tensor
    static_logits: Tensor | None
    d_batch: Tensor
    traces: list[StageTrace]
    e0: Tensor


class Model:
    def __init__(self, config: RunConfig, rng: Rng):
        self.config = config
        self.encoder_config = config.encoder_config()
        self.decoder_config = config.decoder_config()
        self.params: dict[str, Parameter] = {}
        self.static_decode_calls = 0
        self.dynamic_decode_calls = 0

        self._register(init_encoder_params(self.encoder_config, rng))
        self._register(init_level_projection(self.encoder_config, rng, 1))
        if config.aggregator:
            for level in range(2, N_STAGES + 1):
                self._register(init_level_projection(self.encoder_config, rng, level))
            self._register(init_fusion_params(self.encoder_config, rng))
        self._register(
            {
                "dictionary.static": init_static_dictionary(
                    config.n_classes, config.embed_channels, rng
                )
            }
        )
        if config.modulator:
            self._register(
                init_modulator_params(
                    self.encoder_config.deep_channels,
                    config.embed_channels,
                    config.n_classes,
                    config.reduction,
                    rng,
                )
            )
        self._register(init_decoder_params(config.embed_channels))

    def _register(self, params: dict[str, Parameter]) -> None:
        for name, param in params.items():
            if name in self.params:
                raise ConfigError(f"duplicate parameter name {name!r}")
            self.params[name] = param

    @property
    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters)

    def calibrate(
        self,
        images: Tensor,
        labels: np.ndarray | None = None,
        target_std: float = FEATURE_SCALE,
    ) -> None:
        """Data-dependent init from one batch, before any optimizer step.

        Three passes. First condition the E0 geometry by folding a linear
        correction into the producing map. The refinement ranks pixels by
        raw projection onto each dictionary row, so classes whose
        centroids share a direction and differ mainly in norm are
        indistinguishable to it: both rows attend the large-norm class's
        pixels and merge into one row, after which no pixel can ever
        receive different scores for the two classes. With labels the
        correction whitens the between-class scatter: the class centroids
        move to an equal-norm simplex with per-direction spread
        target_std (the geometry projection ranking separates best) while
        directions carrying no class signal keep their scale. Equalizing
        the full pixel covariance instead would amplify those noise
        directions to the same size as the class signal and drown it.
        Without labels only the shared pixel mean is removed and the
        total deviation rescaled; a nonzero shared mean is the extreme
        norm-vs-direction failure, every row attending alike.

        Second, when `labels` are given and the modulator is on, aim the
        modulator's expansion at the per-class feature centroids: each
        expansion block becomes pinv(static) @ centroids plus its original
        random values, so every candidate starts at its class centroid (the
        convex mix then reproduces it exactly) while the static dictionary
        keeps its own init and the candidates stay distinguishable. The
        alternating refinement is a soft clustering iteration; started from
        arbitrary rows it contracts everything toward the pixel mean, while
        rows near the class centroids attract their own pixels and sharpen.
        Classes absent from the batch fall back to the global pixel mean.

        Last, rescale the head projection so the per-pixel spread across
        class logits is one. The spread across classes is what the pixel
        losses compare; the global logit std can be dominated by
        pixel-to-pixel variation, and normalizing that instead can leave
        every pixel's class scores packed so tightly that the first descent
        direction is the degenerate one.
        """
        with no_grad():
            e0, _ = self.features(images)
        pixels, owner = _pixel_table(e0.data, labels)
        if owner is not None:
            keep = owner != self.config.ignore_label
            pixels, owner = pixels[keep], owner[keep]
        transform, mean = _feature_conditioner(pixels, owner, target_std)
        prefix = "encoder.fuse" if self.config.aggregator else "encoder.level1.proj"
        self.params[f"{prefix}.weight"].data = (
            self.params[f"{prefix}.weight"].data @ transform
        )
        self.params[f"{prefix}.bias"].data = (
            self.params[f"{prefix}.bias"].data - mean
        ) @ transform

        if labels is not None and self.config.modulator:
            with no_grad():
                e0, _ = self.features(images)
            self._seed_expansion(e0.data, np.asarray(labels))

        with no_grad():
            result = self.forward(images, with_static=False)
        logit_std = float(result.dynamic_logits.data.std(axis=1).mean())
        if logit_std <= 0.0:
            raise NumericalError("head produced constant logits; cannot calibrate")
        self.params["decoder.head.weight"].data /= logit_std
        self.params["decoder.head.bias"].data /= logit_std

    def _seed_expansion(self, e0: np.ndarray, labels: np.ndarray) -> None:
        n = self.config.n_classes
        pixels, owner = _pixel_table(e0, labels)
        targets = np.tile(pixels.mean(axis=0), (n, 1))
        for c in range(n):
            chosen = pixels[owner == c]
            if len(chosen):
                targets[c] = chosen.mean(axis=0)
        # Exact when N <= C' (least squares otherwise): static @ m = targets.
        m = np.linalg.pinv(self.params["dictionary.static"].data) @ targets
        expand = self.params["modulator.expand.weight"].data
        c_embed = e0.shape[1]
        for j in range(self.config.reduction):
            expand[:, j * c_embed : (j + 1) * c_embed] += m

    # ----------------------------------------------------------------- forward

    def features(self, images: Tensor) -> tuple[Tensor, Tensor]:
        """Shared trunk: (E0 batch, deepest level batch)."""
        levels = encode(images, self.params, self.encoder_config)
        f4 = levels[-1]
        h1, w1 = levels[0].shape[-2], levels[0].shape[-1]
        if self.config.aggregator:
            mapped = [
                map_level(levels[i - 1], self.params, i, (h1, w1))
                for i in range(1, N_STAGES + 1)
            ]
            e0 = aggregate(mapped, self.params)
        else:
            e0 = map_level(levels[0], self.params, 1, (h1, w1))
        return e0, f4

    def dynamic_dictionaries(self, f4: Tensor) -> Tensor:
        """Per-sample initial dictionaries (B, N, C')."""
        static = self.params["dictionary.static"]
        if not self.config.modulator:
            b = f4.shape[0]
            return stack([static] * b, axis=0)
        weights = attention_map(
            f4, self.params, self.config.n_classes, self.config.reduction
        )
        return modulate(static, weights, self.params)

    def _decode_one(self, d0: Tensor, e0_sample: Tensor) -> tuple[Tensor, StageTrace]:
        if self.config.interaction:
            return decode(d0, e0_sample, self.decoder_config, self.params)
        return decode_bypass(d0, e0_sample, self.params)

    def forward(self, images: Tensor, with_static: bool = True) -> ForwardResult:
        e0, f4 = self.features(images)
        b = images.shape[0]
        d0_batch = self.dynamic_dictionaries(f4)
        static = self.params["dictionary.static"]

        dynamic_logits = []
        static_logits = []
        finals = []
        traces = []
        for s in range(b):
            e0_s = _sample(e0, s)
            d0_s = _sample(d0_batch, s)
            self.dynamic_decode_calls += 1
            logits_d, trace = self._decode_one(d0_s, e0_s)
            dynamic_logits.append(logits_d)
            finals.append(trace.dictionaries[-1])
            traces.append(trace)
            if with_static:
                self.static_decode_calls += 1
                logits_s, _ = self._decode_one(static, e0_s)
                static_logits.append(logits_s)

        return ForwardResult(
            dynamic_logits=stack(dynamic_logits, axis=0),
            static_logits=stack(static_logits, axis=0) if with_static else None,
            d_batch=stack(finals, axis=0),
            traces=traces,
            e0=e0,
        )

    def predict(self, images: Tensor) -> np.ndarray:
        """Inference: dynamic-branch argmax labels (B, H, W).

        Ties break toward the lower class index (argmax takes the first
        maximum).
        """
        result = self.forward(images, with_static=False)
        return np.argmax(result.dynamic_logits.data, axis=1)


def _sample(batched: Tensor, index: int) -> Tensor:
    row = slice_axis(batched, 0, index, index + 1)
    return row.reshape(row.shape[1:])


def _pixel_table(
    e0: np.ndarray, labels: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Flatten an E0 batch to (pixels, owning label) rows.

    Labels are subsampled to the feature grid by strided picking; None
    stays None.
    """
    b, c_embed, h, w = e0.shape
    pixels = e0.transpose(0, 2, 3, 1).reshape(-1, c_embed)
    if labels is None:
        return pixels, None
    labels = np.asarray(labels)
    coarse = labels[:, :: labels.shape[1] // h, :: labels.shape[2] // w]
    return pixels, coarse.reshape(-1)


# Ridge on the within-class scatter (fraction of its mean eigenvalue) and
# the retained scale of directions carrying no class signal, both relative
# quantities so the conditioner is invariant to the raw feature scale.
WITHIN_RIDGE = 1e-2
COMPLEMENT_DAMPING = 0.25

# Ceiling on any equalize gain, as a multiple of the median gain. A class
# direction with near-zero raw separation would need a huge gain to reach
# target_std; folding that gain into the projection makes the feature sheet
# hypersensitive along it (every optimizer step of upstream weights moves
# the features by the step size times the gain), which destabilizes early
# training. Capped directions start partially separated and the dictionary
# contrastive term finishes the job.
EQUALIZE_CAP = 4.0


def _feature_conditioner(
    pixels: np.ndarray, owner: np.ndarray | None, target_std: float
) -> tuple[np.ndarray, np.ndarray]:
    """(transform, mean) whose fold-in conditions E0 for projection ranking.

    With owners this is discriminant whitening: first whiten the
    within-class scatter (ridged), which shrinks directions dominated by
    boundary noise and leaves low-noise class separations intact, then
    equalize the centroid scatter so every class direction has spread
    target_std. Directions carrying no class signal are damped; whitening
    them to full scale would drown the centroid geometry in noise, and
    boundary pixels with large components along weakly separating
    directions would otherwise out-project every interior pixel and
    capture all the attention. Without owners (or a single present
    class): center on the pixel mean and rescale the mean per-channel
    deviation to target_std.
    """
    c_embed = pixels.shape[1]
    if owner is not None:
        present = np.unique(owner)
        centroids = (
            np.stack([pixels[owner == c].mean(axis=0) for c in present])
            if len(present) >= 2
            else np.zeros((0, c_embed))
        )
        if len(centroids) >= 2:
            deviations = pixels - centroids[np.searchsorted(present, owner)]
            within = deviations.T @ deviations / len(pixels)
            w_evals, w_evecs = np.linalg.eigh(within)
            ridge = max(float(w_evals.mean()), 1e-30) * WITHIN_RIDGE
            w1 = w_evecs @ np.diag((w_evals + ridge) ** -0.5) @ w_evecs.T
            mean = centroids.mean(axis=0)
            u, s, vt = np.linalg.svd((centroids - mean) @ w1, full_matrices=False)
            kept = s > s[0] * 1e-6 if s[0] > 0 else np.zeros(len(s), bool)
            if kept.any():
                v = vt[kept].T
                scale = np.sqrt(len(centroids)) * target_std / s[kept]
                scale = np.minimum(scale, EQUALIZE_CAP * float(np.median(scale)))
                equalize = v @ np.diag(scale) @ v.T
                complement = COMPLEMENT_DAMPING * (np.eye(c_embed) - v @ v.T)
                return w1 @ (equalize + complement), mean
    mean = pixels.mean(axis=0)
    dev = float(pixels.std(axis=0).mean())
    if dev <= 0.0:
        raise NumericalError("feature sheet has zero variance; cannot calibrate")
    return np.eye(c_embed) * (target_std / dev), mean
