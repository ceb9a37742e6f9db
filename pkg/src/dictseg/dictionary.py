"""Class-ID embedding dictionaries and the input-conditioned modulator.

The static dictionary is one learnable embedding row per class, shared by
every image. The modulator reads the deepest feature level of an image,
pools it (average pool over the first channel half, max pool over the
second), and produces per-class mixture weights over `reduction`
candidate embeddings expanded from each static row. The weighted sums
form that image's dynamic dictionary: same classes, input-specific
embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .rng import Rng
from .tensor import (
    Parameter,
    Tensor,
    amax,
    concat,
    linear,
    mean,
    reshape,
    slice_axis,
    softmax_rows,
)
from .encoder import linear_init


def init_static_dictionary(n_classes: int, embed_channels: int, rng: Rng) -> Parameter:
    """N x C' embeddings, i.i.d. normal with std 1/sqrt(C').

    The scale keeps initial dictionary-feature attention logits O(1).
    """
    values = rng.derive("dictionary.static").normal(
        (n_classes, embed_channels), std=1.0 / np.sqrt(embed_channels)
    )
    return Parameter("dictionary.static", values)


def init_modulator_params(
    deep_channels: int, embed_channels: int, n_classes: int, reduction: int, rng: Rng
) -> dict[str, Parameter]:
    if deep_channels % 2 != 0:
        raise ConfigError(
            f"modulator needs an even deep channel count, got {deep_channels}"
        )
    if reduction < 1:
        raise ConfigError(f"reduction must be >= 1, got {reduction}")
    half = deep_channels // 2
    spec = {
        "modulator.avg": (half, half),
        "modulator.max": (half, half),
        "modulator.fuse": (deep_channels, n_classes * reduction),
        "modulator.expand": (embed_channels, reduction * embed_channels),
    }
    params: dict[str, Parameter] = {}
    for name, (c_in, c_out) in spec.items():
        params[f"{name}.weight"] = Parameter(
            f"{name}.weight", linear_init(rng.derive(f"{name}.weight"), c_in, c_out)
        )
        params[f"{name}.bias"] = Parameter(f"{name}.bias", np.zeros(c_out))
    return params


def attention_map(
    f4: Tensor, params: dict, n_classes: int, reduction: int
) -> Tensor:
    """Per-class mixture weights from the deepest feature level.

    Accepts (C4, H4, W4) -> (N, r) or batched (B, C4, H4, W4) -> (B, N, r).
    Each (class, :) row is a softmax over the r candidates.
    """
    squeeze = f4.ndim == 3
    if squeeze:
        f4 = f4.reshape((1,) + f4.shape)
    if f4.ndim != 4:
        raise DimensionError(f"expected a feature map, got shape {f4.shape}")
    b, c4, h4, w4 = f4.shape
    if c4 % 2 != 0:
        raise ConfigError(f"deep channel count must be even, got {c4}")
    half = c4 // 2
    chunk_avg = slice_axis(f4, 1, 0, half)
    chunk_max = slice_axis(f4, 1, half, c4)
    pooled_avg = mean(chunk_avg, axis=(2, 3))
    pooled_max = amax(chunk_max.reshape(b, half, h4 * w4), axis=2)
    a_avg = linear(pooled_avg, params["modulator.avg.weight"], params["modulator.avg.bias"])
    a_max = linear(pooled_max, params["modulator.max.weight"], params["modulator.max.bias"])
    fused = linear(
        concat([a_avg, a_max], axis=1),
        params["modulator.fuse.weight"],
        params["modulator.fuse.bias"],
    )
    weights = softmax_rows(reshape(fused, (b * n_classes, reduction)))
    weights = reshape(weights, (b, n_classes, reduction))
    return weights.reshape(weights.shape[1:]) if squeeze else weights


def expand_candidates(static_dict: Tensor, params: dict, reduction: int) -> Tensor:
    """Expand each class row into `reduction` candidate embeddings (N, r, C')."""
    n, c = static_dict.shape
    expanded = linear(
        static_dict, params["modulator.expand.weight"], params["modulator.expand.bias"]
    )
    return reshape(expanded, (n, reduction, c))


def modulate(static_dict: Tensor, weights: Tensor, params: dict) -> Tensor:
    """Dynamic dictionary: per-class convex mix of candidate embeddings.

    `weights` is (N, r) for one sample or (B, N, r) for a batch; the
    result is (N, C') or (B, N, C') accordingly.
    """
    n, _ = static_dict.shape
    if weights.shape[-2] != n:
        raise DimensionError(
            f"weights {weights.shape} disagree with dictionary of {n} classes"
        )
    reduction = weights.shape[-1]
    candidates = expand_candidates(static_dict, params, reduction)
    if weights.ndim == 2:
        return (candidates * weights.reshape(n, reduction, 1)).sum(axis=1)
    b = weights.shape[0]
    cand = candidates.reshape((1, n, reduction, candidates.shape[-1]))
    return (cand * weights.reshape(b, n, reduction, 1)).sum(axis=2)


@dataclass
class DistanceStats:
    """Squared-distance compactness/dispersion of a batch of dictionaries."""

    intra: float
    inter: float
    intra_degenerate: bool = False
    inter_degenerate: bool = False


def dictionary_distance_stats(d: np.ndarray) -> DistanceStats:
    """Mean within-class spread and between-center spread of (B, N, C').

    intra: mean over classes and samples of squared distance to the class
    center. inter: mean squared distance over unordered center pairs.
    Single-sample batches have no spread (intra = 0, flagged); a single
    class has no pairs (inter = 0, flagged).
    """
    if isinstance(d, Tensor):
        d = d.data
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 3:
        raise DimensionError(f"expected (B, N, C'), got shape {d.shape}")
    b, n, _ = d.shape
    if n < 1:
        raise ConfigError("need at least one class")
    centers = d.mean(axis=0)
    intra_degenerate = b < 2
    intra = 0.0 if intra_degenerate else float(((d - centers) ** 2).sum() / (b * n))
    inter_degenerate = n < 2
    if inter_degenerate:
        inter = 0.0
    else:
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                diff = centers[i] - centers[j]
                total += float((diff * diff).sum())
        inter = 2.0 * total / (n * (n - 1))
    return DistanceStats(intra, inter, intra_degenerate, inter_degenerate)
