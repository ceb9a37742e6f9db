"""Alternating cross-attention between dictionary and features, plus the head.

One stage does exactly two scaled dot-product queries with no learned
projections: each class embedding attends over the pixel features and
becomes their convex mix, then each pixel feature attends over the
updated class embeddings and becomes a convex mix of those. Repeating
the stage lets dictionary and features co-refine. The head upsamples
the final feature sheet 2x and scores every pixel against a linear
transform of the final dictionary, one logit per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import (
    Parameter,
    Tensor,
    interpolate_bilinear,
    linear,
    matmul,
    reshape,
    softmax_rows,
    transpose,
)


@dataclass
class DecoderConfig:
    stages: int = 3
    residual: bool = False
    dk: float | None = None  # None means the embedding width

    def __post_init__(self):
        if self.stages < 1:
            raise ConfigError(f"decoder needs at least one stage, got {self.stages}")
        if self.dk is not None and self.dk <= 0:
            raise ConfigError(f"dk must be positive, got {self.dk}")


@dataclass
class StageTrace:
    """Intermediates kept for diagnostics: entries for stages 0..L."""

    dictionaries: list[Tensor] = field(default_factory=list)
    features: list[Tensor] = field(default_factory=list)
    dict_attention: list[Tensor] = field(default_factory=list)
    feature_attention: list[Tensor] = field(default_factory=list)


def init_decoder_params(embed_channels: int) -> dict[str, Parameter]:
    # Identity start: the refined pixel features are convex mixes of
    # dictionary rows, so the logits are those mix weights passed through
    # the Gram matrix D (W D)^T. A random W scrambles the class ranking the
    # same way at every pixel; identity keeps the ranking aligned with the
    # mix weights until training has a reason to move it.
    return {
        "decoder.head.weight": Parameter(
            "decoder.head.weight", np.eye(embed_channels)
        ),
        "decoder.head.bias": Parameter("decoder.head.bias", np.zeros(embed_channels)),
    }


def _flatten_features(e: Tensor) -> Tensor:
    """(C', H, W) -> (P, C') with row-major pixel order (y before x)."""
    c = e.shape[0]
    return transpose(reshape(e, (c, e.shape[1] * e.shape[2])), (1, 0))


def stage(
    d_prev: Tensor, e_prev: Tensor, dk: float, residual: bool = False
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """One alternating refinement round.

    Returns (d_next, e_next, dict_attention, feature_attention) where the
    attention matrices are (N, P) and (P, N) row-stochastic. `e_prev` is
    (C', H, W) and `e_next` keeps that shape.
    """
    if dk <= 0:
        raise ConfigError(f"dk must be positive, got {dk}")
    if d_prev.shape[1] != e_prev.shape[0]:
        raise DimensionError(
            f"dictionary width {d_prev.shape} and feature channels {e_prev.shape} differ"
        )
    shape = e_prev.shape
    feats = _flatten_features(e_prev)
    scale = 1.0 / np.sqrt(dk)

    dict_scores = matmul(d_prev, transpose(feats, (1, 0))) * scale
    dict_attn = softmax_rows(dict_scores)
    d_next = matmul(dict_attn, feats)
    if residual:
        d_next = d_next + d_prev

    feat_scores = matmul(feats, transpose(d_next, (1, 0))) * scale
    feat_attn = softmax_rows(feat_scores)
    e_flat = matmul(feat_attn, d_next)
    if residual:
        e_flat = e_flat + feats
    e_next = reshape(transpose(e_flat, (1, 0)), shape)
    return d_next, e_next, dict_attn, feat_attn


def head_logits(d_final: Tensor, e_final: Tensor, params: dict) -> Tensor:
    """Score upsampled pixel features against the projected dictionary.

    e_final (C', H', W') is bilinearly upsampled to (2H', 2W'); each pixel
    feature is dotted with every row of linear(d_final), giving (N, 2H', 2W').
    """
    c, h, w = e_final.shape
    up = interpolate_bilinear(e_final, 2 * h, 2 * w)
    keys = linear(d_final, params["decoder.head.weight"], params["decoder.head.bias"])
    pixels = _flatten_features(up)
    logits = matmul(pixels, transpose(keys, (1, 0)))
    return transpose(reshape(logits, (2 * h, 2 * w, keys.shape[0])), (2, 0, 1))


def decode(
    d0: Tensor, e0: Tensor, config: DecoderConfig, params: dict
) -> tuple[Tensor, StageTrace]:
    """Run the configured number of stages and the head for one sample."""
    dk = float(config.dk) if config.dk is not None else float(e0.shape[0])
    trace = StageTrace([d0], [e0], [], [])
    d, e = d0, e0
    for _ in range(config.stages):
        d, e, dict_attn, feat_attn = stage(d, e, dk, config.residual)
        trace.dictionaries.append(d)
        trace.features.append(e)
        trace.dict_attention.append(dict_attn)
        trace.feature_attention.append(feat_attn)
    return head_logits(d, e, params), trace


def decode_bypass(d0: Tensor, e0: Tensor, params: dict) -> tuple[Tensor, StageTrace]:
    """Head only, no refinement rounds (the interaction-off ablation)."""
    return head_logits(d0, e0, params), StageTrace([d0], [e0], [], [])
