"""Training losses: cross-entropy, soft Dice, dictionary contrastive, total.

The total is a weighted sum of the two branch losses. Its construction
order is part of the contract so logs can be verified bit-for-bit:

    total = lambda_static * (ce_s + dice_s)
          + lambda_dynamic * ((ce_d + dice_d) + con)

with `con` replaced by 0 when the contrastive term is disabled. Pixels
labeled `ignore_label` take part in nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .tensor import (
    Tensor,
    add,
    div,
    log_softmax_rows,
    mul,
    slice_axis,
    softmax_rows,
    square,
    sub,
)

DICE_SMOOTHING = 1.0


@dataclass
class LossWeights:
    lambda_static: float = 0.4
    lambda_dynamic: float = 1.0
    epsilon: float = 1e-6
    ignore_label: int = 255
    use_contrastive: bool = True

    def __post_init__(self):
        if self.lambda_static < 0 or self.lambda_dynamic < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class LossTerm:
    value: Tensor
    degenerate: bool = False


@dataclass
class ContrastiveResult:
    con: Tensor
    intra: Tensor
    inter: Tensor
    degenerate: bool = False


@dataclass
class LossBreakdown:
    """All scalar loss tensors of one step plus the exact total.

    The identity total = lambda_static*(ce_static+dice_static) +
    lambda_dynamic*((ce_dynamic+dice_dynamic)+con) holds bitwise, because
    that is literally how `total` is assembled (con enters as 0.0 when
    the contrastive term is disabled).
    """

    ce_static: Tensor
    dice_static: Tensor
    ce_dynamic: Tensor
    dice_dynamic: Tensor
    con: Tensor
    intra: Tensor
    inter: Tensor
    total: Tensor
    degenerate: bool = False

    def scalars(self) -> dict[str, float]:
        return {
            name: float(getattr(self, name).data)
            for name in (
                "ce_static",
                "dice_static",
                "ce_dynamic",
                "dice_dynamic",
                "con",
                "intra",
                "inter",
                "total",
            )
        }


def _flatten_logits(logits: Tensor, labels: np.ndarray, ignore: int):
    """Common view: logits as (P, N) rows, labels flat, ignore mask."""
    if logits.ndim == 3:
        n = logits.shape[0]
        flat = logits.reshape((n, -1)).transpose(1, 0)
    elif logits.ndim == 4:
        n = logits.shape[1]
        flat = logits.transpose(0, 2, 3, 1).reshape((-1, n))
    else:
        raise DimensionError(f"logits must be (N,H,W) or (B,N,H,W), got {logits.shape}")
    labels = np.asarray(labels)
    expected = logits.shape[1:] if logits.ndim == 3 else logits.shape[:1] + logits.shape[2:]
    if labels.shape != expected:
        raise DimensionError(
            f"labels {labels.shape} do not match logits {logits.shape}"
        )
    flat_labels = labels.reshape(-1)
    bad = (flat_labels != ignore) & ((flat_labels < 0) | (flat_labels >= n))
    if bad.any():
        index = np.unravel_index(int(np.argmax(bad)), labels.shape)
        raise DataError(
            f"label {int(flat_labels[np.argmax(bad)])} out of range at pixel "
            f"{tuple(int(v) for v in index)} (N={n}, ignore={ignore})"
        )
    mask = flat_labels != ignore
    return flat, flat_labels, mask, n


def cross_entropy(logits: Tensor, labels: np.ndarray, ignore: int = 255) -> LossTerm:
    """Mean negative log-likelihood over non-ignored pixels."""
    flat, flat_labels, mask, n = _flatten_logits(logits, labels, ignore)
    count = int(mask.sum())
    if count == 0:
        return LossTerm(Tensor(0.0), degenerate=True)
    log_probs = log_softmax_rows(flat)
    onehot = np.zeros(flat.shape)
    onehot[mask, flat_labels[mask]] = 1.0
    picked = mul(log_probs, Tensor(onehot)).sum()
    return LossTerm(mul(picked, -1.0 / count))


def dice_loss(logits: Tensor, labels: np.ndarray, ignore: int = 255) -> LossTerm:
    """Smoothed soft Dice, averaged over classes present in labels or argmax
    predictions (restricted to non-ignored pixels)."""
    flat, flat_labels, mask, n = _flatten_logits(logits, labels, ignore)
    count = int(mask.sum())
    if count == 0:
        return LossTerm(Tensor(0.0), degenerate=True)
    probs = softmax_rows(flat)
    mask_col = Tensor(mask.astype(np.float64).reshape(-1, 1))
    probs_kept = mul(probs, mask_col)

    onehot = np.zeros(flat.shape)
    onehot[mask, flat_labels[mask]] = 1.0
    gt = Tensor(onehot)

    overlap = mul(probs_kept, gt).sum(axis=0)
    pred_sum = probs_kept.sum(axis=0)
    gt_sum = gt.sum(axis=0)

    pred_classes = np.argmax(probs.data[mask], axis=1) if count else np.array([], int)
    present = np.zeros(n, dtype=bool)
    present[flat_labels[mask]] = True
    present[pred_classes] = True
    n_present = int(present.sum())

    numer = add(mul(overlap, 2.0), DICE_SMOOTHING)
    denom = add(add(pred_sum, gt_sum), DICE_SMOOTHING)
    per_class = sub(1.0, div(numer, denom))
    kept = mul(per_class, Tensor(present.astype(np.float64)))
    return LossTerm(mul(kept.sum(), 1.0 / n_present))


def contrastive_loss(d_batch: Tensor, epsilon: float = 1e-6) -> ContrastiveResult:
    """Compactness-over-dispersion ratio of a batch of dictionaries.

    d_batch is (B, N, C'). Class centers are per-class means over the
    batch; intra is the mean squared distance of each sample's embedding
    to its class center, inter the mean squared distance between distinct
    centers, and con = intra / (inter + epsilon). One sample gives intra
    exactly 0; one class leaves inter undefined, so con is 0 and the
    result is flagged degenerate in both cases.
    """
    if d_batch.ndim != 3:
        raise DimensionError(f"expected (B, N, C'), got {d_batch.shape}")
    b, n, _ = d_batch.shape
    if n == 0:
        raise ConfigError("contrastive loss needs at least one class")
    centers = d_batch.mean(axis=0)
    deviations = square(sub(d_batch, centers.reshape((1,) + centers.shape)))
    intra = mul(deviations.sum(), 1.0 / (b * n))
    if n < 2:
        zero = Tensor(0.0)
        return ContrastiveResult(zero, intra, Tensor(0.0), degenerate=True)
    pair_total = None
    for i in range(n):
        row_i = slice_axis(centers, 0, i, i + 1)
        for j in range(i + 1, n):
            row_j = slice_axis(centers, 0, j, j + 1)
            d2 = square(sub(row_i, row_j)).sum()
            pair_total = d2 if pair_total is None else add(pair_total, d2)
    inter = mul(pair_total, 2.0 / (n * (n - 1)))
    con = div(intra, add(inter, epsilon))
    return ContrastiveResult(con, intra, inter, degenerate=(b < 2))


def total_loss(
    static_logits: Tensor,
    dynamic_logits: Tensor,
    d_batch: Tensor,
    labels: np.ndarray,
    weights: LossWeights,
) -> LossBreakdown:
    """Assemble the dual-branch objective (see module docstring for order)."""
    ce_s = cross_entropy(static_logits, labels, weights.ignore_label)
    dice_s = dice_loss(static_logits, labels, weights.ignore_label)
    ce_d = cross_entropy(dynamic_logits, labels, weights.ignore_label)
    dice_d = dice_loss(dynamic_logits, labels, weights.ignore_label)
    contrast = contrastive_loss(d_batch, weights.epsilon)
    con_used = contrast.con if weights.use_contrastive else Tensor(0.0)

    static_sum = add(ce_s.value, dice_s.value)
    dynamic_sum = add(add(ce_d.value, dice_d.value), con_used)
    total = add(
        mul(static_sum, weights.lambda_static),
        mul(dynamic_sum, weights.lambda_dynamic),
    )
    return LossBreakdown(
        ce_static=ce_s.value,
        dice_static=dice_s.value,
        ce_dynamic=ce_d.value,
        dice_dynamic=dice_d.value,
        con=con_used,
        intra=contrast.intra,
        inter=contrast.inter,
        total=total,
        degenerate=ce_s.degenerate
        or dice_s.degenerate
        or ce_d.degenerate
        or dice_d.degenerate
        or contrast.degenerate,
    )
