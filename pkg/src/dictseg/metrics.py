"""Segmentation metrics: overall accuracy, per-class IoU and F1, and means.

Everything derives from an N x N confusion matrix with ground truth on
rows and predictions on columns. Classes that appear in neither the
labels nor the predictions are excluded from the means by default (a
documented, configurable choice).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


class ConfusionMatrix:
    """Integer co-occurrence counts; rows = ground truth, cols = prediction."""

    def __init__(self, n_classes: int):
        if n_classes < 1:
            raise DataError(f"need at least one class, got {n_classes}")
        self.n_classes = n_classes
        self.counts = np.zeros((n_classes, n_classes), dtype=np.int64)

    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.n_classes != self.n_classes:
            raise DataError("cannot merge confusion matrices of different sizes")
        self.counts += other.counts
        return self


def accumulate(
    cm: ConfusionMatrix, pred: np.ndarray, label: np.ndarray, ignore: int = 255
) -> ConfusionMatrix:
    """Count every non-ignored pixel into `cm` and return it."""
    pred = np.asarray(pred)
    label = np.asarray(label)
    if pred.shape != label.shape:
        raise DataError(f"prediction {pred.shape} and label {label.shape} differ")
    n = cm.n_classes
    mask = label != ignore
    lab = label[mask]
    prd = pred[mask]
    if lab.size and (lab.min() < 0 or lab.max() >= n):
        bad = np.argwhere((label != ignore) & ((label < 0) | (label >= n)))[0]
        raise DataError(
            f"label {label[tuple(bad)]} out of range at pixel {tuple(int(v) for v in bad)}"
        )
    if prd.size and (prd.min() < 0 or prd.max() >= n):
        bad = np.argwhere(mask & ((pred < 0) | (pred >= n)))[0]
        raise DataError(
            f"prediction {pred[tuple(bad)]} out of range at pixel {tuple(int(v) for v in bad)}"
        )
    flat = lab * n + prd
    cm.counts += np.bincount(flat, minlength=n * n).reshape(n, n)
    return cm


@dataclass
class MetricReport:
    oa: float
    iou: np.ndarray
    f1: np.ndarray
    included: np.ndarray
    miou: float
    mf1: float
    class_names: list = field(default_factory=list)

    def render_table(self) -> str:
        """Column-aligned text table, deterministic for identical inputs."""
        names = self.class_names or [f"class_{i}" for i in range(len(self.iou))]
        width = max(len(n) for n in names + ["mean", "class"])
        lines = [f"{'class':<{width}}  {'iou':>8}  {'f1':>8}  included"]
        for i, name in enumerate(names):
            inc = "yes" if self.included[i] else "no"
            lines.append(
                f"{name:<{width}}  {self.iou[i]:>8.4f}  {self.f1[i]:>8.4f}  {inc}"
            )
        lines.append(f"{'mean':<{width}}  {self.miou:>8.4f}  {self.mf1:>8.4f}")
        lines.append(f"overall_accuracy = {self.oa:.4f}")
        return "\n".join(lines)

    def render_kv(self) -> str:
        """Machine-readable `metric=value` lines, 4 decimal places."""
        lines = [f"oa={self.oa:.4f}", f"miou={self.miou:.4f}", f"mf1={self.mf1:.4f}"]
        for i in range(len(self.iou)):
            lines.append(f"iou_{i}={self.iou[i]:.4f}")
            lines.append(f"f1_{i}={self.f1[i]:.4f}")
        return "\n".join(lines)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total()
    if total == 0:
        raise DataError("overall accuracy undefined: confusion matrix is empty")
    return float(np.trace(cm.counts)) / total


def iou_f1(cm: ConfusionMatrix, include_empty: bool = False) -> MetricReport:
    """Per-class IoU/F1 plus their means over the included classes.

    A class with no ground-truth and no predicted pixels carries no
    signal; it is excluded from mIoU/mF1 unless `include_empty` is set,
    in which case it contributes 0.
    """
    if cm.total() == 0:
        raise DataError("metrics undefined: confusion matrix is empty")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    support = tp + fp + fn
    included = support > 0
    if include_empty:
        included = np.ones_like(included, dtype=bool)
    if not included.any():
        raise DataError("metrics undefined: every class is empty")

    iou = np.zeros(cm.n_classes)
    f1 = np.zeros(cm.n_classes)
    nonzero = support > 0
    iou[nonzero] = tp[nonzero] / support[nonzero]
    precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    pr = precision + recall
    f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)

    return MetricReport(
        oa=overall_accuracy(cm),
        iou=iou,
        f1=f1,
        included=included,
        miou=float(iou[included].mean()),
        mf1=float(f1[included].mean()),
    )
