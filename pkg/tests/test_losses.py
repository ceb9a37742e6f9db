"""Loss functions against hand computations and per-pixel loop oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dictseg.errors import ConfigError, DataError, DimensionError
from dictseg.gradcheck import check_gradients
from dictseg.losses import (
    DICE_SMOOTHING,
    LossWeights,
    contrastive_loss,
    cross_entropy,
    dice_loss,
    total_loss,
)
from dictseg.rng import Rng
from dictseg.tensor import Parameter, Tensor


def softmax_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def ce_oracle(logits: np.ndarray, labels: np.ndarray, ignore: int = 255) -> float:
    """Per-pixel negative log likelihood, summed the slow way."""
    n, h, w = logits.shape
    total, count = 0.0, 0
    for y in range(h):
        for x in range(w):
            c = labels[y, x]
            if c == ignore:
                continue
            total += -np.log(softmax_np(logits[:, y, x])[c])
            count += 1
    return total / count


def dice_oracle(logits: np.ndarray, labels: np.ndarray, ignore: int = 255) -> float:
    n, h, w = logits.shape
    probs = np.zeros((h, w, n))
    for y in range(h):
        for x in range(w):
            probs[y, x] = softmax_np(logits[:, y, x])
    keep = labels != ignore
    present = set(np.unique(labels[keep])) | set(np.unique(probs[keep].argmax(-1)))
    total = 0.0
    for c in sorted(present):
        p_c = probs[..., c][keep]
        g_c = (labels[keep] == c).astype(float)
        total += 1 - (2 * (p_c * g_c).sum() + DICE_SMOOTHING) / (
            p_c.sum() + g_c.sum() + DICE_SMOOTHING
        )
    return total / len(present)


# ------------------------------------------------------------- cross-entropy


def test_ce_uniform_logits_is_log_n():
    logits = Tensor(np.zeros((4, 3, 3)))
    labels = Rng(0).integers(0, 4, (3, 3))
    term = cross_entropy(logits, labels)
    np.testing.assert_allclose(term.value.data, np.log(4.0), rtol=1e-15)


def test_ce_saturated_correct_vanishes():
    labels = Rng(1).integers(0, 3, (4, 4))
    logits = np.full((3, 4, 4), -40.0)
    for y in range(4):
        for x in range(4):
            logits[labels[y, x], y, x] = 40.0
    assert cross_entropy(Tensor(logits), labels).value.data < 1e-6


def test_ce_matches_loop_oracle():
    rng = Rng(2)
    logits = rng.normal((3, 2, 2)) * 2
    labels = rng.integers(0, 3, (2, 2))
    term = cross_entropy(Tensor(logits), labels)
    np.testing.assert_allclose(term.value.data, ce_oracle(logits, labels), rtol=1e-12)


def test_ce_batched_matches_loop_oracle():
    rng = Rng(3)
    logits = rng.normal((2, 3, 2, 2))
    labels = rng.integers(0, 3, (2, 2, 2))
    term = cross_entropy(Tensor(logits), labels)
    # The batched mean pools every pixel of every sample equally.
    per_pixel = [
        -np.log(softmax_np(logits[b, :, y, x])[labels[b, y, x]])
        for b in range(2)
        for y in range(2)
        for x in range(2)
    ]
    np.testing.assert_allclose(term.value.data, np.mean(per_pixel), rtol=1e-12)


def test_ce_ignores_ignore_pixels():
    logits = Rng(4).normal((2, 2, 2))
    labels = np.array([[0, 255], [255, 1]])
    term = cross_entropy(Tensor(logits), labels)
    kept = (
        -np.log(softmax_np(logits[:, 0, 0])[0]) - np.log(softmax_np(logits[:, 1, 1])[1])
    ) / 2
    np.testing.assert_allclose(term.value.data, kept, rtol=1e-12)
    assert not term.degenerate


def test_ce_all_ignored_is_degenerate_zero():
    term = cross_entropy(Tensor(np.zeros((2, 2, 2))), np.full((2, 2), 255))
    assert term.value.data == 0.0
    assert term.degenerate


def test_ce_nonnegative_property():
    for seed in range(5):
        rng = Rng(seed)
        logits = rng.normal((3, 4, 4)) * 5
        labels = rng.integers(0, 3, (4, 4))
        assert cross_entropy(Tensor(logits), labels).value.data >= 0.0


def test_ce_bad_label_names_pixel():
    with pytest.raises(DataError, match=r"label 9 out of range at pixel \(1, 0\)"):
        cross_entropy(Tensor(np.zeros((2, 2, 2))), np.array([[0, 1], [9, 0]]))


def test_ce_shape_mismatch():
    with pytest.raises(DimensionError):
        cross_entropy(Tensor(np.zeros((2, 2, 2))), np.zeros((3, 3), int))
    with pytest.raises(DimensionError):
        cross_entropy(Tensor(np.zeros((2, 2))), np.zeros((2, 2), int))


def test_ce_gradients():
    rng = Rng(5)
    logits = Parameter("logits", rng.normal((3, 2, 2)))
    labels = rng.integers(0, 3, (2, 2))
    worst = check_gradients(
        lambda: cross_entropy(logits, labels).value, [logits]
    )
    assert worst < 1e-6


# ---------------------------------------------------------------------- dice


def test_dice_saturated_correct_near_zero():
    labels = Rng(6).integers(0, 3, (4, 4))
    logits = np.full((3, 4, 4), -40.0)
    for y in range(4):
        for x in range(4):
            logits[labels[y, x], y, x] = 40.0
    # Smoothing keeps the optimum slightly above exact zero.
    assert dice_loss(Tensor(logits), labels).value.data < 1e-3


def test_dice_disjoint_hand_case():
    # 8 pixels, two classes; prediction and truth disjoint 4+4. Per class:
    # overlap 0, pred sum 4, gt sum 4 -> d = 1 - 1/9.
    labels = np.array([[0, 0, 0, 0, 1, 1, 1, 1]])
    logits = np.full((2, 1, 8), -40.0)
    logits[1, 0, :4] = 40.0
    logits[0, 0, 4:] = 40.0
    term = dice_loss(Tensor(logits), labels)
    np.testing.assert_allclose(term.value.data, 1.0 - 1.0 / 9.0, rtol=1e-12)


def test_dice_matches_loop_oracle():
    rng = Rng(7)
    logits = rng.normal((3, 3, 3)) * 2
    labels = rng.integers(0, 3, (3, 3))
    term = dice_loss(Tensor(logits), labels)
    np.testing.assert_allclose(term.value.data, dice_oracle(logits, labels), rtol=1e-12)


def test_dice_oracle_with_ignore():
    rng = Rng(8)
    logits = rng.normal((3, 4, 4))
    labels = rng.integers(0, 3, (4, 4))
    labels[0, :] = 255
    term = dice_loss(Tensor(logits), labels)
    np.testing.assert_allclose(term.value.data, dice_oracle(logits, labels), rtol=1e-12)


def test_dice_bounded():
    for seed in range(5):
        rng = Rng(seed)
        logits = rng.normal((4, 4, 4)) * 10
        labels = rng.integers(0, 4, (4, 4))
        value = dice_loss(Tensor(logits), labels).value.data
        assert 0.0 <= value <= 1.0


def test_dice_all_ignored_is_degenerate_zero():
    term = dice_loss(Tensor(np.zeros((2, 2, 2))), np.full((2, 2), 255))
    assert term.value.data == 0.0 and term.degenerate


def test_dice_gradients():
    rng = Rng(9)
    logits = Parameter("logits", rng.normal((3, 2, 2)))
    labels = rng.integers(0, 3, (2, 2))
    worst = check_gradients(lambda: dice_loss(logits, labels).value, [logits])
    assert worst < 1e-6


# --------------------------------------------------------------- contrastive


def test_contrastive_identical_samples_zero():
    d = Rng(10).normal((2, 3))
    result = contrastive_loss(Tensor(np.stack([d, d])))
    assert result.intra.data == 0.0
    assert result.con.data == 0.0
    assert not result.degenerate


def test_contrastive_single_sample_degenerate():
    # B=1, N=2, centers 2 apart: intra 0, inter 4, con 0 (flagged).
    d = np.array([[[0.0, 0.0], [2.0, 0.0]]])
    result = contrastive_loss(Tensor(d))
    assert result.intra.data == 0.0
    np.testing.assert_allclose(result.inter.data, 4.0)
    assert result.con.data == 0.0
    assert result.degenerate


def test_contrastive_hand_case():
    # mu = [[1,0],[3,0]]; intra = (1+1+1+1)/4 = 1; inter = 4.
    d = np.array(
        [[[0.0, 0.0], [2.0, 0.0]], [[2.0, 0.0], [4.0, 0.0]]]
    )
    result = contrastive_loss(Tensor(d), epsilon=1e-6)
    np.testing.assert_allclose(result.intra.data, 1.0, rtol=1e-15)
    np.testing.assert_allclose(result.inter.data, 4.0, rtol=1e-15)
    np.testing.assert_allclose(result.con.data, 1.0 / (4.0 + 1e-6), rtol=1e-15)


def test_contrastive_single_class_degenerate():
    result = contrastive_loss(Tensor(Rng(11).normal((3, 1, 4))))
    assert result.con.data == 0.0
    assert result.inter.data == 0.0
    assert result.degenerate


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.floats(-100, 100))
def test_contrastive_translation_invariant(seed, shift):
    d = Rng(seed).normal((3, 4, 5))
    base = contrastive_loss(Tensor(d))
    moved = contrastive_loss(Tensor(d + shift))
    assert abs(moved.intra.data - base.intra.data) < 1e-9
    assert abs(moved.inter.data - base.inter.data) < 1e-9
    assert abs(moved.con.data - base.con.data) < 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), s=st.floats(0.1, 10.0))
def test_contrastive_scale_leaves_con_near_invariant(seed, s):
    eps = 1e-6
    d = Rng(seed).normal((3, 4, 5))
    base = contrastive_loss(Tensor(d), eps)
    scaled = contrastive_loss(Tensor(d * s), eps)
    np.testing.assert_allclose(scaled.intra.data, s * s * base.intra.data, rtol=1e-9)
    np.testing.assert_allclose(scaled.inter.data, s * s * base.inter.data, rtol=1e-9)
    # con moves only through the epsilon in the denominator.
    intra, inter = base.intra.data, base.inter.data
    bound = intra * eps * abs(s * s - 1.0) / ((inter + eps) * (s * s * inter + eps))
    assert abs(scaled.con.data - base.con.data) <= bound * (1 + 1e-9) + 1e-15


def test_contrastive_gradients_through_quotient():
    d = Parameter("d", Rng(12).normal((2, 3, 4)))
    worst = check_gradients(lambda: contrastive_loss(d).con, [d])
    assert worst < 1e-6


def test_contrastive_shape_errors():
    with pytest.raises(DimensionError):
        contrastive_loss(Tensor(np.zeros((2, 3))))
    with pytest.raises(ConfigError):
        contrastive_loss(Tensor(np.zeros((2, 0, 3))))


# ---------------------------------------------------------------------- total


def make_case(seed: int = 13, b: int = 2, n: int = 3, hw: int = 4):
    rng = Rng(seed)
    static = rng.normal((b, n, hw, hw))
    dynamic = rng.normal((b, n, hw, hw))
    d_batch = rng.normal((b, n, 5))
    labels = rng.integers(0, n, (b, hw, hw))
    return Tensor(static), Tensor(dynamic), Tensor(d_batch), labels


def test_total_identity_bitwise():
    static, dynamic, d_batch, labels = make_case()
    weights = LossWeights()
    breakdown = total_loss(static, dynamic, d_batch, labels, weights)
    expected = (breakdown.ce_static.data + breakdown.dice_static.data) * 0.4 + (
        (breakdown.ce_dynamic.data + breakdown.dice_dynamic.data) + breakdown.con.data
    ) * 1.0
    assert breakdown.total.data == expected


def test_total_arithmetic_of_defaults():
    # Component values of 1 each give 0.4*2 + 1*3 = 3.8 under the defaults.
    assert 0.4 * (1 + 1) + 1.0 * ((1 + 1) + 1) == 3.8


def test_total_zero_static_weight_is_dynamic_branch():
    static, dynamic, d_batch, labels = make_case()
    weights = LossWeights(lambda_static=0.0)
    breakdown = total_loss(static, dynamic, d_batch, labels, weights)
    dynamic_only = (
        breakdown.ce_dynamic.data + breakdown.dice_dynamic.data
    ) + breakdown.con.data
    assert breakdown.total.data == dynamic_only


def test_total_contrastive_flag_off():
    static, dynamic, d_batch, labels = make_case()
    on = total_loss(static, dynamic, d_batch, labels, LossWeights())
    off = total_loss(
        static, dynamic, d_batch, labels, LossWeights(use_contrastive=False)
    )
    assert off.con.data == 0.0
    assert on.con.data > 0.0
    # The raw distances are still reported for diagnostics.
    assert off.intra.data == on.intra.data
    assert off.inter.data == on.inter.data
    assert off.total.data < on.total.data


def test_total_degenerate_propagates():
    static, dynamic, d_batch, labels = make_case()
    breakdown = total_loss(
        static, dynamic, d_batch, np.full_like(labels, 255), LossWeights()
    )
    assert breakdown.degenerate


def test_total_gradients_through_everything():
    rng = Rng(14)
    static = Parameter("s", rng.normal((1, 2, 2, 2)))
    dynamic = Parameter("d", rng.normal((1, 2, 2, 2)))
    d_batch = Parameter("dict", rng.normal((2, 2, 3)))
    labels = rng.integers(0, 2, (1, 2, 2))
    worst = check_gradients(
        lambda: total_loss(static, dynamic, d_batch, labels, LossWeights()).total,
        [static, dynamic, d_batch],
    )
    assert worst < 1e-6


def test_weights_validation():
    with pytest.raises(ConfigError):
        LossWeights(lambda_static=-0.1)
    with pytest.raises(ConfigError):
        LossWeights(epsilon=0.0)
