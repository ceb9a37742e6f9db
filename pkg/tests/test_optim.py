"""Optimizer update rule against a hand-stepped reference; schedule endpoints."""

import numpy as np
import pytest

from dictseg.errors import ConfigError
from dictseg.optim import AdamW, cosine_lr
from dictseg.rng import Rng
from dictseg.tensor import Parameter


def reference_adamw(p0, grads, lr, beta1, beta2, eps, wd):
    """Independent re-derivation of the update for a scalar trajectory."""
    p = p0
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        p = p - lr * (mhat / (np.sqrt(vhat) + eps) + wd * p)
    return p


def test_matches_scalar_reference():
    p = Parameter("p", np.array([1.5]))
    opt = AdamW([p], beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01)
    grads = [0.3, -0.5, 1.2, 0.0, 0.7]
    for g in grads:
        p.grad = np.array([g])
        opt.step(lr=0.1)
    expected = reference_adamw(1.5, grads, 0.1, 0.9, 0.999, 1e-8, 0.01)
    np.testing.assert_allclose(p.data, [expected], rtol=1e-12)


def test_zero_lr_is_identity():
    p = Parameter("p", Rng(0).normal((3, 3)))
    before = p.data.copy()
    opt = AdamW([p])
    p.grad = np.ones_like(p.data)
    opt.step(lr=0.0)
    np.testing.assert_array_equal(p.data, before)


def test_missing_gradient_decays_only():
    # No gradient: the moment update sees g=0, so only decay moves p.
    p = Parameter("p", np.array([2.0]))
    opt = AdamW([p], weight_decay=0.1)
    opt.step(lr=0.5)
    np.testing.assert_allclose(p.data, [2.0 * (1 - 0.5 * 0.1)])


def test_decay_is_decoupled_from_gradient():
    # With weight_decay=0 a zero gradient must not move the parameter.
    p = Parameter("p", np.array([3.0]))
    opt = AdamW([p], weight_decay=0.0)
    p.grad = np.zeros(1)
    opt.step(lr=1.0)
    np.testing.assert_array_equal(p.data, [3.0])


def test_first_step_size_is_lr_scaled_sign():
    # Bias correction makes the first update mhat/sqrt(vhat) = sign(g).
    p = Parameter("p", np.zeros(3))
    opt = AdamW([p], weight_decay=0.0)
    p.grad = np.array([0.5, -2.0, 1e-3])
    opt.step(lr=0.01)
    np.testing.assert_allclose(p.data, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_update_order_is_registration_order():
    # Two parameter registrations, same seeds: trajectories must be
    # reproducible across optimizer instances.
    def run():
        a = Parameter("a", np.ones(2))
        b = Parameter("b", np.ones(2))
        opt = AdamW([a, b])
        for step in range(3):
            a.grad = np.full(2, 0.1 * (step + 1))
            b.grad = np.full(2, -0.2)
            opt.step(lr=0.05)
        return a.data.copy(), b.data.copy()

    first, second = run(), run()
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])


def test_zero_grad_clears():
    p = Parameter("p", np.ones(2))
    p.grad = np.ones(2)
    AdamW([p]).zero_grad()
    assert p.grad is None


def test_beta_validation():
    p = Parameter("p", np.ones(1))
    with pytest.raises(ConfigError):
        AdamW([p], beta1=1.0)
    with pytest.raises(ConfigError):
        AdamW([p], beta2=-0.1)
    with pytest.raises(ConfigError):
        AdamW([p], eps=0.0)


# ----------------------------------------------------------------- schedule


def test_cosine_endpoints():
    base = 1e-4
    total = 300
    assert cosine_lr(0, total, base) == base
    assert cosine_lr(total - 1, total, base) <= 1e-9
    assert cosine_lr(total - 1, total, base) >= 0.0


def test_cosine_midpoint_half():
    np.testing.assert_allclose(cosine_lr(100, 201, 2e-3), 1e-3, rtol=1e-12)


def test_cosine_monotone_decreasing():
    values = [cosine_lr(t, 50, 1.0) for t in range(50)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_cosine_clamps_out_of_range_steps():
    assert cosine_lr(-5, 10, 1.0) == cosine_lr(0, 10, 1.0)
    assert cosine_lr(99, 10, 1.0) == cosine_lr(9, 10, 1.0)


def test_cosine_single_step_runs_at_base():
    assert cosine_lr(0, 1, 3e-4) == 3e-4
