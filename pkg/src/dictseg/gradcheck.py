"""Finite-difference verification of every backward pass.

The oracle is the central difference (L(p+eps) - L(p-eps)) / (2*eps),
compared entry by entry against the analytic gradient with the error
measure |analytic - numeric| / max(1, |analytic|, |numeric|).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .rng import Rng
from .tensor import Parameter, Tensor, no_grad


def check_gradients(
    loss_fn,
    params: list[Parameter],
    eps: float = 1e-5,
    max_entries_per_param: int | None = None,
    rng: Rng | None = None,
) -> float:
    """Return the worst relative error between analytic and numeric gradients.

    `loss_fn` must evaluate the scalar loss from the current parameter
    values and is called repeatedly while entries are perturbed in place.
    By default every parameter entry is probed; `max_entries_per_param`
    caps the probes per parameter (chosen deterministically, from `rng`
    when given) so large models stay within a time budget.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigError(f"eps must lie in [1e-7, 1e-3], got {eps}")

    loss = loss_fn()
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise DimensionError("loss_fn must return a scalar tensor")
    for p in params:
        p.zero_grad()
    loss.backward()
    analytic = {
        p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
        for p in params
    }

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries_per_param is None or n <= max_entries_per_param:
            entries = range(n)
        elif rng is None:
            stride = max(1, n // max_entries_per_param)
            entries = range(0, n, stride)[:max_entries_per_param]
        else:
            picks = rng.derive(f"gradcheck.{p.name}").permutation(n)
            entries = sorted(int(i) for i in picks[:max_entries_per_param])
        grad_flat = analytic[p.name].reshape(-1)
        for i in entries:
            saved = flat[i]
            with no_grad():
                flat[i] = saved + eps
                plus = loss_fn().item()
                flat[i] = saved - eps
                minus = loss_fn().item()
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * eps)
            a = grad_flat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst
