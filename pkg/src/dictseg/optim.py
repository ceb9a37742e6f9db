"""Adaptive-moment optimizer with decoupled weight decay, cosine schedule.

Update per parameter p with gradient g at step t (1-based):

    m <- beta1*m + (1-beta1)*g
    v <- beta2*v + (1-beta2)*g*g
    p <- p - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p)

with bias-corrected mhat = m/(1-beta1^t), vhat = v/(1-beta2^t). The decay
acts on the parameter directly (decoupled), not through the gradient.
State updates run in the fixed parameter registration order, so training
is bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .tensor import Parameter


class AdamW:
    def __init__(
        self,
        params: list[Parameter],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ConfigError(f"betas must lie in [0,1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ConfigError(f"eps must be positive, got {eps}")
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / correction1
            vhat = v / correction2
            p.data -= lr * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p.data)


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Rescale all gradients jointly so their global L2 norm is <= max_norm.

    Returns the pre-clip norm. The contrastive term is a barrier against
    dictionary-row collapse: its gradient diverges as rows approach each
    other, which is the desired repulsion but at a magnitude that would
    destroy the parameters in one step. Clipping keeps the direction and
    caps the step size. max_norm <= 0 disables clipping.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine annealing from base_lr at step 0 to exactly 0 at the last step.

    lr(t) = 0.5 * base_lr * (1 + cos(pi * t / (T-1))) for T > 1; a single
    planned step trains at base_lr.
    """
    if total_steps <= 1:
        return base_lr
    t = min(max(step, 0), total_steps - 1)
    return 0.5 * base_lr * (1.0 + np.cos(np.pi * t / (total_steps - 1)))
