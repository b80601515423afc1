"""Nesterov-momentum Adam (Nadam) updates.

Per step with gradient g:

    m <- b1*m + (1-b1)*g
    v <- b2*v + (1-b2)*g^2
    m_hat = m / (1 - b1^t),  v_hat = v / (1 - b2^t)
    theta <- theta - lr * (b1*m_hat + (1-b1)*g / (1 - b1^t)) / (sqrt(v_hat) + eps)

The look-ahead term replaces plain Adam's m_hat numerator with the Nesterov
combination of momentum and the current gradient.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, NumericalError


class Nadam:
    """Keeps per-parameter first/second moments and a shared step counter.

    Use separate instances per network so that freezing one never advances
    the other's moments.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 0.005,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        if not 0 < beta1 < 1 or not 0 < beta2 < 1:
            raise ContractError("beta coefficients must lie in (0, 1)")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        """Apply one update to every parameter from its ``grad`` buffer.

        Non-finite gradients abort before any parameter is touched.
        """
        grads = []
        for p in self.params:
            if p.grad is None:
                raise ContractError("parameter has no gradient; run backward first")
            if not np.all(np.isfinite(p.grad)):
                raise NumericalError("non-finite gradient; step aborted, "
                                     "parameters untouched")
            grads.append(p.grad)

        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bias1
            v_hat = v / bias2
            lookahead = self.beta1 * m_hat + (1.0 - self.beta1) * g / bias1
            p.values -= self.lr * lookahead / (np.sqrt(v_hat) + self.eps)

    def state_snapshot(self) -> tuple:
        """Copy of (t, m, v) for freeze-invariance checks."""
        return (self.t,
                [m.copy() for m in self.m],
                [v.copy() for v in self.v])
