"""Parameter update rules: plain SGD (optional momentum) and Adam.

Optimizers mutate parameter arrays in place, keyed by parameter name, so a
network's params() dict (which holds references) is updated directly.
Nonfinite gradients abort with the offending parameter's name.
"""

from __future__ import annotations

import numpy as np


class OptimizerError(RuntimeError):
    pass


def _check_finite(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"nonfinite gradient for parameter {name!r}")


class Sgd:
    def __init__(self, lr: float = 0.01, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        _check_finite(grads)
        for name, p in params.items():
            g = grads[name]
            if self.momentum > 0.0:
                v = self._velocity.setdefault(name, np.zeros_like(p))
                v *= self.momentum
                v += g
                g = v
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        _check_finite(grads)
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g**2
            m_hat = m / (1.0 - b1**self._t)
            v_hat = v / (1.0 - b2**self._t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
