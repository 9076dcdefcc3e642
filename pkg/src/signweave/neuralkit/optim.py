"""AdamW optimizer with decoupled weight decay, plus a cosine LR schedule."""
from __future__ import annotations

import numpy as np

from .nn import ParameterSet


class AdamW:
    def __init__(
        self,
        params: ParameterSet,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {name: np.zeros_like(params[name].data, dtype=np.float64) for name in params.names()}
        self._v = {name: np.zeros_like(params[name].data, dtype=np.float64) for name in params.names()}

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.step_count += 1
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for name in self.params.names():
            p = self.params[name]
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            new = p.data.astype(np.float64) - lr * update
            if self.weight_decay > 0.0:
                new -= lr * self.weight_decay * p.data.astype(np.float64)
            p.data = new.astype(p.data.dtype)


def cosine_lr(step: int, total_steps: int, base_lr: float, min_lr: float = 0.0) -> float:
    if total_steps <= 1:
        return base_lr
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + np.cos(np.pi * frac))
