"""Adam over named parameter groups with support for row remapping.

Primitives come and go during densification; optimizer moments follow the
surviving rows and fresh rows start from zero state.
"""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, shapes: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-15):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros(shape) for name, shape in shapes.items()}
        self.v = {name: np.zeros(shape) for name, shape in shapes.items()}

    def step(self, params: dict, grads: dict, lrs: dict):
        """One update, in place on the arrays in ``params``."""
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lrs[name] * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def remap(self, index_map: np.ndarray):
        """Reindex rows after densify/prune.

        index_map[j] is the old row feeding new row j, or -1 for a freshly
        created primitive (zero moments).
        """
        keep = index_map >= 0
        src = index_map[keep]
        for name in self.m:
            old_m, old_v = self.m[name], self.v[name]
            shape = (index_map.size,) + old_m.shape[1:]
            new_m = np.zeros(shape)
            new_v = np.zeros(shape)
            new_m[keep] = old_m[src]
            new_v[keep] = old_v[src]
            self.m[name] = new_m
            self.v[name] = new_v


def position_lr(iteration: int, lr_init: float, lr_final: float, total: int) -> float:
    """Exponential decay from lr_init to lr_final across the schedule."""
    if total <= 0:
        return lr_init
    frac = min(max(iteration / total, 0.0), 1.0)
    return float(lr_init * (lr_final / lr_init) ** frac)
