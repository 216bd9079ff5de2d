"""Adam optimizer and cosine learning-rate schedule."""
from __future__ import annotations

import math

import numpy as np

from ..errors import MissingGradient
from .nn import ParameterStore


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Cosine annealing from ``base_lr`` at step 0 to 0 at ``total_steps``."""
    frac = min(max(step, 0), total_steps) / total_steps
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


class Adam:
    """Standard Adam with bias correction, acting on a ParameterStore.

    Moment accumulators live in the store so checkpoints capture them.
    """

    def __init__(self, store: ParameterStore, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, lr: float) -> None:
        store = self.store
        store.step += 1
        t = store.step
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in store.params.items():
            if p.grad is None:
                raise MissingGradient(f"parameter {name} has no gradient")
            g = p.grad
            if name not in store.moments:
                store.moments[name] = (np.zeros_like(p.data), np.zeros_like(p.data))
            m, v = store.moments[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
