"""Adam in ascent form (the objective is maximized)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))


@dataclass
class Adam:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def step(self, params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
        """One bias-corrected ascent step; mutates state, returns new params."""
        state.t += 1
        state.m = self.beta1 * state.m + (1.0 - self.beta1) * grad
        state.v = self.beta2 * state.v + (1.0 - self.beta2) * grad * grad
        m_hat = state.m / (1.0 - self.beta1**state.t)
        v_hat = state.v / (1.0 - self.beta2**state.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
