"""Adam optimizer over lists of named parameters.

State lives in a plain dataclass so checkpoints can serialize it if needed,
and so tests can replay the update recurrence step by step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus the shared step count."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.params = list(params)
        self.state = AdamState(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            first_moment=[np.zeros_like(p.data) for p in self.params],
            second_moment=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        """Apply one Adam update using each parameter's ``.grad``."""
        s = self.state
        s.step_count += 1
        t = s.step_count
        bias1 = 1.0 - s.beta1 ** t
        bias2 = 1.0 - s.beta2 ** t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            s.first_moment[i] = s.beta1 * s.first_moment[i] + (1.0 - s.beta1) * g
            s.second_moment[i] = s.beta2 * s.second_moment[i] + (1.0 - s.beta2) * g * g
            m_hat = s.first_moment[i] / bias1
            v_hat = s.second_moment[i] / bias2
            p.data -= s.lr * m_hat / (np.sqrt(v_hat) + s.epsilon)


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              step_count: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One functional Adam update; returns (new_param, new_m, new_v).

    ``step_count`` is the 1-based index of this update.
    """
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step_count)
    v_hat = v / (1.0 - beta2 ** step_count)
    return param - lr * m_hat / (np.sqrt(v_hat) + epsilon), m, v
