"""AdamW with decoupled weight decay.

Hand-rolled instead of ``torch.optim.AdamW`` so the freezing contract is
explicit: frozen parameters (``requires_grad=False``) are rejected at
construction, and a managed parameter whose gradient is missing at step
time raises instead of being silently skipped.
"""

from __future__ import annotations

from typing import Iterable, Tuple

import torch
import torch.nn as nn

from promptvos.errors import MissingGradientError


def adamw_update(
    value: torch.Tensor,
    grad: torch.Tensor,
    m: torch.Tensor,
    v: torch.Tensor,
    step_index: int,
    lr: float,
    weight_decay: float,
    betas: Tuple[float, float],
    eps: float,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """One decoupled-weight-decay update; returns (value, m, v).

    ``step_index`` is 1-based, matching the bias-correction exponents.
    """
    b1, b2 = betas
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**step_index)
    v_hat = v / (1.0 - b2**step_index)
    value = value - lr * weight_decay * value - lr * m_hat / (torch.sqrt(v_hat) + eps)
    return value, m, v


class AdamW:
    def __init__(
        self,
        params: Iterable[nn.Parameter],
        lr: float = 5e-5,
        weight_decay: float = 5e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = list(params)
        for p in self.params:
            if not p.requires_grad:
                raise ValueError("frozen parameter handed to the optimizer")
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.step_index = 0
        self._m = [torch.zeros_like(p) for p in self.params]
        self._v = [torch.zeros_like(p) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        self.step_index += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise MissingGradientError(f"parameter {i} has no gradient at step {self.step_index}")
            new_value, self._m[i], self._v[i] = adamw_update(
                p, p.grad, self._m[i], self._v[i],
                self.step_index, self.lr, self.weight_decay, self.betas, self.eps,
            )
            p.copy_(new_value)
