"""Central-difference gradient oracle, independent of autograd.

The checker evaluates the loss twice at the base point first; if the two
values are not bit-identical the loss is non-deterministic and the check
refuses to run.  For each trainable parameter a subset of coordinates is
probed (the largest-|grad| ones plus seeded random ones, or all of them
when ``max_entries_per_param`` is None) and the relative error

    ||g_ad - g_fd|| / max(||g_fd||, 1e-12)

over the probed coordinates is reported.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Tuple

import torch
import torch.nn as nn

from promptvos.errors import DeterminismError


@dataclass
class GradCheckEntry:
    name: str
    rel_error: float
    checked: int
    grad_norm: float


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    def passed(self, tol: float) -> bool:
        return all(e.rel_error < tol for e in self.entries)

    def lines(self) -> list[str]:
        width = max((len(e.name) for e in self.entries), default=4)
        return [
            f"{e.name:<{width}}  rel_err={e.rel_error:.3e}  checked={e.checked}  |grad|={e.grad_norm:.3e}"
            for e in self.entries
        ]


def _pick_coords(grad: torch.Tensor, limit: int, rng: random.Random) -> list[int]:
    n = grad.numel()
    if limit >= n:
        return list(range(n))
    half = max(limit // 2, 1)
    by_mag = torch.argsort(grad.abs().flatten(), descending=True)[:half].tolist()
    picked = list(dict.fromkeys(by_mag))
    pool = [i for i in range(n) if i not in set(picked)]
    picked.extend(rng.sample(pool, min(limit - len(picked), len(pool))))
    return picked


def finite_diff_grad_check(
    loss_fn: Callable[[], torch.Tensor],
    named_params: Iterable[Tuple[str, nn.Parameter]],
    h: float = 1e-4,
    max_entries_per_param: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central differences.

    Frozen parameters (``requires_grad=False``) are excluded from the
    report entirely.  ``h`` must lie in [1e-6, 1e-3].
    """
    if not (1e-6 <= h <= 1e-3):
        raise ValueError(f"finite-difference step h={h} outside [1e-6, 1e-3]")
    pairs = [(name, p) for name, p in named_params if p.requires_grad]

    base = loss_fn()
    again = loss_fn()
    if base.item() != again.item():
        raise DeterminismError(f"loss is not deterministic: {base.item()!r} vs {again.item()!r}")

    grads = torch.autograd.grad(loss_fn(), [p for _, p in pairs], allow_unused=False)

    rng = random.Random(seed)
    report = GradCheckReport()
    for (name, param), g_ad in zip(pairs, grads):
        limit = param.numel() if max_entries_per_param is None else max_entries_per_param
        coords = _pick_coords(g_ad, limit, rng)
        flat = param.data.view(-1)
        diffs = torch.zeros(len(coords), dtype=param.dtype)
        with torch.no_grad():
            for j, idx in enumerate(coords):
                keep = flat[idx].item()
                flat[idx] = keep + h
                up = loss_fn().item()
                flat[idx] = keep - h
                down = loss_fn().item()
                flat[idx] = keep
                diffs[j] = (up - down) / (2.0 * h)
        ad = g_ad.flatten()[coords]
        denom = max(float(diffs.norm()), 1e-12)
        rel = float((ad - diffs).norm()) / denom
        report.entries.append(GradCheckEntry(name, rel, len(coords), float(g_ad.norm())))
    return report
