"""Multiply-accumulate counting for complexity audits.

Activate a counter with ``count_macs()`` and every attention core and
linear map executed inside the block reports its cost.  Attention cost is
pattern-aware: with a boolean mask only the allowed query/key pairs are
charged, which is what a block-sparse kernel would execute.  Softmax,
layer norm, residual adds and bias adds are free, matching the convention
used by the closed-form complexity formulas.
"""

from __future__ import annotations

from contextlib import contextmanager

_ACTIVE: list["MacCounter"] = []


class MacCounter:
    """Tallies multiply-accumulate operations by category."""

    def __init__(self) -> None:
        self.attention = 0
        self.projection = 0

    @property
    def total(self) -> int:
        return self.attention + self.projection

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"MacCounter(attention={self.attention}, projection={self.projection})"


@contextmanager
def count_macs():
    counter = MacCounter()
    _ACTIVE.append(counter)
    try:
        yield counter
    finally:
        _ACTIVE.remove(counter)


def tally_attention(macs: int) -> None:
    for counter in _ACTIVE:
        counter.attention += macs


def tally_projection(macs: int) -> None:
    for counter in _ACTIVE:
        counter.projection += macs
