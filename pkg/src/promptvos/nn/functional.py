"""Dense float64 building blocks: attention, layer norm, feed-forward.

All public operations assert that their outputs are finite, so NaN/Inf
escapes are caught at the op that produced them.  Tensors are plain
``torch.Tensor`` values in float64; sequences are ``(n, d)`` or batched
``(b, n, d)``.
"""

from __future__ import annotations

import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from promptvos.errors import DegenerateMaskError, ShapeError
from promptvos.nn.counter import _ACTIVE, tally_attention, tally_projection

FLOAT = torch.float64


def assert_finite(x: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise FloatingPointError(f"non-finite values in {what}")
    return x


def linear_apply(x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """``x @ weight.T (+ bias)``, charging rows*in*out MACs to any active counter."""
    if _ACTIVE:
        rows = x.numel() // x.shape[-1] if x.shape[-1] else 0
        tally_projection(rows * weight.shape[1] * weight.shape[0])
    return F.linear(x, weight, bias)


def layer_norm(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma/beta must have shape ({d},), got {tuple(gamma.shape)}/{tuple(beta.shape)}")
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    out = (x - mean) / torch.sqrt(var + eps) * gamma + beta
    return assert_finite(out, "layer_norm")


def gelu(x: torch.Tensor) -> torch.Tensor:
    """Exact (erf-based) GELU; smooth, so finite differences stay tight."""
    return F.gelu(x, approximate="none")


def ffn_apply(
    x: torch.Tensor,
    w1: torch.Tensor,
    b1: torch.Tensor,
    w2: torch.Tensor,
    b2: torch.Tensor,
) -> torch.Tensor:
    """Two-layer feed-forward ``w2 @ gelu(w1 @ x + b1) + b2``."""
    if w1.shape[1] != x.shape[-1]:
        raise ShapeError(f"ffn_apply: input width {x.shape[-1]} != w1 in-width {w1.shape[1]}")
    if w2.shape[1] != w1.shape[0]:
        raise ShapeError("ffn_apply: w1/w2 widths do not chain")
    hidden = gelu(linear_apply(x, w1, b1))
    return assert_finite(linear_apply(hidden, w2, b2), "ffn_apply")


class AttentionParams(nn.Module):
    """Query/key/value/output maps shared by self- and cross-attention.

    The same parameter value serves both attention flavours: self-attention
    is the ``query_src is kv_src`` case.  All four maps are bias-free so a
    zero key/value source contributes exactly zero to the output.
    """

    def __init__(self, dim: int, head_count: int):
        super().__init__()
        if dim % head_count != 0:
            raise ShapeError(f"model dim {dim} not divisible by head count {head_count}")
        self.dim = dim
        self.head_count = head_count
        self.query_map = nn.Linear(dim, dim, bias=False, dtype=FLOAT)
        self.key_map = nn.Linear(dim, dim, bias=False, dtype=FLOAT)
        self.value_map = nn.Linear(dim, dim, bias=False, dtype=FLOAT)
        self.out_map = nn.Linear(dim, dim, bias=False, dtype=FLOAT)

    def forward(
        self,
        query_src: torch.Tensor,
        kv_src: torch.Tensor,
        mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        return multi_head_attention(query_src, kv_src, self, mask)


def _check_mask(mask: torch.Tensor, n_q: int, n_kv: int) -> None:
    if mask.dtype != torch.bool:
        raise ShapeError("attention mask must be boolean")
    if mask.shape[-2:] != (n_q, n_kv):
        raise ShapeError(f"attention mask shape {tuple(mask.shape)} incompatible with ({n_q}, {n_kv})")
    if not mask.any(dim=-1).all():
        raise DegenerateMaskError("attention mask has a row with no allowed keys")


def multi_head_attention(
    query_src: torch.Tensor,
    kv_src: torch.Tensor,
    params: AttentionParams,
    mask: Optional[torch.Tensor] = None,
    need_weights: bool = False,
):
    """Scaled dot-product attention over unmasked keys.

    ``query_src``: ``(..., n_q, d)``; ``kv_src``: ``(..., n_kv, d)``;
    ``mask``: optional bool ``(n_q, n_kv)`` (broadcast over batch) or
    ``(b, n_q, n_kv)`` where True marks an allowed pair.  Masked logits are
    excluded before the softmax; a row with no allowed key is an error
    rather than a silent zero, so cube-partition bugs surface loudly.
    """
    d = params.dim
    if query_src.shape[-1] != d or kv_src.shape[-1] != d:
        raise ShapeError(
            f"attention width mismatch: query {query_src.shape[-1]}, keys {kv_src.shape[-1]}, params {d}"
        )
    if query_src.dim() != kv_src.dim():
        raise ShapeError("query and key/value sources must have the same rank")
    n_q, n_kv = query_src.shape[-2], kv_src.shape[-2]
    if mask is not None:
        _check_mask(mask, n_q, n_kv)

    h = params.head_count
    dh = d // h
    q = linear_apply(query_src, params.query_map.weight)
    k = linear_apply(kv_src, params.key_map.weight)
    v = linear_apply(kv_src, params.value_map.weight)

    # (..., n, d) -> (..., h, n, dh)
    def split(x: torch.Tensor, n: int) -> torch.Tensor:
        return x.reshape(*x.shape[:-2], n, h, dh).transpose(-3, -2)

    q, k, v = split(q, n_q), split(k, n_kv), split(v, n_kv)
    scores = q @ k.transpose(-2, -1) / math.sqrt(dh)

    if _ACTIVE:
        batch = query_src.numel() // (n_q * d) if n_q else 0
        if mask is None:
            tally_attention(2 * batch * n_q * n_kv * d)
        else:
            pairs = int(mask.sum())
            if mask.dim() == 2:
                pairs *= batch
            tally_attention(2 * pairs * d)
    if mask is not None:
        scores = scores.masked_fill(~mask.unsqueeze(-3), float("-inf"))

    weights = torch.softmax(scores, dim=-1)
    out = weights @ v
    out = out.transpose(-3, -2).reshape(*query_src.shape[:-2], n_q, d)
    out = linear_apply(out, params.out_map.weight)
    assert_finite(out, "multi_head_attention")
    if need_weights:
        return out, weights
    return out


class LayerNorm(nn.Module):
    """Layer norm with learnable scale/shift, backed by :func:`layer_norm`."""

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(dim, dtype=FLOAT))
        self.beta = nn.Parameter(torch.zeros(dim, dtype=FLOAT))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward(nn.Module):
    """Position-wise two-layer MLP with GELU."""

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden, dtype=FLOAT)
        self.fc2 = nn.Linear(hidden, dim, dtype=FLOAT)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return ffn_apply(x, self.fc1.weight, self.fc1.bias, self.fc2.weight, self.fc2.bias)


class TransformerLayer(nn.Module):
    """Pre-norm transformer layer.

    ``forward`` runs plain self-attention.  ``forward_injected`` adds a
    cross-attention term computed with the *same* attention parameters and
    first layer norm, so language injection introduces no weights of its
    own.  ``cross_forward`` swaps self-attention for cross-attention
    entirely, which is how a frozen layer is reused as a decoder.
    """

    def __init__(self, dim: int, head_count: int, ffn_hidden: int):
        super().__init__()
        self.ln1 = LayerNorm(dim)
        self.attn = AttentionParams(dim, head_count)
        self.ln2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_hidden)

    def _finish(self, y: torch.Tensor) -> torch.Tensor:
        return y + self.ffn(self.ln2(y))

    @staticmethod
    def _match_rank(kv: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        # a shared key/value sequence may serve a whole batch of queries
        if kv.dim() == like.dim() - 1:
            return kv.unsqueeze(0).expand(like.shape[0], -1, -1)
        return kv

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        y = x + self.attn(h, h)
        return self._finish(y)

    def forward_injected(self, x: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        cross = self.ln1(self._match_rank(kv, x))
        y = x + self.attn(h, h) + self.attn(h, cross)
        return self._finish(y)

    def cross_forward(self, x: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        cross = self.ln1(self._match_rank(kv, x))
        y = x + self.attn(self.ln1(x), cross)
        return self._finish(y)
