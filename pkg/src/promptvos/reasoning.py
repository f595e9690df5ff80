"""Spatial-temporal reasoning stack.

Each of the N repeats runs a sparse-attention encoder block over the
space-time token grid (unshifted pass, then cyclically shifted pass for
the windowed variants; the global variant is a single unmasked pass) and
a cross-modal decoder block whose queries attend jointly to the projected
word tokens and the projected shallow patch tokens of all frames.
"""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn as nn

from promptvos.config import ModelConfig
from promptvos.cubes import AttentionPattern, CubeSpec, build_pattern
from promptvos.errors import ShapeError
from promptvos.nn.functional import FLOAT, AttentionParams, FeedForward, LayerNorm, linear_apply


class SpaceTimeBlock(nn.Module):
    """Masked self-attention over the flattened (clip, H, W) token grid."""

    def __init__(self, cfg: ModelConfig, two_pass: bool):
        super().__init__()
        d = cfg.fusion_dim
        self.two_pass = two_pass
        self.ln_a = LayerNorm(d)
        self.attn_a = AttentionParams(d, cfg.str_heads)
        if two_pass:
            self.ln_b = LayerNorm(d)
            self.attn_b = AttentionParams(d, cfg.str_heads)
        self.ln_f = LayerNorm(d)
        self.ffn = FeedForward(d, cfg.ffn_ratio * d)

    def forward(
        self,
        x: torch.Tensor,
        pattern: Optional[AttentionPattern],
        shifted: Optional[AttentionPattern],
    ) -> torch.Tensor:
        mask = pattern.mask if pattern is not None else None
        h = self.ln_a(x)
        x = x + self.attn_a(h, h, mask)
        if self.two_pass:
            h = self.ln_b(x)
            x = x + self.attn_b(h, h, shifted.mask if shifted is not None else None)
        return x + self.ffn(self.ln_f(x))


class CrossModalBlock(nn.Module):
    """Grid tokens attend to the combined language + shallow-vision keys."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.fusion_dim
        self.ln_q = LayerNorm(d)
        self.attn = AttentionParams(d, cfg.str_heads)
        self.ln_f = LayerNorm(d)
        self.ffn = FeedForward(d, cfg.ffn_ratio * d)

    def forward(self, x: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln_q(x), keys)
        return x + self.ffn(self.ln_f(x))


class ReasoningStack(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.variant = cfg.st_attention
        encoders = []
        decoders = []
        for _ in range(cfg.str_depth):
            if self.variant != "none":
                encoders.append(SpaceTimeBlock(cfg, two_pass=self.variant in ("cfmsa", "w3d")))
            if cfg.stage3:
                decoders.append(CrossModalBlock(cfg))
        self.encoders = nn.ModuleList(encoders)
        self.decoders = nn.ModuleList(decoders)
        if cfg.stage3:
            self.lang_proj = nn.Linear(cfg.embed_dim, cfg.fusion_dim, dtype=FLOAT)
            self.shallow_proj = nn.Linear(cfg.vision_dim, cfg.fusion_dim, dtype=FLOAT)

    def _patterns(self, clip_len: int, grid: int):
        if self.variant in ("none", "global"):
            return None, None
        spec = CubeSpec(clip_len, grid, grid, self.cfg.window)
        return build_pattern(self.variant, spec), build_pattern(self.variant, spec.shifted())

    def build_keys(self, lang_tokens: torch.Tensor, shallow: torch.Tensor) -> torch.Tensor:
        """Key set of size n_words_tokens + clip_len * n_patches, width C."""
        lang = linear_apply(lang_tokens, self.lang_proj.weight, self.lang_proj.bias)
        flat = shallow.reshape(-1, shallow.shape[-1])
        vis = linear_apply(flat, self.shallow_proj.weight, self.shallow_proj.bias)
        return torch.cat([lang, vis], dim=0)

    def forward(
        self,
        fused: torch.Tensor,
        lang_tokens: Optional[torch.Tensor],
        shallow: Optional[torch.Tensor],
    ) -> torch.Tensor:
        frames, height, width, channels = fused.shape
        if height != width:
            raise ShapeError("reasoning grid must be square")
        pattern, shifted = self._patterns(frames, height)
        keys = None
        if self.cfg.stage3:
            if lang_tokens is None or shallow is None:
                raise ShapeError("stage-3 reasoning needs language tokens and shallow features")
            keys = self.build_keys(lang_tokens, shallow)
        x = fused.reshape(-1, channels)
        for i in range(self.cfg.str_depth):
            if self.encoders:
                x = self.encoders[i](x, pattern, shifted)
            if self.decoders:
                x = self.decoders[i](x, keys)
        return x.reshape(frames, height, width, channels)
