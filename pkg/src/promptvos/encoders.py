"""Frozen vision and language transformer trunks and their token layouts.

The trunks are randomly initialized stand-ins for a pretrained aligned
dual encoder: every weight in them is frozen at construction.  Adaptation
happens purely through prompt tokens and the trainable projections that
live outside this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from promptvos.config import ModelConfig
from promptvos.errors import ShapeError
from promptvos.nn.functional import FLOAT, TransformerLayer, assert_finite, linear_apply


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    return module


@dataclass(frozen=True)
class TokenLayout:
    """Slot layout of one frame's token sequence.

    Order is fixed: [CLS | patches | historical | vision-prompt | temporal-prompt].
    """

    patches: int
    historical: int = 0
    vision: int = 0
    temporal: int = 0

    @property
    def total(self) -> int:
        return 1 + self.patches + self.historical + self.vision + self.temporal

    @property
    def cls_slice(self) -> slice:
        return slice(0, 1)

    @property
    def patch_slice(self) -> slice:
        return slice(1, 1 + self.patches)

    @property
    def historical_slice(self) -> slice:
        start = 1 + self.patches
        return slice(start, start + self.historical)

    @property
    def vision_slice(self) -> slice:
        start = 1 + self.patches + self.historical
        return slice(start, start + self.vision)

    @property
    def temporal_slice(self) -> slice:
        start = 1 + self.patches + self.historical + self.vision
        return slice(start, start + self.temporal)


@dataclass
class VisualTokenGrid:
    """Per-frame token matrix ``(frames, layout.total, width)`` plus its layout."""

    tokens: torch.Tensor
    layout: TokenLayout

    def __post_init__(self) -> None:
        if self.tokens.dim() != 3 or self.tokens.shape[1] != self.layout.total:
            raise ShapeError(
                f"token grid shape {tuple(self.tokens.shape)} does not match layout total {self.layout.total}"
            )

    @property
    def frames(self) -> int:
        return self.tokens.shape[0]

    @property
    def patch_tokens(self) -> torch.Tensor:
        return self.tokens[:, self.layout.patch_slice]

    @property
    def temporal_tokens(self) -> torch.Tensor:
        return self.tokens[:, self.layout.temporal_slice]


@dataclass
class LinguisticFeature:
    """Word-level token features with the end-of-sequence global vector."""

    tokens: torch.Tensor  # (n_tokens, embed_dim)
    eos_index: int

    @property
    def x_e(self) -> torch.Tensor:
        return self.tokens[self.eos_index]

    @property
    def count(self) -> int:
        return self.tokens.shape[0]


def extract_patches(frame: torch.Tensor, patch_size: int) -> torch.Tensor:
    """Flatten non-overlapping patches row-major: patch i covers grid cell
    (i // grid, i % grid)."""
    size, size2, channels = frame.shape
    if size != size2 or size % patch_size != 0:
        raise ShapeError(f"frame {tuple(frame.shape)} not square or not divisible by patch {patch_size}")
    grid = size // patch_size
    patches = frame.reshape(grid, patch_size, grid, patch_size, channels)
    patches = patches.permute(0, 2, 1, 3, 4).reshape(grid * grid, patch_size * patch_size * channels)
    return patches


class VisionEncoder(nn.Module):
    """Frozen ViT-style trunk: patch embedding, CLS token, learned
    positional embeddings, a stack of pre-norm transformer layers."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_proj = nn.Linear(cfg.patch_pixels, cfg.vision_dim, dtype=FLOAT)
        self.cls_token = nn.Parameter(torch.randn(cfg.vision_dim, dtype=FLOAT) * 0.02)
        self.pos_embed = nn.Parameter(torch.randn(cfg.patch_count + 1, cfg.vision_dim, dtype=FLOAT) * 0.02)
        self.layers = nn.ModuleList(
            TransformerLayer(cfg.vision_dim, cfg.vision_heads, cfg.ffn_ratio * cfg.vision_dim)
            for _ in range(cfg.vision_layers)
        )
        freeze(self)

    def embed_frame(self, frame: torch.Tensor) -> torch.Tensor:
        """One frame (size, size, channels) -> position-encoded [CLS|patches]."""
        if frame.shape[0] != self.cfg.image_size:
            raise ShapeError(f"frame size {tuple(frame.shape)} != configured {self.cfg.image_size}")
        patches = extract_patches(frame, self.cfg.patch_size)
        tokens = linear_apply(patches, self.patch_proj.weight, self.patch_proj.bias)
        tokens = torch.cat([self.cls_token.unsqueeze(0), tokens], dim=0)
        return assert_finite(tokens + self.pos_embed, "patch_embed")

    def embed_clip(self, frames: torch.Tensor) -> torch.Tensor:
        """(frames, size, size, channels) -> (frames, patches+1, vision_dim)."""
        return torch.stack([self.embed_frame(f) for f in frames])


class LanguageEncoder(nn.Module):
    """Frozen text transformer over [SOS, words.., EOS, language prompts..]."""

    SOS = 0
    EOS = 1
    WORD_OFFSET = 2

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.table = nn.Parameter(torch.randn(cfg.vocab_size, cfg.embed_dim, dtype=FLOAT) * 0.02)
        self.pos_embed = nn.Parameter(torch.randn(cfg.max_lang_tokens, cfg.embed_dim, dtype=FLOAT) * 0.02)
        self.layers = nn.ModuleList(
            TransformerLayer(cfg.embed_dim, cfg.lang_heads, cfg.ffn_ratio * cfg.embed_dim)
            for _ in range(cfg.lang_layers)
        )
        freeze(self)

    def forward(self, word_ids: list[int], prompts: torch.Tensor | None = None) -> LinguisticFeature:
        if not word_ids:
            raise ValueError("empty referring expression")
        ids = [self.SOS] + [w + self.WORD_OFFSET for w in word_ids] + [self.EOS]
        if max(ids) >= self.cfg.vocab_size:
            raise ShapeError(f"word id {max(ids)} outside vocabulary {self.cfg.vocab_size}")
        x = self.table[ids]
        if prompts is not None:
            x = torch.cat([x, prompts], dim=0)
        if x.shape[0] > self.pos_embed.shape[0]:
            raise ShapeError(f"{x.shape[0]} tokens exceed positional table {self.pos_embed.shape[0]}")
        x = x + self.pos_embed[: x.shape[0]]
        for layer in self.layers:
            x = layer(x)
        return LinguisticFeature(tokens=x, eos_index=len(word_ids) + 1)
