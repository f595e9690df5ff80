"""Cross-modal feature fusion after encoding.

Two trainable propagation blocks run in parallel on the deep features:
the global text vector attends over every patch of every frame (rescaled
by a small learnable per-channel factor so the pretrained alignment is
only gently perturbed), and each frame's patches attend over the word
tokens.  The enhanced pair yields a pixel-wise cosine map, concatenated
channel-wise and projected down to the reasoning width.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from promptvos.config import ModelConfig
from promptvos.encoders import LinguisticFeature
from promptvos.errors import ShapeError
from promptvos.nn.functional import FLOAT, AttentionParams, linear_apply

COSINE_EPS = 1e-12
ALPHA_INIT = 0.01


def cosine_similarity_map(features: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Cosine of each feature row against a single reference vector."""
    if features.shape[-1] != reference.shape[-1]:
        raise ShapeError(
            f"cosine widths differ: {features.shape[-1]} vs {reference.shape[-1]}"
        )
    dots = features @ reference
    norms = features.norm(dim=-1) * reference.norm()
    return dots / (norms + COSINE_EPS)


class FeatureFusion(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        self.v2l = AttentionParams(d, cfg.lang_heads)
        self.alpha = nn.Parameter(torch.full((d,), ALPHA_INIT, dtype=FLOAT))
        self.l2v = AttentionParams(d, cfg.lang_heads)
        self.fuse_proj = nn.Linear(d + 1, cfg.fusion_dim, dtype=FLOAT)

    def enhance_text(self, x_e: torch.Tensor, patches: torch.Tensor) -> torch.Tensor:
        """x_e + alpha * MCA(x_e -> all patches of all frames)."""
        keys = patches.reshape(-1, patches.shape[-1])
        out = self.v2l(x_e.unsqueeze(0), keys).squeeze(0)
        return x_e + self.alpha * out

    def enhance_patches(self, patches: torch.Tensor, words: torch.Tensor) -> torch.Tensor:
        """Per frame, patches attend over all word-level tokens (residual)."""
        keys = words.unsqueeze(0).expand(patches.shape[0], -1, -1)
        return patches + self.l2v(patches, keys)

    def forward(self, patches: torch.Tensor, lang: LinguisticFeature):
        """patches (frames, n_patches, embed) -> (fused (frames,H,W,C),
        similarity (frames,H,W), enhanced text vector)."""
        frames, n_patches, _ = patches.shape
        grid = self.cfg.grid
        if grid * grid != n_patches:
            raise ShapeError(f"{n_patches} patches do not form a {grid}x{grid} grid")
        x_e = self.enhance_text(lang.x_e, patches)
        enhanced = self.enhance_patches(patches, lang.tokens)
        sim = cosine_similarity_map(enhanced, x_e)
        stacked = torch.cat([enhanced, sim.unsqueeze(-1)], dim=-1)
        fused = linear_apply(stacked, self.fuse_proj.weight, self.fuse_proj.bias)
        fused = fused.reshape(frames, grid, grid, self.cfg.fusion_dim)
        return fused, sim.reshape(frames, grid, grid), x_e
