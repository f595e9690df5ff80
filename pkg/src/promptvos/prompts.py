"""Learnable prompt tokens and their per-layer lifecycle.

Four prompt kinds exist: per-layer vision prompts (deep tuning), temporal
carriers (injected once, refreshed between layers by the temporal-capture
step), historical prompts generated from the previous clip's features and
masks, and language prompts appended to the text tokens.  Vision and
historical slots are re-injected fresh at every layer; the layer outputs
at those slots are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from promptvos.config import ModelConfig
from promptvos.encoders import TokenLayout, VisualTokenGrid
from promptvos.errors import ShapeError
from promptvos.nn.functional import FLOAT, TransformerLayer, linear_apply

POOL_EPS = 1e-6


@dataclass
class ClipState:
    """What the previous clip left behind: final-layer patch features and
    predicted (or teacher-forced) masks, one of each per previous frame."""

    features: Optional[torch.Tensor] = None  # (frames, patches, embed_dim)
    masks: Optional[torch.Tensor] = None  # (frames, image, image) in [0, 1]

    def __post_init__(self) -> None:
        if (self.features is None) != (self.masks is None):
            raise ShapeError("clip state needs both features and masks, or neither")
        if self.features is not None:
            if self.features.shape[0] != self.masks.shape[0]:
                raise ShapeError("clip state: feature count != mask count")
            values = self.masks.detach()
            lo, hi = float(values.min()), float(values.max())
            if lo < 0.0 or hi > 1.0:
                raise ShapeError(f"clip state masks outside [0, 1]: [{lo}, {hi}]")

    @property
    def empty(self) -> bool:
        return self.features is None

    def detached(self) -> "ClipState":
        if self.empty:
            return ClipState()
        return ClipState(self.features.detach(), self.masks.detach())


class PromptSet(nn.Module):
    """All learnable prompt tokens, plus the per-layer history projections."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg

        def tokens(*shape):
            return nn.Parameter(torch.randn(*shape, dtype=FLOAT) * 0.02)

        if cfg.lang_vision_prompts:
            self.vision_prompts = tokens(cfg.vision_layers, cfg.vision_prompt_tokens, cfg.vision_dim)
            self.language_prompts = tokens(cfg.language_prompt_tokens, cfg.embed_dim)
        if cfg.temporal_prompts:
            self.temporal_prompts = tokens(cfg.temporal_prompt_tokens, cfg.vision_dim)
        if cfg.history:
            self.history_proj = nn.ModuleList(
                nn.Linear(cfg.embed_dim, cfg.vision_dim, dtype=FLOAT) for _ in range(cfg.vision_layers)
            )
            self.null_history = tokens(cfg.vision_dim)


def prompt_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form size of a full PromptSet (interaction encoder excluded)."""
    count = 0
    if cfg.lang_vision_prompts:
        count += cfg.vision_layers * cfg.vision_prompt_tokens * cfg.vision_dim
        count += cfg.language_prompt_tokens * cfg.embed_dim
    if cfg.temporal_prompts:
        count += cfg.temporal_prompt_tokens * cfg.vision_dim
    if cfg.history:
        count += cfg.vision_layers * (cfg.embed_dim + 1) * cfg.vision_dim
        count += cfg.vision_dim
    return count


def downsample_mask(mask: torch.Tensor, patch_size: int) -> torch.Tensor:
    """Area-average an image-resolution mask onto the patch grid (row-major)."""
    size = mask.shape[0]
    if mask.shape != (size, size) or size % patch_size != 0:
        raise ShapeError(f"mask shape {tuple(mask.shape)} incompatible with patch size {patch_size}")
    grid = size // patch_size
    return mask.reshape(grid, patch_size, grid, patch_size).mean(dim=(1, 3)).reshape(grid * grid)


def make_historical_prompts(prompts: PromptSet, state: ClipState, layer: int, clip_len: int) -> torch.Tensor:
    """One token per previous frame: masked global pooling of its patch
    features, then the layer-specific projection.  An empty state yields
    the learnable null token repeated ``clip_len`` times."""
    cfg = prompts.cfg
    if layer >= cfg.vision_layers:
        raise ShapeError(f"layer {layer} out of range for {cfg.vision_layers} vision layers")
    proj = prompts.history_proj[layer]
    if state.empty:
        return prompts.null_history.unsqueeze(0).expand(clip_len, -1)
    pooled = []
    for features, mask in zip(state.features, state.masks):
        weights = downsample_mask(mask, cfg.patch_size)
        if weights.shape[0] != features.shape[0]:
            raise ShapeError("mask grid does not match feature grid")
        total = weights.sum()
        pooled.append((weights @ features) / torch.clamp(total, min=POOL_EPS))
    return linear_apply(torch.stack(pooled), proj.weight, proj.bias)


def assemble_layer_input(
    base: torch.Tensor,
    historical: Optional[torch.Tensor],
    vision: Optional[torch.Tensor],
    temporal: Optional[torch.Tensor],
) -> VisualTokenGrid:
    """Concatenate one layer's input in slot order [CLS|patches|hist|vision|temporal].

    ``base`` is (frames, patches+1, width); historical and vision prompt
    tokens are shared across frames, temporal carriers are per frame.
    """
    frames, n_base, width = base.shape
    parts = [base]
    n_hist = n_vis = n_tmp = 0
    if historical is not None:
        n_hist = historical.shape[0]
        parts.append(historical.unsqueeze(0).expand(frames, -1, -1))
    if vision is not None:
        n_vis = vision.shape[0]
        parts.append(vision.unsqueeze(0).expand(frames, -1, -1))
    if temporal is not None:
        if temporal.dim() != 3 or temporal.shape[0] != frames:
            raise ShapeError(f"temporal carriers {tuple(temporal.shape)} do not cover {frames} frames")
        n_tmp = temporal.shape[1]
        parts.append(temporal)
    for part in parts[1:]:
        if part.shape[-1] != width:
            raise ShapeError(f"prompt width {part.shape[-1]} != token width {width}")
    layout = TokenLayout(patches=n_base - 1, historical=n_hist, vision=n_vis, temporal=n_tmp)
    return VisualTokenGrid(tokens=torch.cat(parts, dim=1), layout=layout)


class PromptInteraction(nn.Module):
    """Joint refinement of all learnable prompt kinds.

    Each kind is projected to the shared embedding width, the union runs
    through one trainable transformer-encoder layer, and each kind is
    projected back to its native width.  Historical prompts are generated,
    not learned, so they do not participate.  Runs once per forward pass.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        if cfg.lang_vision_prompts:
            self.vision_in = nn.Linear(cfg.vision_dim, d, dtype=FLOAT)
            self.vision_out = nn.Linear(d, cfg.vision_dim, dtype=FLOAT)
            self.lang_in = nn.Linear(d, d, dtype=FLOAT)
            self.lang_out = nn.Linear(d, d, dtype=FLOAT)
        if cfg.temporal_prompts:
            self.temporal_in = nn.Linear(cfg.vision_dim, d, dtype=FLOAT)
            self.temporal_out = nn.Linear(d, cfg.vision_dim, dtype=FLOAT)
        self.encoder = TransformerLayer(d, cfg.lang_heads, cfg.ffn_ratio * d)

    def forward(
        self,
        vision: Optional[torch.Tensor],
        temporal: Optional[torch.Tensor],
        language: Optional[torch.Tensor],
    ) -> tuple[Optional[torch.Tensor], Optional[torch.Tensor], Optional[torch.Tensor]]:
        segments: list[torch.Tensor] = []
        spans: dict[str, slice] = {}

        def push(name: str, x: torch.Tensor) -> None:
            start = sum(s.shape[0] for s in segments)
            segments.append(x)
            spans[name] = slice(start, start + x.shape[0])

        if vision is not None:
            push("vision", linear_apply(vision.reshape(-1, vision.shape[-1]), self.vision_in.weight, self.vision_in.bias))
        if temporal is not None:
            push("temporal", linear_apply(temporal, self.temporal_in.weight, self.temporal_in.bias))
        if language is not None:
            push("language", linear_apply(language, self.lang_in.weight, self.lang_in.bias))
        if not segments:
            return vision, temporal, language

        mixed = self.encoder(torch.cat(segments, dim=0))

        new_vision = new_temporal = new_language = None
        if vision is not None:
            flat = linear_apply(mixed[spans["vision"]], self.vision_out.weight, self.vision_out.bias)
            new_vision = flat.reshape(vision.shape)
        if temporal is not None:
            new_temporal = linear_apply(mixed[spans["temporal"]], self.temporal_out.weight, self.temporal_out.bias)
        if language is not None:
            new_language = linear_apply(mixed[spans["language"]], self.lang_out.weight, self.lang_out.bias)
        return new_vision, new_temporal, new_language
