"""End-to-end model assembly: frozen encoders, prompt machinery, fusion,
reasoning, segmentation head, and the per-clip forward pass."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from promptvos.config import ModelConfig
from promptvos.encoders import LanguageEncoder, LinguisticFeature, VisionEncoder
from promptvos.errors import ShapeError
from promptvos.fusion import FeatureFusion
from promptvos.nn.functional import FLOAT, assert_finite, gelu, linear_apply
from promptvos.prompts import ClipState, PromptInteraction, PromptSet, assemble_layer_input, make_historical_prompts
from promptvos.reasoning import ReasoningStack
from promptvos.temporal_capture import temporal_capture


class SegmentationHead(nn.Module):
    """Pointwise MLP to sub-patch logits, bilinear upsample, sigmoid.

    Each patch cell predicts a small grid of logits (half the patch
    resolution) rather than a single value; one logit per patch leaves a
    soft edge band the width of a patch after upsampling, which caps how
    far the overlap losses can fall on desk-scale objects.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.sub = cfg.patch_size
        self.fc1 = nn.Linear(cfg.fusion_dim, cfg.fusion_dim, dtype=FLOAT)
        self.fc2 = nn.Linear(cfg.fusion_dim, self.sub * self.sub, dtype=FLOAT)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        frames, grid = x.shape[0], self.cfg.grid
        h = gelu(linear_apply(x, self.fc1.weight, self.fc1.bias))
        logits = linear_apply(h, self.fc2.weight, self.fc2.bias)
        logits = logits.reshape(frames, grid, grid, self.sub, self.sub)
        logits = logits.permute(0, 1, 3, 2, 4).reshape(frames, grid * self.sub, grid * self.sub)
        size = self.cfg.image_size
        up = F.interpolate(logits.unsqueeze(1), size=(size, size), mode="bilinear", align_corners=False)
        return torch.sigmoid(up.squeeze(1))


class ReferringSegmenter(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.vision = VisionEncoder(cfg)
        self.language = LanguageEncoder(cfg)
        any_learned_prompts = cfg.lang_vision_prompts or cfg.temporal_prompts
        if any_learned_prompts or cfg.history:
            self.prompts = PromptSet(cfg)
        else:
            self.prompts = None
        self.interaction = PromptInteraction(cfg) if any_learned_prompts else None
        if cfg.stage1:
            self.lang_lift = nn.Linear(cfg.embed_dim, cfg.vision_dim, bias=False, dtype=FLOAT)
        self.vision_proj = nn.Linear(cfg.vision_dim, cfg.embed_dim, dtype=FLOAT)
        if cfg.stage2:
            self.fusion = FeatureFusion(cfg)
        else:
            self.bypass_proj = nn.Linear(cfg.embed_dim, cfg.fusion_dim, dtype=FLOAT)
        self.reasoning = ReasoningStack(cfg)
        self.head = SegmentationHead(cfg)
        self._near_identity_init()

    def _near_identity_init(self) -> None:
        """Zero the output projections of the trainable residual blocks so
        the reasoning/interaction stacks start as identities; the head then
        sees the fused features directly from step one and the blocks open
        up as their output maps grow."""
        blocks = list(self.reasoning.encoders) + list(self.reasoning.decoders)
        if self.interaction is not None:
            blocks.append(self.interaction.encoder)
        if self.cfg.stage2:
            blocks.append(self.fusion.l2v)
        with torch.no_grad():
            for block in blocks:
                for name, param in block.named_parameters():
                    if "out_map.weight" in name or "ffn.fc2" in name:
                        param.zero_()

    # ------------------------------------------------------------------
    def interact_prompts(self):
        """Run the joint prompt-interaction encoder once; returns the
        refreshed (vision_groups, temporal, language) prompt tensors."""
        cfg = self.cfg
        vision = self.prompts.vision_prompts if cfg.lang_vision_prompts else None
        language = self.prompts.language_prompts if cfg.lang_vision_prompts else None
        temporal = self.prompts.temporal_prompts if cfg.temporal_prompts else None
        if self.interaction is None:
            return vision, temporal, language
        return self.interaction(vision, temporal, language)

    def encode_clip(
        self,
        frames: torch.Tensor,
        lang: LinguisticFeature | None,
        state: ClipState,
        vision_prompts: torch.Tensor | None,
        temporal_prompts: torch.Tensor | None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Run the frozen trunk with per-layer prompt re-assembly.

        Returns (features (frames, patches+1, embed_dim), shallow patch
        tokens from the first layer (frames, patches, vision_dim)).
        Prompt slots are dropped from the output; CLS is kept.
        """
        cfg = self.cfg
        clip_len = frames.shape[0]
        base = self.vision.embed_clip(frames)
        carriers = None
        if temporal_prompts is not None:
            carriers = temporal_prompts.unsqueeze(0).expand(clip_len, -1, -1)
        lifted = None
        if cfg.stage1:
            if lang is None:
                raise ShapeError("language features required when cross-modal injection is on")
            lifted = linear_apply(lang.tokens, self.lang_lift.weight)
        shallow = None
        last = cfg.vision_layers - 1
        for index, layer in enumerate(self.vision.layers):
            historical = None
            if cfg.history:
                historical = make_historical_prompts(self.prompts, state, index, clip_len)
            group = vision_prompts[index] if vision_prompts is not None else None
            grid = assemble_layer_input(base, historical, group, carriers)
            if lifted is not None:
                out = layer.forward_injected(grid.tokens, lifted)
            else:
                out = layer(grid.tokens)
            base = out[:, : grid.layout.patch_slice.stop]
            if index == 0:
                shallow = base[:, 1:, :]
            if carriers is not None:
                hatted = out[:, grid.layout.temporal_slice]
                if cfg.prtc and index < last:
                    carriers = temporal_capture(hatted, base[:, 1:, :], layer)
                else:
                    carriers = hatted
        features = linear_apply(base, self.vision_proj.weight, self.vision_proj.bias)
        return assert_finite(features, "encode_clip"), shallow

    def segment_clip(
        self,
        frames: torch.Tensor,
        word_ids: list[int],
        state: ClipState | None = None,
    ) -> tuple[torch.Tensor, ClipState]:
        """Full forward over one clip; returns per-frame mask probabilities
        and the state to thread into the next clip."""
        cfg = self.cfg
        if frames.dim() != 4 or frames.shape[0] < 1:
            raise ShapeError(f"expected (frames, size, size, channels), got {tuple(frames.shape)}")
        if frames.shape[0] > cfg.clip_len:
            raise ShapeError(f"clip of {frames.shape[0]} frames exceeds clip_len {cfg.clip_len}")
        state = state if state is not None else ClipState()

        vision_p, temporal_p, language_p = (None, None, None)
        if self.prompts is not None:
            vision_p, temporal_p, language_p = self.interact_prompts()
        lang = self.language(word_ids, language_p)
        features, shallow = self.encode_clip(frames, lang, state, vision_p, temporal_p)
        patches = features[:, 1:, :]

        if cfg.stage2:
            fused, _, _ = self.fusion(patches, lang)
        else:
            grid = cfg.grid
            fused = linear_apply(patches, self.bypass_proj.weight, self.bypass_proj.bias)
            fused = fused.reshape(frames.shape[0], grid, grid, cfg.fusion_dim)

        out = self.reasoning(fused, lang.tokens if cfg.stage3 else None, shallow if cfg.stage3 else None)
        probs = self.head(out)
        return probs, ClipState(features=patches, masks=probs)


def build_model(cfg: ModelConfig, seed: int) -> ReferringSegmenter:
    """Deterministic construction: the global RNG is seeded, so the same
    (config, seed) pair always yields bit-identical initial weights."""
    torch.manual_seed(seed)
    return ReferringSegmenter(cfg)
