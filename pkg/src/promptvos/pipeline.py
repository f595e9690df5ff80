"""Training and inference drivers.

Training uses pairs of consecutive clips from one video: the first clip
runs with empty state, the second consumes the first clip's features and
masks as history, and one optimizer step is taken on the summed loss.
Inference walks a video clip by clip, threading (detached) state through.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field

import numpy as np
import torch

from promptvos.config import ModelConfig
from promptvos.errors import ShapeError
from promptvos.losses import dice_loss, focal_loss
from promptvos.model import ReferringSegmenter, build_model
from promptvos.nn.optim import AdamW
from promptvos.prompts import ClipState


def parameter_registry(model: torch.nn.Module) -> list[tuple[str, tuple[int, ...], bool]]:
    """(name, shape, frozen) for every parameter; the audit surface."""
    return [(name, tuple(p.shape), not p.requires_grad) for name, p in model.named_parameters()]


def trainable_parameters(model: torch.nn.Module):
    return [p for p in model.parameters() if p.requires_grad]


def frozen_snapshot(model: torch.nn.Module) -> dict[str, torch.Tensor]:
    return {n: p.detach().clone() for n, p in model.named_parameters() if not p.requires_grad}


def frozen_drift(model: torch.nn.Module, snapshot: dict[str, torch.Tensor]) -> list[str]:
    """Names of frozen parameters that are no longer bit-identical."""
    drifted = []
    for name, p in model.named_parameters():
        if p.requires_grad:
            continue
        if not torch.equal(p.detach(), snapshot[name]):
            drifted.append(name)
    return drifted


def make_optimizer(model: ReferringSegmenter, cfg: ModelConfig) -> AdamW:
    return AdamW(
        trainable_parameters(model),
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.adam_eps,
    )


def two_clip_loss(
    model: ReferringSegmenter,
    clip_a: torch.Tensor,
    clip_b: torch.Tensor,
    word_ids: list[int],
    gt_a: torch.Tensor,
    gt_b: torch.Tensor,
    teacher_force: bool,
) -> dict[str, torch.Tensor]:
    """Forward both clips (history flows from the first into the second)
    and return the loss terms, keeping the graph alive."""
    cfg = model.cfg
    probs_a, state_a = model.segment_clip(clip_a, word_ids, ClipState())
    if model.cfg.history and teacher_force:
        state_a = ClipState(features=state_a.features, masks=gt_a)
    probs_b, _ = model.segment_clip(clip_b, word_ids, state_a)
    dice = dice_loss(probs_a, gt_a) + dice_loss(probs_b, gt_b)
    focal = focal_loss(probs_a, gt_a, cfg.focal_gamma, cfg.focal_alpha) + focal_loss(
        probs_b, gt_b, cfg.focal_gamma, cfg.focal_alpha
    )
    total = cfg.dice_weight * dice + cfg.focal_weight * focal
    return {"dice": dice, "focal": focal, "total": total}


def train_step_two_clips(
    model: ReferringSegmenter,
    optimizer: AdamW,
    clip_a: torch.Tensor,
    clip_b: torch.Tensor,
    word_ids: list[int],
    gt_a: torch.Tensor,
    gt_b: torch.Tensor,
) -> dict[str, float]:
    terms = two_clip_loss(model, clip_a, clip_b, word_ids, gt_a, gt_b, model.cfg.teacher_force_history)
    optimizer.zero_grad()
    terms["total"].backward()
    optimizer.step()
    optimizer.zero_grad()
    return {key: float(value.detach()) for key, value in terms.items()}


@torch.no_grad()
def infer_video(
    model: ReferringSegmenter,
    frames: torch.Tensor,
    word_ids: list[int],
    clip_len: int | None = None,
) -> torch.Tensor:
    """Segment a whole video clip-by-clip; the last clip may be ragged."""
    if clip_len is None:
        clip_len = model.cfg.clip_len
    if clip_len < 1:
        raise ShapeError("clip_len must be >= 1")
    state = ClipState()
    chunks = []
    for start in range(0, frames.shape[0], clip_len):
        clip = frames[start : start + clip_len]
        probs, state = model.segment_clip(clip, word_ids, state)
        state = state.detached()
        chunks.append(probs)
    return torch.cat(chunks, dim=0)


# ----------------------------------------------------------------------
# dataset-level training
# ----------------------------------------------------------------------

@dataclass
class TrainLog:
    steps: list[dict[str, float]] = field(default_factory=list)

    def lines(self) -> list[str]:
        return [
            f"step={i} dice={rec['dice']:.6f} focal={rec['focal']:.6f} total={rec['total']:.6f}"
            for i, rec in enumerate(self.steps)
        ]


def _to_tensor(array: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(array, dtype=torch.float64)


def train_on_dataset(
    model: ReferringSegmenter,
    videos,
    steps: int,
    seed: int,
    log_every: int = 0,
    lr: float | None = None,
) -> TrainLog:
    """Sample a video per step and take one two-clip step on clips
    [0, T_c) and [T_c, 2*T_c).  Videos must hold >= 2*T_c frames."""
    cfg = model.cfg if lr is None else dataclasses.replace(model.cfg, lr=lr)
    span = 2 * cfg.clip_len
    for video in videos:
        if video.frames.shape[0] < span:
            raise ShapeError(f"video {video.video_id} shorter than two clips ({span} frames)")
    optimizer = make_optimizer(model, cfg)
    rng = random.Random(seed)
    log = TrainLog()
    for step in range(steps):
        video = videos[rng.randrange(len(videos))]
        frames = _to_tensor(video.frames)
        masks = _to_tensor(video.masks)
        record = train_step_two_clips(
            model,
            optimizer,
            frames[: cfg.clip_len],
            frames[cfg.clip_len : span],
            video.words,
            masks[: cfg.clip_len],
            masks[cfg.clip_len : span],
        )
        log.steps.append(record)
        if log_every and step % log_every == 0:
            print(log.lines()[-1], flush=True)
    return log


class VideoPredictor:
    """Adapter giving the evaluation suite a uniform callable."""

    def __init__(self, model: ReferringSegmenter):
        self.model = model

    def __call__(self, video, clip_len: int) -> np.ndarray:
        probs = infer_video(self.model, _to_tensor(video.frames), video.words, clip_len)
        return probs.numpy()


def gradcheck_scenario(cfg: ModelConfig, seed: int, warmup_steps: int = 25):
    """Model plus deterministic two-clip loss closure for gradient audits.

    The check runs at a generic parameter point: a short warmup moves the
    weights off their init, and the text-enhancement rescale is drawn away
    from its deliberately tiny init value.  At the raw init that rescale
    suppresses some gradients to ~1e-7 while the loss sits near 10, which
    is below what central differences can resolve in float64 regardless
    of step size; the backward code is identical at the generic point.
    """
    from promptvos.synth.scenes import generate_dataset

    model = build_model(cfg, seed)
    videos = generate_dataset(2, cfg.image_size, seed, event_mix=0.5, n_frames=2 * cfg.clip_len)
    if warmup_steps:
        train_on_dataset(model, videos, warmup_steps, seed, lr=2e-3)
    if cfg.stage2:
        with torch.no_grad():
            gen = torch.Generator().manual_seed(seed)
            noise = torch.rand(model.fusion.alpha.shape, generator=gen, dtype=torch.float64)
            model.fusion.alpha.copy_(0.25 + 0.25 * noise)

    video = videos[0]
    frames, masks = _to_tensor(video.frames), _to_tensor(video.masks)
    span = 2 * cfg.clip_len

    def loss_fn():
        return two_clip_loss(
            model,
            frames[: cfg.clip_len], frames[cfg.clip_len : span],
            video.words, masks[: cfg.clip_len], masks[cfg.clip_len : span],
            teacher_force=True,
        )["total"]

    return model, loss_fn
