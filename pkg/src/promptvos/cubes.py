"""Cube geometry, sparse attention patterns, and their complexity.

Tokens live on a (clip, height, width) grid, flattened row-major as
``t*H*W + y*W + x``.  A cube is a clip-deep spatial window: the partition
never splits the temporal axis.  Shifted partitions use cyclic indexing,
so non-divisible grids keep their token count and every token still lands
in exactly one cube.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import torch

from promptvos.errors import ShapeError


@dataclass(frozen=True)
class CubeSpec:
    clip_len: int
    height: int
    width: int
    window: int
    shift_y: int = 0
    shift_x: int = 0

    def __post_init__(self) -> None:
        if self.window > min(self.height, self.width):
            raise ShapeError(f"window {self.window} exceeds grid {self.height}x{self.width}")
        if self.clip_len < 1:
            raise ShapeError("clip_len must be >= 1")
        half = self.window // 2
        for shift in (self.shift_y, self.shift_x):
            if shift not in (0, half):
                raise ShapeError(f"shift {shift} must be 0 or window//2 = {half}")

    @property
    def tokens(self) -> int:
        return self.clip_len * self.height * self.width

    def shifted(self) -> "CubeSpec":
        half = self.window // 2
        return CubeSpec(self.clip_len, self.height, self.width, self.window, half, half)


@dataclass
class AttentionPattern:
    """Boolean allowed-pair relation over the flattened token grid."""

    mask: torch.Tensor
    spec: CubeSpec

    @property
    def allowed_pairs(self) -> int:
        return int(self.mask.sum())

    def is_reflexive(self) -> bool:
        return bool(self.mask.diagonal().all())

    def is_symmetric(self) -> bool:
        return bool((self.mask == self.mask.T).all())


@lru_cache(maxsize=64)
def cube_assignment(spec: CubeSpec) -> torch.Tensor:
    """Cube id per token: spatial window index under the (cyclic) shift,
    identical across all frames."""
    ys = torch.arange(spec.height)
    xs = torch.arange(spec.width)
    cy = ((ys + spec.shift_y) % spec.height) // spec.window
    cx = ((xs + spec.shift_x) % spec.width) // spec.window
    n_cx = (spec.width - 1) // spec.window + 1
    plane = (cy[:, None] * n_cx + cx[None, :]).reshape(-1)
    return plane.repeat(spec.clip_len)


@lru_cache(maxsize=64)
def frame_assignment(spec: CubeSpec) -> torch.Tensor:
    base = torch.arange(spec.clip_len)
    return base.repeat_interleave(spec.height * spec.width)


@lru_cache(maxsize=64)
def build_cfmsa_mask(spec: CubeSpec) -> AttentionPattern:
    """Allowed iff same frame OR same cube."""
    frames = frame_assignment(spec)
    cubes = cube_assignment(spec)
    mask = (frames[:, None] == frames[None, :]) | (cubes[:, None] == cubes[None, :])
    return AttentionPattern(mask=mask, spec=spec)


@lru_cache(maxsize=64)
def build_w3d_mask(spec: CubeSpec) -> AttentionPattern:
    """Allowed iff same cube (3D-window attention)."""
    cubes = cube_assignment(spec)
    return AttentionPattern(mask=cubes[:, None] == cubes[None, :], spec=spec)


@lru_cache(maxsize=64)
def build_global_mask(spec: CubeSpec) -> AttentionPattern:
    n = spec.tokens
    return AttentionPattern(mask=torch.ones(n, n, dtype=torch.bool), spec=spec)


_BUILDERS = {"cfmsa": build_cfmsa_mask, "w3d": build_w3d_mask, "global": build_global_mask}


def build_pattern(variant: str, spec: CubeSpec) -> AttentionPattern:
    try:
        return _BUILDERS[variant](spec)
    except KeyError:
        raise ShapeError(f"unknown attention variant {variant!r}") from None


def flops_count(variant: str, clip_len: int, height: int, width: int, channels: int, window: int) -> int:
    """Closed-form MAC count of one unshifted attention pass.

    Only score computation and value aggregation are charged; linear
    projections and the softmax are omitted.
    """
    t, h, w, c, m = clip_len, height, width, channels, window
    if variant == "global":
        return 2 * (t * h * w) ** 2 * c
    if variant == "w3d":
        return 2 * m * m * t * t * h * w * c
    if variant == "cfmsa":
        return 2 * t * h * w * ((t - 1) * m * m + h * w) * c
    raise ShapeError(f"unknown attention variant {variant!r}")


def instrumented_flops(variant: str, spec: CubeSpec, channels: int) -> int:
    """MAC count measured from the built pattern: two C-long
    multiply-accumulate chains (score + aggregation) per allowed pair."""
    return 2 * channels * build_pattern(variant, spec).allowed_pairs
