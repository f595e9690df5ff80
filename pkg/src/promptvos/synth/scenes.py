"""Synthetic referring-video scenes: moving colored shapes on a black
canvas, templated expressions, and attribute-disappearance events.

An event video contains two same-shaped objects of different colors; from
a mid-video frame onward the target is drawn in the distractor's color,
so its distinguishing attribute leaves view and later frames can only be
resolved by remembering which object used to carry it.  Ground truth
always follows the object, not the attribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from promptvos.errors import GenerationError

COLORS: list[tuple[str, tuple[float, float, float]]] = [
    ("red", (1.0, 0.0, 0.0)),
    ("green", (0.0, 1.0, 0.0)),
    ("blue", (0.0, 0.0, 1.0)),
    ("yellow", (1.0, 1.0, 0.0)),
    ("magenta", (1.0, 0.0, 1.0)),
    ("cyan", (0.0, 1.0, 1.0)),
]
SHAPES = ("square", "circle", "triangle")
DIRECTIONS = ("left", "right", "up", "down")

VOCAB: list[str] = ["the", "moving", *(name for name, _ in COLORS), *SHAPES, *DIRECTIONS]
_WORD_INDEX = {word: i for i, word in enumerate(VOCAB)}


def word_ids(words: list[str]) -> list[int]:
    return [_WORD_INDEX[w] for w in words]


def expression_text(ids: list[int]) -> str:
    return " ".join(VOCAB[i] for i in ids)


@dataclass
class SynthObject:
    shape: str
    color: int  # palette index
    size: float
    x: float
    y: float
    vx: float
    vy: float
    # while inside [start, stop) the distinguishing color is hidden and the
    # object is drawn in occluded_color instead
    occlusion: Optional[tuple[int, int]] = None
    occluded_color: Optional[int] = None

    def displayed_color(self, t: int) -> int:
        if self.occlusion is not None and self.occlusion[0] <= t < self.occlusion[1]:
            return self.occluded_color
        return self.color


@dataclass
class SynthScene:
    canvas: int
    n_frames: int
    objects: list[SynthObject]
    target: int
    seed: int

    @property
    def has_event(self) -> bool:
        return self.objects[self.target].occlusion is not None


@dataclass
class VideoSample:
    video_id: str
    seed: int
    words: list[int]
    target: int
    event: bool
    frames: np.ndarray  # (n, canvas, canvas, 3) float64 in [0, 1]
    masks: np.ndarray  # (n, canvas, canvas) float64 binary
    scene: Optional[SynthScene] = field(default=None, repr=False)


# ----------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------

def object_positions(obj: SynthObject, n_frames: int, canvas: int) -> list[tuple[float, float]]:
    """Linear motion with wall bounces; the full shape stays on canvas."""
    half = obj.size / 2.0
    lo, hi = half, canvas - half
    x, y, vx, vy = obj.x, obj.y, obj.vx, obj.vy
    out = []
    for _ in range(n_frames):
        out.append((x, y))
        x, y = x + vx, y + vy
        if x < lo:
            x, vx = 2 * lo - x, -vx
        elif x > hi:
            x, vx = 2 * hi - x, -vx
        if y < lo:
            y, vy = 2 * lo - y, -vy
        elif y > hi:
            y, vy = 2 * hi - y, -vy
    return out


def shape_mask(shape: str, cx: float, cy: float, size: float, canvas: int) -> np.ndarray:
    """Boolean occupancy over pixel centers."""
    coords = np.arange(canvas) + 0.5
    px, py = np.meshgrid(coords, coords)  # px varies along columns, py along rows
    half = size / 2.0
    if shape == "square":
        return (np.abs(px - cx) <= half) & (np.abs(py - cy) <= half)
    if shape == "circle":
        return (px - cx) ** 2 + (py - cy) ** 2 <= half**2
    if shape == "triangle":
        down = py - (cy - half)
        inside_rows = (down >= 0) & (down <= size)
        return inside_rows & (np.abs(px - cx) <= down / 2.0)
    raise GenerationError(f"unknown shape {shape!r}")


def render_scene(scene: SynthScene) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize frames and target masks.  Later objects draw on top, and
    the target mask excludes pixels covered by objects above it."""
    n, canvas = scene.n_frames, scene.canvas
    tracks = [object_positions(o, n, canvas) for o in scene.objects]
    frames = np.zeros((n, canvas, canvas, 3), dtype=np.float64)
    masks = np.zeros((n, canvas, canvas), dtype=np.float64)
    for t in range(n):
        occupancy = []
        for obj, track in zip(scene.objects, tracks):
            cx, cy = track[t]
            occupancy.append(shape_mask(obj.shape, cx, cy, obj.size, canvas))
        for obj, occ in zip(scene.objects, occupancy):
            frames[t][occ] = COLORS[obj.displayed_color(t)][1]
        target = occupancy[scene.target].copy()
        for above in occupancy[scene.target + 1 :]:
            target &= ~above
        masks[t][target] = 1.0
    return frames, masks


# ----------------------------------------------------------------------
# expressions and audits
# ----------------------------------------------------------------------

def _dominant_direction(obj: SynthObject) -> str:
    if abs(obj.vx) >= abs(obj.vy):
        return "right" if obj.vx >= 0 else "left"
    return "down" if obj.vy >= 0 else "up"


def build_expression(scene: SynthScene, rng: np.random.Generator) -> list[int]:
    target = scene.objects[scene.target]
    words = ["the", COLORS[target.color][0], target.shape]
    if not scene.has_event and rng.random() < 0.5:
        words += ["moving", _dominant_direction(target)]
    return word_ids(words)


def expression_attributes(words: list[int]) -> tuple[str, str]:
    """(color word, shape word) mentioned by an expression."""
    names = [VOCAB[i] for i in words]
    color = next(n for n in names if n in dict(COLORS))
    shape = next(n for n in names if n in SHAPES)
    return color, shape


def audit_frame_resolvable(scene: SynthScene, words: list[int], t: int) -> bool:
    """True when exactly one object displays the referred color+shape at
    frame t, i.e. the frame alone identifies the target."""
    color, shape = expression_attributes(words)
    matches = sum(
        1
        for obj in scene.objects
        if obj.shape == shape and COLORS[obj.displayed_color(t)][0] == color
    )
    return matches == 1


# ----------------------------------------------------------------------
# generation
# ----------------------------------------------------------------------

def _sample_object(rng: np.random.Generator, canvas: int, shape: str, color: int) -> SynthObject:
    size = float(rng.uniform(0.28, 0.40)) * canvas
    half = size / 2.0 + 0.5
    x = float(rng.uniform(half, canvas - half))
    y = float(rng.uniform(half, canvas - half))
    speed = rng.uniform(0.5, 1.3, size=2) * rng.choice([-1.0, 1.0], size=2)
    return SynthObject(shape=shape, color=color, size=size, x=x, y=y, vx=float(speed[0]), vy=float(speed[1]))


def _overlapping(a: SynthObject, b: SynthObject) -> bool:
    return np.hypot(a.x - b.x, a.y - b.y) < (a.size + b.size) / 2.0 + 2.0


def generate_scene(
    rng: np.random.Generator, canvas: int, n_frames: int, event: bool, seed: int
) -> tuple[SynthScene, list[int]]:
    for _ in range(64):
        if event:
            shape = str(rng.choice(SHAPES))
            shapes = [shape, shape]
            colors = [int(c) for c in rng.choice(len(COLORS), size=2, replace=False)]
        else:
            shapes = [str(rng.choice(SHAPES)) for _ in range(2)]
            colors = [int(rng.integers(len(COLORS))) for _ in range(2)]
            if (shapes[0], colors[0]) == (shapes[1], colors[1]):
                continue
        first = _sample_object(rng, canvas, shapes[0], colors[0])
        second = _sample_object(rng, canvas, shapes[1], colors[1])
        if _overlapping(first, second):
            continue
        target = int(rng.integers(2))
        objects = [first, second]
        if event:
            start = int(rng.integers(n_frames // 2 - 1, n_frames // 2 + 2))
            objects[target].occlusion = (start, n_frames)
            objects[target].occluded_color = objects[1 - target].color
        scene = SynthScene(canvas=canvas, n_frames=n_frames, objects=objects, target=target, seed=seed)
        words = build_expression(scene, rng)
        if audit_frame_resolvable(scene, words, 0):
            return scene, words
    raise GenerationError("could not generate a resolvable scene in 64 attempts")


def generate_dataset(
    count: int,
    canvas: int = 32,
    seed: int = 0,
    event_mix: float = 0.0,
    n_frames: int = 12,
) -> list[VideoSample]:
    """Deterministic dataset: a pure function of its arguments."""
    if count < 1:
        raise GenerationError("count must be >= 1")
    if not 0.0 <= event_mix <= 1.0:
        raise GenerationError(f"event_mix {event_mix} outside [0, 1]")
    master = np.random.Generator(np.random.PCG64(seed))
    samples = []
    for index in range(count):
        video_seed = int(master.integers(0, 2**31 - 1))
        rng = np.random.Generator(np.random.PCG64(video_seed))
        event = bool(rng.random() < event_mix)
        scene, words = generate_scene(rng, canvas, n_frames, event, video_seed)
        frames, masks = render_scene(scene)
        samples.append(
            VideoSample(
                video_id=f"video_{index:04d}",
                seed=video_seed,
                words=words,
                target=scene.target,
                event=scene.has_event,
                frames=frames,
                masks=masks,
                scene=scene,
            )
        )
    return samples
