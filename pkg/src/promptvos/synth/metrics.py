"""Region similarity, boundary accuracy, and dataset-level evaluation.

Region similarity J is mask IoU.  Boundary accuracy F extracts each
mask's one-pixel-thick inner boundary (mask minus its 4-connected
erosion), matches boundaries within a dilation radius proportional to the
image diagonal, and returns the harmonic mean of precision and recall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from promptvos.synth.scenes import VideoSample

BOUNDARY_TOL_FRACTION = 0.008
_CROSS = ndimage.generate_binary_structure(2, 1)  # 4-connectivity


def j_metric(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    pred, gt = pred.astype(bool), gt.astype(bool)
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum()) / union


def boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbour (or the image border) outside."""
    mask = mask.astype(bool)
    eroded = ndimage.binary_erosion(mask, structure=_CROSS, border_value=0)
    return mask & ~eroded


def default_tolerance(shape: tuple[int, int]) -> int:
    return math.ceil(BOUNDARY_TOL_FRACTION * math.hypot(*shape))


def f_metric(pred: np.ndarray, gt: np.ndarray, tol: int | None = None) -> float:
    pred, gt = pred.astype(bool), gt.astype(bool)
    if tol is None:
        tol = default_tolerance(pred.shape)
    pb, gb = boundary(pred), boundary(gt)
    if not pb.any() and not gb.any():
        return 1.0
    if not pb.any() or not gb.any():
        return 0.0
    gb_zone = ndimage.binary_dilation(gb, structure=_CROSS, iterations=tol) if tol else gb
    pb_zone = ndimage.binary_dilation(pb, structure=_CROSS, iterations=tol) if tol else pb
    precision = float((pb & gb_zone).sum()) / float(pb.sum())
    recall = float((gb & pb_zone).sum()) / float(gb.sum())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class VideoScore:
    video_id: str
    j: float
    f: float
    event: bool

    @property
    def jf(self) -> float:
        return (self.j + self.f) / 2.0


@dataclass
class EvalReport:
    clip_len: int
    scores: list[VideoScore] = field(default_factory=list)
    jf_variance_across_lengths: float | None = None

    def _mean(self, rows: Sequence[VideoScore], key) -> float:
        return sum(key(r) for r in rows) / len(rows) if rows else 0.0

    @property
    def mean_j(self) -> float:
        return self._mean(self.scores, lambda r: r.j)

    @property
    def mean_f(self) -> float:
        return self._mean(self.scores, lambda r: r.f)

    @property
    def mean_jf(self) -> float:
        return self._mean(self.scores, lambda r: r.jf)

    def subset_mean_jf(self, event: bool) -> float:
        rows = [r for r in self.scores if r.event == event]
        return self._mean(rows, lambda r: r.jf)

    def lines(self) -> list[str]:
        out = [f"clip_len={self.clip_len}"]
        out += [
            f"{r.video_id} J={r.j:.4f} F={r.f:.4f} J&F={r.jf:.4f} event={int(r.event)}"
            for r in self.scores
        ]
        out.append(f"mean J={self.mean_j:.4f} F={self.mean_f:.4f} J&F={self.mean_jf:.4f}")
        events = [r for r in self.scores if r.event]
        if events:
            out.append(f"event-subset J&F={self.subset_mean_jf(True):.4f} over {len(events)} videos")
        return out


Predictor = Callable[[VideoSample, int], np.ndarray]


def evaluate_dataset(
    predict: Predictor,
    samples: list[VideoSample],
    clip_len: int,
    threshold: float = 0.5,
) -> EvalReport:
    """Per-video means of per-frame J and F; J&F is their average."""
    report = EvalReport(clip_len=clip_len)
    for sample in samples:
        probs = predict(sample, clip_len)
        if probs.shape != sample.masks.shape:
            raise ValueError(f"predictor returned {probs.shape}, expected {sample.masks.shape}")
        binary = probs >= threshold
        js = [j_metric(binary[t], sample.masks[t] > 0.5) for t in range(binary.shape[0])]
        fs = [f_metric(binary[t], sample.masks[t] > 0.5) for t in range(binary.shape[0])]
        report.scores.append(
            VideoScore(sample.video_id, float(np.mean(js)), float(np.mean(fs)), sample.event)
        )
    return report


def clip_length_study(
    predict: Predictor,
    samples: list[VideoSample],
    lengths: Sequence[int],
) -> dict[int, EvalReport]:
    """Evaluate at several inference clip lengths; each report carries the
    population variance of mean J&F across the studied lengths."""
    reports = {length: evaluate_dataset(predict, samples, length) for length in lengths}
    values = [r.mean_jf for r in reports.values()]
    variance = float(np.var(values))
    for report in reports.values():
        report.jf_variance_across_lengths = variance
    return reports
