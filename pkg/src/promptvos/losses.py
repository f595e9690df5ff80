"""Segmentation losses: soft Dice and alpha-balanced focal."""

from __future__ import annotations

import torch

from promptvos.errors import ShapeError

DICE_SMOOTH = 1.0
FOCAL_CLAMP = 1e-7


def _per_frame(pred: torch.Tensor, target: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if pred.shape != target.shape:
        raise ShapeError(f"pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    if pred.dim() == 2:
        pred, target = pred.unsqueeze(0), target.unsqueeze(0)
    return pred.reshape(pred.shape[0], -1), target.reshape(target.shape[0], -1)


def dice_loss(pred: torch.Tensor, target: torch.Tensor, smooth: float = DICE_SMOOTH) -> torch.Tensor:
    """Soft Dice, 1 - (2*sum(p*y)+s) / (sum(p)+sum(y)+s), averaged over frames."""
    p, y = _per_frame(pred, target)
    overlap = (p * y).sum(dim=1)
    score = (2.0 * overlap + smooth) / (p.sum(dim=1) + y.sum(dim=1) + smooth)
    return (1.0 - score).mean()


def focal_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    gamma: float = 2.0,
    alpha: float = 0.25,
) -> torch.Tensor:
    """Alpha-balanced focal loss, mean over all pixels.

    gamma=0, alpha=0.5 reduces to half the binary cross-entropy.
    """
    p, y = _per_frame(pred, target)
    p = p.clamp(FOCAL_CLAMP, 1.0 - FOCAL_CLAMP)
    pos = alpha * y * (1.0 - p) ** gamma * (-torch.log(p))
    neg = (1.0 - alpha) * (1.0 - y) * p**gamma * (-torch.log(1.0 - p))
    return (pos + neg).mean()


def total_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    dice_weight: float = 5.0,
    focal_weight: float = 2.0,
    gamma: float = 2.0,
    alpha: float = 0.25,
) -> torch.Tensor:
    return dice_weight * dice_loss(pred, target) + focal_weight * focal_loss(pred, target, gamma, alpha)
