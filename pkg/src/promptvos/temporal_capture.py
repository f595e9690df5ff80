"""Cross-frame context capture that reuses a frozen vision layer.

The temporal carrier tokens of all frames are flattened into one sequence
and run through the frozen layer as an encoder (plain self-attention).
The encoded carriers then cross-attend, with the very same frozen
weights, to the patch features of all frames (self-attention swapped for
cross-attention turns the layer into a decoder).  No parameters of its
own: enabling this path leaves the trainable registry untouched.
"""

from __future__ import annotations

import torch

from promptvos.errors import ShapeError
from promptvos.nn.functional import TransformerLayer


def temporal_capture(
    carriers: torch.Tensor,
    frame_features: torch.Tensor,
    layer: TransformerLayer,
) -> torch.Tensor:
    """carriers (frames, m, width), frame_features (frames, patches, width)
    -> refreshed carriers, re-split per frame."""
    if carriers.dim() != 3 or frame_features.dim() != 3:
        raise ShapeError("temporal_capture expects (frames, tokens, width) inputs")
    frames, m, width = carriers.shape
    if frames == 0:
        raise ShapeError("temporal_capture on an empty clip")
    if frame_features.shape[0] != frames or frame_features.shape[2] != width:
        raise ShapeError(
            f"carriers {tuple(carriers.shape)} and features {tuple(frame_features.shape)} disagree"
        )
    x = carriers.reshape(frames * m, width)
    x = layer(x)
    keys = frame_features.reshape(-1, width)
    x = layer.cross_forward(x, keys)
    return x.reshape(frames, m, width)


def temporal_capture_flops(
    clip_len: int,
    carrier_tokens: int,
    patch_tokens: int,
    width: int,
    ffn_hidden: int,
) -> int:
    """Closed-form multiply-accumulate count of one capture step.

    Attention cores: 2*S^2*C for the encoder over S = clip_len*carriers
    tokens, 2*S*K*C for the decoder over K = clip_len*patches keys.
    Projection terms: q/k/v/out maps and both feed-forward passes.
    """
    s = clip_len * carrier_tokens
    if s == 0:
        return 0
    k = clip_len * patch_tokens
    c, hidden = width, ffn_hidden
    attention = 2 * s * s * c + 2 * s * k * c
    projections = (6 * s + 2 * k) * c * c + 4 * s * c * hidden
    return attention + projections
