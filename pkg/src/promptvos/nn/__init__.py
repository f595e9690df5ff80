from promptvos.nn.counter import MacCounter, count_macs
from promptvos.nn.functional import (
    AttentionParams,
    FeedForward,
    LayerNorm,
    assert_finite,
    ffn_apply,
    layer_norm,
    linear_apply,
    multi_head_attention,
)
from promptvos.nn.gradcheck import GradCheckReport, finite_diff_grad_check
from promptvos.nn.optim import AdamW, adamw_update
from promptvos.nn.tensorio import (
    load_weights,
    read_array,
    save_weights,
    write_array,
)

__all__ = [
    "AdamW",
    "AttentionParams",
    "FeedForward",
    "GradCheckReport",
    "LayerNorm",
    "MacCounter",
    "adamw_update",
    "assert_finite",
    "count_macs",
    "ffn_apply",
    "finite_diff_grad_check",
    "layer_norm",
    "linear_apply",
    "load_weights",
    "multi_head_attention",
    "read_array",
    "save_weights",
    "write_array",
]
