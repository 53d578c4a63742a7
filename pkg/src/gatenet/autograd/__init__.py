"""Minimal rank-4 tensor engine with reverse-mode differentiation."""

from .ops import (
    ConvSpec,
    add,
    bce,
    bilinear_upsample,
    channel_slice,
    concat_channels,
    conv2d,
    elementwise,
    fold2x2,
    folded_atrous_conv,
    global_avg_pool,
    interp_matrix,
    max_pool2x2,
    mean_all,
    relu,
    scale_by_gate,
    sigmoid,
    sum_all,
    unfold2x2,
)
from .tensor import GradTape, Node, Tensor, active_tape, backward

__all__ = [
    "ConvSpec",
    "GradTape",
    "Node",
    "Tensor",
    "active_tape",
    "add",
    "backward",
    "bce",
    "bilinear_upsample",
    "channel_slice",
    "concat_channels",
    "conv2d",
    "elementwise",
    "fold2x2",
    "folded_atrous_conv",
    "global_avg_pool",
    "interp_matrix",
    "max_pool2x2",
    "mean_all",
    "relu",
    "scale_by_gate",
    "sigmoid",
    "sum_all",
    "unfold2x2",
]
