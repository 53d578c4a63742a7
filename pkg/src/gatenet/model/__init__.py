"""Gated dual-branch saliency network."""

from .config import (
    ASPP_RATES,
    LADDER,
    TOY_CHANNELS,
    VGG_CHANNELS,
    BackboneConfig,
    ModelConfig,
    ablation_variant,
)
from .network import ForwardOutputs, GateNet, gate_statistics, init_params, loss

__all__ = [
    "ASPP_RATES",
    "LADDER",
    "TOY_CHANNELS",
    "VGG_CHANNELS",
    "BackboneConfig",
    "ForwardOutputs",
    "GateNet",
    "ModelConfig",
    "ablation_variant",
    "gate_statistics",
    "init_params",
    "loss",
]
