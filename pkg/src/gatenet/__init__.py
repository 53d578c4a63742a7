"""Gated network for salient object detection, from tensor engine to CLI."""

from .estimator import GateNetSaliency

__all__ = ["GateNetSaliency"]
__version__ = "0.1.0"
