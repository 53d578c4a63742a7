"""Optimizer, schedule, checkpoints and the training loop."""

from .ablation import run_ablation, variant_config
from .checkpoint import CheckpointError, TrainState, load_checkpoint, save_checkpoint
from .config import TrainConfig, preset
from .optim import SGD, NumericError, poly_lr, sgd_step
from .trainer import RunLog, TrainResult, evaluate_model, train

__all__ = [
    "SGD",
    "CheckpointError",
    "NumericError",
    "RunLog",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "evaluate_model",
    "load_checkpoint",
    "poly_lr",
    "preset",
    "run_ablation",
    "save_checkpoint",
    "sgd_step",
    "train",
    "variant_config",
]
