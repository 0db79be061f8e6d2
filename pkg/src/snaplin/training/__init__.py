"""Optimization, checkpoints and training protocols."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .loop import (
    Trainer,
    TrainingCallbacks,
    leave_one_out,
    train_amortized,
    train_single,
    validation_score,
)
from .optim import AdamWState, adamw_step, clip_by_global_norm

__all__ = [
    "AdamWState",
    "Checkpoint",
    "Trainer",
    "TrainingCallbacks",
    "adamw_step",
    "clip_by_global_norm",
    "leave_one_out",
    "load_checkpoint",
    "save_checkpoint",
    "train_amortized",
    "train_single",
    "validation_score",
]
