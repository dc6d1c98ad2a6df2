"""
Training loop for the text-conditioned denoiser.
"""

from .trainer import (
    TrainConfig,
    Trainer,
    TrainLogRecord,
    TrainResult,
    adam_step,
    build_optimizer,
    lr_at,
    prepare_batch,
    train,
    training_loss,
)

__all__ = [
    "TrainConfig",
    "TrainLogRecord",
    "TrainResult",
    "Trainer",
    "adam_step",
    "build_optimizer",
    "lr_at",
    "prepare_batch",
    "train",
    "training_loss",
]
