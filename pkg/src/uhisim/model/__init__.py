from .vit import (
    ModelParams,
    NormStats,
    TinyViTConfig,
    backward,
    forward_mae,
    forward_regress,
    init_params,
    predict_celsius,
    sample_mask,
)
from .optim import AdamWState, adamw_step
from .train import TrainingLog, TrainSchedule, train
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ModelParams",
    "NormStats",
    "TinyViTConfig",
    "backward",
    "forward_mae",
    "forward_regress",
    "init_params",
    "predict_celsius",
    "sample_mask",
    "AdamWState",
    "adamw_step",
    "TrainingLog",
    "TrainSchedule",
    "train",
    "load_checkpoint",
    "save_checkpoint",
]
