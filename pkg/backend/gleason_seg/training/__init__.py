"""Training loop, optimizers, configuration and checkpoints."""

from gleason_seg.training.checkpoint import load_checkpoint, save_checkpoint
from gleason_seg.training.config import TrainConfig, load_config_file
from gleason_seg.training.loop import LossRecord, TrainResult, one_hot, train, write_loss_log
from gleason_seg.training.optim import OptimizerConfig, OptimizerState, optimizer_step

__all__ = [
    "LossRecord",
    "OptimizerConfig",
    "OptimizerState",
    "TrainConfig",
    "TrainResult",
    "load_checkpoint",
    "load_config_file",
    "one_hot",
    "optimizer_step",
    "save_checkpoint",
    "train",
    "write_loss_log",
]
