"""Dice objective and evaluation metrics."""

from gleason_seg.metrics.agreement import (
    ClassReport,
    ConfusionMatrix,
    MetricsReport,
    confusion,
    per_class_report,
    quadratic_kappa,
    write_metrics_csv,
)
from gleason_seg.metrics.dice import DICE_EPSILON, dice_coefficient, dice_loss, per_class_dice

__all__ = [
    "DICE_EPSILON",
    "ClassReport",
    "ConfusionMatrix",
    "MetricsReport",
    "confusion",
    "dice_coefficient",
    "dice_loss",
    "per_class_dice",
    "per_class_report",
    "quadratic_kappa",
    "write_metrics_csv",
]
