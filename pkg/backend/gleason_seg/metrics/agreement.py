"""Pixel-level agreement metrics: confusion matrix, quadratic kappa and per-class report.

Class order is ordinal (BG < NC < GP3 < GP4 < GP5), which the quadratic
kappa weights rely on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel

from gleason_seg.architectures.specs import CLASS_NAMES
from gleason_seg.atomic import write_csv
from gleason_seg.errors import EmptyConfusionMatrixError, LabelRangeError, ShapeMismatchError

logger = logging.getLogger(__name__)

CSV_HEADER = ("class", "precision", "recall", "dice", "iou")
NOT_AVAILABLE = "n/a"

# ---------------------------------------------------------------------------
# Confusion matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """K x K pixel counts; entry (r, c) counts pixels with truth r predicted as c."""

    counts: NDArray[np.int64]

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"Confusion matrix must be square, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("Confusion matrix counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, num_classes: int = len(CLASS_NAMES)) -> ConfusionMatrix:
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: ConfusionMatrix) -> ConfusionMatrix:
        """Entrywise sum; associative and commutative, so per-image matrices can be merged in any order."""
        if other.num_classes != self.num_classes:
            raise ShapeMismatchError("ConfusionMatrix.merge", self.counts.shape, other.counts.shape)
        return ConfusionMatrix(self.counts + other.counts)

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return self.merge(other)

    def without_background(self) -> ConfusionMatrix:
        """Drop the BG row and column (class 0)."""
        return ConfusionMatrix(self.counts[1:, 1:])


def confusion(pred: ArrayLike, truth: ArrayLike, num_classes: int = len(CLASS_NAMES)) -> ConfusionMatrix:
    """Tally predicted against true labels.

    Raises:
        ShapeMismatchError: ``pred`` and ``truth`` differ in shape.
        LabelRangeError: A label outside 0..num_classes-1.
    """
    p = np.asarray(pred, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape:
        raise ShapeMismatchError("confusion pred vs truth", tuple(p.shape), tuple(t.shape))
    for labels in (p, t):
        bad = labels[(labels < 0) | (labels >= num_classes)]
        if bad.size:
            raise LabelRangeError(int(bad.flat[0]), num_classes)
    flat = t.reshape(-1) * num_classes + p.reshape(-1)
    counts = np.bincount(flat, minlength=num_classes * num_classes).reshape(num_classes, num_classes)
    return ConfusionMatrix(counts.astype(np.int64))


# ---------------------------------------------------------------------------
# Kappa
# ---------------------------------------------------------------------------


def quadratic_weights(num_classes: int) -> NDArray[np.float64]:
    """w[i, j] = (i - j)^2 / (K - 1)^2."""
    index = np.arange(num_classes, dtype=np.float64)
    return (index[:, None] - index[None, :]) ** 2 / float(num_classes - 1) ** 2


def quadratic_kappa(cm: ConfusionMatrix, include_background: bool = True) -> float | None:
    """Cohen's quadratic-weighted kappa of the two raters in ``cm``.

    Returns None when the expected weighted disagreement is zero (both raters
    constant), where kappa is undefined. With ``include_background=False``
    the BG row/column is dropped and the remaining K - 1 classes are rated.

    Raises:
        EmptyConfusionMatrixError: ``cm`` counts no pixels.
    """
    if cm.total == 0:
        raise EmptyConfusionMatrixError("quadratic_kappa needs at least one counted pixel")
    matrix = cm if include_background else cm.without_background()
    total = matrix.total
    if total == 0 or matrix.num_classes < 2:
        return None
    observed = matrix.counts / total
    expected = np.outer(matrix.counts.sum(axis=1), matrix.counts.sum(axis=0)) / float(total) ** 2
    weights = quadratic_weights(matrix.num_classes)
    expected_disagreement = float(np.sum(weights * expected))
    if expected_disagreement == 0.0:
        return None
    return 1.0 - float(np.sum(weights * observed)) / expected_disagreement


# ---------------------------------------------------------------------------
# Per-class report
# ---------------------------------------------------------------------------


class ClassReport(BaseModel):
    """Hard-label scores of one class; None marks an undefined value."""

    name: str
    precision: float | None = None
    recall: float | None = None
    dice: float | None = None
    iou: float | None = None


class MetricsReport(BaseModel):
    """Per-class scores plus pixel accuracy and agreement summaries."""

    classes: list[ClassReport]
    accuracy: float
    quadratic_kappa: float | None = None
    mean_foreground_dice: float | None = None
    total_pixels: int = 0


def class_names(num_classes: int) -> list[str]:
    if num_classes == len(CLASS_NAMES):
        return list(CLASS_NAMES)
    return [f"class{i}" for i in range(num_classes)]


def _ratio(numerator: float, denominator: float) -> float | None:
    return numerator / denominator if denominator > 0 else None


def per_class_report(cm: ConfusionMatrix, include_background: bool = True) -> MetricsReport:
    """Precision, recall, Dice = 2TP / (2TP + FP + FN) and IoU per class, plus accuracy and kappa.

    Classes absent from both prediction and truth get no defined scores.

    Raises:
        EmptyConfusionMatrixError: ``cm`` counts no pixels.
    """
    if cm.total == 0:
        raise EmptyConfusionMatrixError("per_class_report needs at least one counted pixel")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp

    classes: list[ClassReport] = []
    for index, name in enumerate(class_names(cm.num_classes)):
        t, p, n = float(tp[index]), float(fp[index]), float(fn[index])
        classes.append(
            ClassReport(
                name=name,
                precision=_ratio(t, t + p),
                recall=_ratio(t, t + n),
                dice=_ratio(2.0 * t, 2.0 * t + p + n),
                iou=_ratio(t, t + p + n),
            )
        )

    foreground = [c.dice for c in classes[1:] if c.dice is not None]
    return MetricsReport(
        classes=classes,
        accuracy=float(tp.sum() / counts.sum()),
        quadratic_kappa=quadratic_kappa(cm, include_background=include_background),
        mean_foreground_dice=float(np.mean(foreground)) if foreground else None,
        total_pixels=cm.total,
    )


def format_value(value: float | None) -> str:
    return NOT_AVAILABLE if value is None else f"{value:.6f}"


def write_metrics_csv(report: MetricsReport, path: Path | str) -> Path:
    """Write ``class,precision,recall,dice,iou`` rows followed by accuracy and quadratic_kappa rows."""
    target = Path(path)
    rows = [list(CSV_HEADER)]
    for c in report.classes:
        rows.append([c.name, *(format_value(v) for v in (c.precision, c.recall, c.dice, c.iou))])
    rows.append(["accuracy", format_value(report.accuracy), "", "", ""])
    rows.append(["quadratic_kappa", format_value(report.quadratic_kappa), "", "", ""])
    write_csv(target, rows)
    logger.info(f"Wrote metrics for {report.total_pixels} pixels to {target}")
    return target
