"""Exception hierarchy shared by every gleason_seg module.

Each error also derives from the closest builtin so callers can catch
``ValueError`` / ``RuntimeError`` without importing this module.
"""

from __future__ import annotations

from pathlib import Path


class SegmentationError(Exception):
    """Base class for all domain errors raised by gleason_seg."""


class ShapeMismatchError(SegmentationError, ValueError):
    """Raised when two tensors (or a tensor and a parameter) disagree in shape."""

    def __init__(self, what: str, left: tuple[int, ...], right: tuple[int, ...]) -> None:
        self.left = left
        self.right = right
        super().__init__(f"{what}: shape {left} does not match shape {right}")


class InvalidAxisError(SegmentationError, ValueError):
    """Raised when a reduction names an axis outside 0..3."""


class SpatialSizeError(SegmentationError, ValueError):
    """Raised when spatial dimensions violate a pooling, padding or divisibility contract."""


class BatchStatisticsError(SegmentationError, ValueError):
    """Raised when train-mode batch normalisation sees a single value per channel."""


class TapeError(SegmentationError, RuntimeError):
    """Raised on misuse of the autograd tape (non-scalar loss, unknown tensor, reuse after backward)."""


class GradientCheckError(SegmentationError, RuntimeError):
    """Raised when the function under a gradient check produces a non-finite value."""


class LabelRangeError(SegmentationError, ValueError):
    """Raised when a label map holds a value outside 0..num_classes-1."""

    def __init__(self, value: int, num_classes: int, path: Path | str | None = None) -> None:
        self.value = value
        self.num_classes = num_classes
        self.path = path
        where = f" in {path}" if path is not None else ""
        super().__init__(f"Label value {value}{where} is outside the valid range 0..{num_classes - 1}")


class NetpbmFormatError(SegmentationError, ValueError):
    """Raised when a PPM/PGM file is malformed or uses an unsupported variant."""


class CheckpointFormatError(SegmentationError, ValueError):
    """Raised when a checkpoint file has a bad magic, version, length or parameter layout."""


class ManifestError(SegmentationError, ValueError):
    """Raised when a dataset manifest references missing files or is malformed."""


class MissingGradientError(SegmentationError, KeyError):
    """Raised when an optimizer step lacks a gradient for a trainable parameter."""

    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"No gradient supplied for trainable parameter '{name}'")


class NonFiniteLossError(SegmentationError, RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""

    def __init__(self, step: int, epoch: int, value: float) -> None:
        self.step = step
        self.epoch = epoch
        self.value = value
        super().__init__(f"Non-finite loss {value} at step {step} (epoch {epoch}); aborting training")


class EmptyConfusionMatrixError(SegmentationError, ValueError):
    """Raised when a metric needs at least one counted pixel."""
