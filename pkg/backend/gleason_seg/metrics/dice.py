"""Soft Dice coefficient and the multi-class Dice loss used for training.

Dice = (2 * sum(p * g) + eps) / (sum(p^2) + sum(g^2) + eps), with the summed
denominator of the volumetric formulation so perfect overlap scores 1.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike

from gleason_seg.engine.tensor import SCALAR_SHAPE, Array, Tensor, apply_op
from gleason_seg.errors import ShapeMismatchError

DICE_EPSILON = 1e-7

# per-class sums run over batch and both spatial axes
_POOLED_AXES = (0, 2, 3)


def dice_coefficient(p: ArrayLike | Tensor, g: ArrayLike | Tensor, eps: float = DICE_EPSILON) -> float:
    """Dice overlap of one class plane ``p`` (soft or hard) with the binary plane ``g``.

    Raises:
        ShapeMismatchError: ``p`` and ``g`` differ in shape.
    """
    pa = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
    ga = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
    if pa.shape != ga.shape:
        raise ShapeMismatchError("dice_coefficient planes", tuple(pa.shape), tuple(ga.shape))
    intersection = float(np.sum(pa * ga))
    denominator = float(np.sum(pa * pa) + np.sum(ga * ga))
    return (2.0 * intersection + eps) / (denominator + eps)


def per_class_dice(probs: Tensor, truth: Tensor, eps: float = DICE_EPSILON) -> Array:
    """Dice of every class channel, pooled over the batch; shape (num_classes,)."""
    if probs.shape != truth.shape:
        raise ShapeMismatchError("dice probabilities vs truth", probs.shape, truth.shape)
    p, g = probs.data, truth.data
    intersection = (p * g).sum(axis=_POOLED_AXES)
    denominator = (p * p).sum(axis=_POOLED_AXES) + (g * g).sum(axis=_POOLED_AXES)
    return (2.0 * intersection + eps) / (denominator + eps)


def dice_loss(probs: Tensor, truth: Tensor, eps: float = DICE_EPSILON) -> Tensor:
    """1 - mean over classes of the soft Dice coefficient; differentiable w.r.t. ``probs``.

    ``truth`` is treated as a constant one-hot target.

    Raises:
        ShapeMismatchError: ``probs`` and ``truth`` differ in shape.
    """
    if probs.shape != truth.shape:
        raise ShapeMismatchError("dice_loss probabilities vs truth", probs.shape, truth.shape)
    p, g = probs.data, truth.data
    num_classes = p.shape[1]
    shape = (1, num_classes, 1, 1)
    numerator = 2.0 * (p * g).sum(axis=_POOLED_AXES).reshape(shape) + eps
    denominator = ((p * p).sum(axis=_POOLED_AXES) + (g * g).sum(axis=_POOLED_AXES)).reshape(shape) + eps
    loss = 1.0 - float(np.mean(numerator / denominator))

    def backward(upstream: Array) -> tuple[Array]:
        d_dice = 2.0 * g / denominator - numerator * 2.0 * p / denominator**2
        return (-float(upstream.reshape(())) / num_classes * d_dice,)

    return apply_op((probs,), np.full(SCALAR_SHAPE, loss), backward)
