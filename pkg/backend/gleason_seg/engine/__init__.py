"""Tensor core: autograd tape, nn primitives and the gradient checker."""

from gleason_seg.engine.gradcheck import GradCheckResult, grad_check, grad_check_detailed, kink_free_sample
from gleason_seg.engine.tensor import (
    GradientStore,
    Tape,
    Tensor,
    add,
    apply_op,
    backward,
    elementwise,
    mul,
    reduce_sum,
    relu,
    scale,
    sub,
)

__all__ = [
    "GradCheckResult",
    "GradientStore",
    "Tape",
    "Tensor",
    "add",
    "apply_op",
    "backward",
    "elementwise",
    "grad_check",
    "grad_check_detailed",
    "kink_free_sample",
    "mul",
    "reduce_sum",
    "relu",
    "scale",
    "sub",
]
