"""Finite-difference gradient checking.

The analytic gradient comes from one taped forward/backward pass; the
numeric one from central differences, one element at a time. Perturbations
that switch a relu mask or a max-pool argmax land on a kink, where the two
one-sided slopes differ and the comparison is meaningless. Such points are
resampled when a sampler is supplied, otherwise the affected elements are
skipped and reported.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from gleason_seg.engine.tensor import ActivationPattern, Array, Shape, Tape, Tensor
from gleason_seg.errors import GradientCheckError, ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
DENOMINATOR_FLOOR = 1e-8
KINK_MARGIN_FACTOR = 10.0

ScalarFn = Callable[[Tensor], Tensor]
Sampler = Callable[[np.random.Generator], Tensor]


@dataclass
class GradCheckResult:
    """Outcome of a gradient check, with the elements skipped for sitting on a kink."""

    max_relative_error: float
    analytic: Array
    numeric: Array
    kinked: list[int] = field(default_factory=list)
    resamples: int = 0


def _evaluate(f: ScalarFn, x: Array) -> tuple[float, bytes]:
    with ActivationPattern() as pattern:
        out = f(Tensor(x))
    value = out.item()
    if not math.isfinite(value):
        raise GradientCheckError(f"Function under gradient check produced a non-finite value ({value})")
    return value, pattern.digest()


def _analytic_gradient(f: ScalarFn, x: Array) -> tuple[Array, bytes]:
    leaf = Tensor(x, requires_grad=True)
    with Tape() as tape, ActivationPattern() as pattern:
        out = f(leaf)
    if out.shape != (1, 1, 1, 1):
        raise ShapeMismatchError("grad_check needs a scalar-valued function", out.shape, (1, 1, 1, 1))
    if not math.isfinite(out.item()):
        raise GradientCheckError(f"Function under gradient check produced a non-finite value ({out.item()})")
    grads = tape.backward(out)
    return np.array(grads[leaf]), pattern.digest()


def relative_errors(analytic: Array, numeric: Array) -> Array:
    """Elementwise |a - n| / max(1e-8, |a| + |n|)."""
    return np.abs(analytic - numeric) / np.maximum(DENOMINATOR_FLOOR, np.abs(analytic) + np.abs(numeric))


def _check_once(f: ScalarFn, x: Array, eps: float) -> GradCheckResult:
    analytic, base_pattern = _analytic_gradient(f, x)
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    kinked: list[int] = []
    for index in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[index] += eps
        minus[index] -= eps
        f_plus, pattern_plus = _evaluate(f, plus.reshape(x.shape))
        f_minus, pattern_minus = _evaluate(f, minus.reshape(x.shape))
        if pattern_plus != base_pattern or pattern_minus != base_pattern:
            kinked.append(index)
        numeric.reshape(-1)[index] = (f_plus - f_minus) / (2.0 * eps)

    errors = relative_errors(analytic, numeric).reshape(-1)
    if kinked:
        errors[kinked] = 0.0
    return GradCheckResult(
        max_relative_error=float(errors.max(initial=0.0)),
        analytic=analytic,
        numeric=numeric,
        kinked=kinked,
    )


def grad_check_detailed(
    f: ScalarFn,
    x: Tensor,
    eps: float = DEFAULT_EPS,
    *,
    sampler: Sampler | None = None,
    rng: np.random.Generator | None = None,
    max_resamples: int = 5,
) -> GradCheckResult:
    """Compare the taped gradient of ``f`` at ``x`` with central differences.

    Args:
        f: Scalar-valued tensor function (output shape (1, 1, 1, 1)).
        x: Point at which to check.
        eps: Finite-difference step, > 0.
        sampler: Draws a replacement point when ``x`` sits within ``eps`` of a kink.
        rng: Generator handed to ``sampler``.
        max_resamples: Upper bound on replacement draws.

    Raises:
        GradientCheckError: ``f`` produced NaN/Inf.
        ValueError: Non-positive ``eps`` or non-finite ``x``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    point = x.numpy()
    if not np.all(np.isfinite(point)):
        raise ValueError("grad_check needs a finite input point")

    result = _check_once(f, point, eps)
    resamples = 0
    while result.kinked and sampler is not None and resamples < max_resamples:
        resamples += 1
        logger.debug(f"{len(result.kinked)} element(s) within eps of a kink; resampling ({resamples})")
        point = sampler(rng if rng is not None else np.random.default_rng(resamples)).numpy()
        result = _check_once(f, point, eps)
    result.resamples = resamples
    if result.kinked:
        logger.warning(f"Gradient check skipped {len(result.kinked)} element(s) lying on a kink")
    return result


def grad_check(f: ScalarFn, x: Tensor, eps: float = DEFAULT_EPS, *, sampler: Sampler | None = None) -> float:
    """Return the maximum relative error between analytic and central-difference gradients."""
    return grad_check_detailed(f, x, eps, sampler=sampler).max_relative_error


def kink_free_sample(shape: Shape, rng: np.random.Generator, eps: float = DEFAULT_EPS, spread: float = 1.0) -> Tensor:
    """Draw a point whose elements are pairwise distinct and away from zero by well over 10 * eps.

    Elements are a shuffled ladder of magnitudes with random signs, so relu
    zeros and max-pool ties in the input itself are at least
    ``KINK_MARGIN_FACTOR * eps`` away.
    """
    count = int(np.prod(shape))
    margin = KINK_MARGIN_FACTOR * eps
    step = max(spread / max(count, 1), 4.0 * margin)
    magnitudes = 0.05 * spread + margin + step * rng.permutation(count)
    jitter = rng.uniform(0.0, step / 4.0, size=count)
    signs = rng.choice(np.array([-1.0, 1.0]), size=count)
    return Tensor((signs * (magnitudes + jitter)).reshape(shape))
