"""Registered gradient checks for every differentiable op and a tiny instance of each architecture.

Each case builds a scalar function, a point and (where pooling ties or relu
zeros are likely) a sampler for replacement points. Functions of
probability maps are contracted with fixed random weights: a plain sum of a
softmax output is constant and has zero gradient.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np

from gleason_seg.architectures import build_model, build_residual_block
from gleason_seg.architectures.specs import ArchitectureSpec
from gleason_seg.engine import ops
from gleason_seg.engine.gradcheck import DEFAULT_EPS, Sampler, ScalarFn, grad_check_detailed, kink_free_sample
from gleason_seg.engine.tensor import Tensor, mul, reduce_sum, relu
from gleason_seg.metrics.dice import dice_loss

logger = logging.getLogger(__name__)

PASS_THRESHOLD = 1e-4
CaseKind = Literal["op", "arch"]
CaseSetup = tuple[ScalarFn, Tensor, Sampler | None]


@dataclass(frozen=True)
class GradCase:
    name: str
    kind: CaseKind
    setup: Callable[[np.random.Generator], CaseSetup]


@dataclass(frozen=True)
class CaseResult:
    name: str
    kind: CaseKind
    max_relative_error: float
    kinked: int
    resamples: int
    size: int

    @property
    def skipped(self) -> bool:
        """Every element sat on a kink, so nothing was compared."""
        return self.kinked >= self.size

    @property
    def passed(self) -> bool:
        return not self.skipped and self.max_relative_error < PASS_THRESHOLD

    @property
    def status(self) -> str:
        if self.skipped:
            return "skipped"
        return "ok" if self.passed else "FAIL"


def weighted_sum(out: Tensor, weights: Tensor) -> Tensor:
    return reduce_sum(mul(out, weights))


def _normal(rng: np.random.Generator, shape: tuple[int, int, int, int], scale: float = 1.0) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape))


def _kink_sampler(shape: tuple[int, int, int, int]) -> Sampler:
    return lambda rng: kink_free_sample(shape, rng)


# ---------------------------------------------------------------------------
# Op cases
# ---------------------------------------------------------------------------


def _relu_case(rng: np.random.Generator) -> CaseSetup:
    shape = (1, 2, 3, 3)
    return (lambda x: reduce_sum(relu(x))), kink_free_sample(shape, rng), _kink_sampler(shape)


def _reduce_sum_case(rng: np.random.Generator) -> CaseSetup:
    weights = _normal(rng, (2, 1, 3, 3))
    return (lambda x: weighted_sum(reduce_sum(x, axes=(1,)), weights)), _normal(rng, (2, 4, 3, 3)), None


def _conv2d_case(rng: np.random.Generator) -> CaseSetup:
    params = ops.ConvParams(weight=_normal(rng, (3, 2, 3, 3)), bias=_normal(rng, (1, 3, 1, 1)))
    weights = _normal(rng, (1, 3, 5, 5))
    return (lambda x: weighted_sum(ops.conv2d(x, params), weights)), _normal(rng, (1, 2, 5, 5)), None


def _conv2d_strided_case(rng: np.random.Generator) -> CaseSetup:
    params = ops.ConvParams(weight=_normal(rng, (2, 2, 3, 3)), bias=_normal(rng, (1, 2, 1, 1)), stride=2)
    weights = _normal(rng, (1, 2, 3, 3))
    return (lambda x: weighted_sum(ops.conv2d(x, params), weights)), _normal(rng, (1, 2, 6, 5)), None


def _conv2d_weight_case(rng: np.random.Generator) -> CaseSetup:
    x = _normal(rng, (2, 2, 4, 4))
    bias = _normal(rng, (1, 3, 1, 1))
    weights = _normal(rng, (2, 3, 4, 4))

    def f(w: Tensor) -> Tensor:
        return weighted_sum(ops.conv2d(x, ops.ConvParams(weight=w, bias=bias)), weights)

    return f, _normal(rng, (3, 2, 3, 3)), None


def _conv2d_transpose_case(rng: np.random.Generator) -> CaseSetup:
    params = ops.ConvParams(
        weight=_normal(rng, (3, 2, 2, 2)), bias=_normal(rng, (1, 2, 1, 1)), stride=2, padding="valid", transposed=True
    )
    weights = _normal(rng, (1, 2, 6, 6))

    def f(x: Tensor) -> Tensor:
        return weighted_sum(ops.conv2d_transpose(x, params, stride=2), weights)

    return f, _normal(rng, (1, 3, 3, 3)), None


def _max_pool_case(rng: np.random.Generator) -> CaseSetup:
    shape = (1, 2, 4, 4)
    weights = _normal(rng, (1, 2, 2, 2))
    return (lambda x: weighted_sum(ops.max_pool2d(x)[0], weights)), kink_free_sample(shape, rng), _kink_sampler(shape)


def _max_unpool_case(rng: np.random.Generator) -> CaseSetup:
    _, indices = ops.max_pool2d(kink_free_sample((1, 2, 4, 4), rng))
    weights = _normal(rng, (1, 2, 4, 4))
    return (lambda y: weighted_sum(ops.max_unpool2d(y, indices), weights)), _normal(rng, (1, 2, 2, 2)), None


def _batch_norm_state(rng: np.random.Generator, channels: int, mode: ops.BatchNormMode) -> ops.BatchNormState:
    return ops.BatchNormState(
        gamma=_normal(rng, (1, channels, 1, 1)),
        beta=_normal(rng, (1, channels, 1, 1)),
        running_mean=_normal(rng, (1, channels, 1, 1)),
        running_var=Tensor(rng.uniform(0.5, 2.0, size=(1, channels, 1, 1))),
        mode=mode,
    )


def _batch_norm_eval_case(rng: np.random.Generator) -> CaseSetup:
    state = _batch_norm_state(rng, 3, "eval")
    weights = _normal(rng, (2, 3, 3, 3))
    return (lambda x: weighted_sum(ops.batch_norm2d(x, state), weights)), _normal(rng, (2, 3, 3, 3)), None


def _batch_norm_train_case(rng: np.random.Generator) -> CaseSetup:
    state = _batch_norm_state(rng, 2, "train")
    weights = _normal(rng, (2, 2, 3, 3))
    return (lambda x: weighted_sum(ops.batch_norm2d(x, state), weights)), _normal(rng, (2, 2, 3, 3)), None


def _softmax_case(rng: np.random.Generator) -> CaseSetup:
    weights = _normal(rng, (1, 5, 2, 3))
    return (lambda x: weighted_sum(ops.softmax_channels(x), weights)), _normal(rng, (1, 5, 2, 3)), None


def _concat_case(rng: np.random.Generator) -> CaseSetup:
    other = _normal(rng, (1, 3, 2, 2))
    weights = _normal(rng, (1, 5, 2, 2))
    return (lambda x: weighted_sum(ops.concat_channels(x, other), weights)), _normal(rng, (1, 2, 2, 2)), None


def _resize_case(rng: np.random.Generator) -> CaseSetup:
    weights = _normal(rng, (1, 2, 5, 4))
    return (lambda x: weighted_sum(ops.resize_bilinear(x, 5, 4), weights)), _normal(rng, (1, 2, 3, 3)), None


def _dice_loss_case(rng: np.random.Generator) -> CaseSetup:
    labels = rng.integers(0, 3, size=(2, 2, 2))
    truth = Tensor(np.eye(3)[labels].transpose(0, 3, 1, 2))
    return (lambda p: dice_loss(p, truth)), Tensor(rng.uniform(0.05, 0.95, size=(2, 3, 2, 2))), None


def _residual_block_case(rng: np.random.Generator) -> CaseSetup:
    block = build_residual_block(2, 3)
    block.store.mode = "eval"
    weights = _normal(rng, (1, 3, 6, 6))
    shape = (1, 2, 6, 6)
    return (lambda x: weighted_sum(block(x), weights)), _normal(rng, shape), lambda r: _normal(r, shape)


# ---------------------------------------------------------------------------
# Architecture cases
# ---------------------------------------------------------------------------

GRADCHECK_SPECS: dict[str, ArchitectureSpec] = {
    "unet": ArchitectureSpec(family="unet", depth=1, base_filters=2, input_size=4),
    "resunet": ArchitectureSpec(family="resunet", depth=1, base_filters=2, input_size=4),
    "segnet": ArchitectureSpec(family="segnet", depth=1, base_filters=2, input_size=4),
    # FCN encoders always have five stages, so the smallest instance pools 32 -> 1
    "fcn8": ArchitectureSpec(family="fcn", stride=8, base_filters=2, in_channels=1, input_size=32),
    "fcn16": ArchitectureSpec(family="fcn", stride=16, base_filters=2, in_channels=1, input_size=32),
    "fcn32": ArchitectureSpec(family="fcn", stride=32, base_filters=2, in_channels=1, input_size=32),
}


def _arch_case(name: str) -> Callable[[np.random.Generator], CaseSetup]:
    def setup(rng: np.random.Generator) -> CaseSetup:
        spec = GRADCHECK_SPECS[name]
        model = build_model(spec, seed=int(rng.integers(2**31))).eval()
        shape = (1, spec.in_channels, spec.input_size, spec.input_size)
        weights = _normal(rng, (1, spec.num_classes, spec.input_size, spec.input_size))
        return (lambda x: weighted_sum(model(x), weights)), _normal(rng, shape), lambda r: _normal(r, shape)

    return setup


OP_CASES: dict[str, GradCase] = {
    case.name: case
    for case in (
        GradCase("relu", "op", _relu_case),
        GradCase("reduce_sum", "op", _reduce_sum_case),
        GradCase("conv2d", "op", _conv2d_case),
        GradCase("conv2d_strided", "op", _conv2d_strided_case),
        GradCase("conv2d_weight", "op", _conv2d_weight_case),
        GradCase("conv2d_transpose", "op", _conv2d_transpose_case),
        GradCase("max_pool2d", "op", _max_pool_case),
        GradCase("max_unpool2d", "op", _max_unpool_case),
        GradCase("batch_norm2d", "op", _batch_norm_eval_case),
        GradCase("batch_norm2d_train", "op", _batch_norm_train_case),
        GradCase("softmax_channels", "op", _softmax_case),
        GradCase("concat_channels", "op", _concat_case),
        GradCase("resize_bilinear", "op", _resize_case),
        GradCase("dice_loss", "op", _dice_loss_case),
        GradCase("residual_block", "op", _residual_block_case),
    )
}

ARCH_CASES: dict[str, GradCase] = {name: GradCase(name, "arch", _arch_case(name)) for name in GRADCHECK_SPECS}


def run_case(case: GradCase, seed: int = 0, eps: float = DEFAULT_EPS) -> CaseResult:
    rng = np.random.default_rng(seed)
    f, x, sampler = case.setup(rng)
    outcome = grad_check_detailed(f, x, eps, sampler=sampler, rng=rng)
    logger.debug(f"{case.kind} {case.name}: {outcome.max_relative_error:.3e}")
    return CaseResult(
        name=case.name,
        kind=case.kind,
        max_relative_error=outcome.max_relative_error,
        kinked=len(outcome.kinked),
        resamples=outcome.resamples,
        size=int(outcome.analytic.size),
    )


def select_cases(op: str | None = None, arch: str | None = None) -> list[GradCase]:
    """The named op or architecture case, or every case when neither is given.

    Raises:
        KeyError: Unknown name.
    """
    if op is not None:
        return [OP_CASES[op]]
    if arch is not None:
        return [ARCH_CASES[arch]]
    return [*OP_CASES.values(), *ARCH_CASES.values()]


def format_table(results: list[CaseResult]) -> str:
    lines = [f"{'kind':<5} {'name':<20} {'max_rel_error':>14} {'skipped':>8}  status"]
    for r in results:
        lines.append(f"{r.kind:<5} {r.name:<20} {r.max_relative_error:>14.3e} {r.kinked:>8}  {r.status}")
    return "\n".join(lines)
