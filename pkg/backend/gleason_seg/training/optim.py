"""SGD-with-momentum and Adam updates over named parameters."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from gleason_seg.engine.tensor import Array, Tensor
from gleason_seg.errors import MissingGradientError, ShapeMismatchError

OptimizerKind = Literal["adam", "sgd_momentum"]


class OptimizerConfig(BaseModel):
    """Hyper-parameters; ``momentum`` applies to SGD, ``beta1``/``beta2``/``eps_adam`` to Adam."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: OptimizerKind = "adam"
    lr: float = Field(default=1e-3, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps_adam: float = Field(default=1e-8, gt=0)


@dataclass
class OptimizerState:
    """Config, per-parameter moment buffers (created on first use) and the step counter."""

    config: OptimizerConfig
    first_moment: dict[str, Array] = field(default_factory=dict)
    second_moment: dict[str, Array] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def create(cls, kind: OptimizerKind = "adam", **hyper: float) -> OptimizerState:
        return cls(OptimizerConfig(kind=kind, **hyper))  # type: ignore[arg-type]


def _buffer(store: dict[str, Array], name: str, like: Array) -> Array:
    buffer = store.get(name)
    if buffer is None:
        buffer = np.zeros_like(like)
        store[name] = buffer
    return buffer


def optimizer_step(opt: OptimizerState, params: Mapping[str, Tensor], grads: Mapping[str, Array]) -> dict[str, Tensor]:
    """Return updated copies of ``params``; ``opt`` buffers and step counter advance in place.

    SGD-momentum: v <- mu * v + g; p <- p - lr * v.
    Adam: bias-corrected first/second moments, p <- p - lr * m_hat / (sqrt(v_hat) + eps).

    Raises:
        MissingGradientError: A parameter without a gradient.
        ShapeMismatchError: A gradient shaped differently from its parameter.
    """
    for name, param in params.items():
        if name not in grads:
            raise MissingGradientError(name)
        if grads[name].shape != param.shape:
            raise ShapeMismatchError(f"Gradient of '{name}'", tuple(grads[name].shape), param.shape)

    cfg = opt.config
    opt.step += 1
    updated: dict[str, Tensor] = {}
    for name, param in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if cfg.kind == "sgd_momentum":
            velocity = cfg.momentum * _buffer(opt.first_moment, name, g) + g
            opt.first_moment[name] = velocity
            delta = cfg.lr * velocity
        else:
            m = cfg.beta1 * _buffer(opt.first_moment, name, g) + (1.0 - cfg.beta1) * g
            v = cfg.beta2 * _buffer(opt.second_moment, name, g) + (1.0 - cfg.beta2) * g * g
            opt.first_moment[name] = m
            opt.second_moment[name] = v
            m_hat = m / (1.0 - cfg.beta1**opt.step)
            v_hat = v / (1.0 - cfg.beta2**opt.step)
            delta = cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)
        updated[name] = Tensor(param.data - delta, requires_grad=param.requires_grad)
    return updated
