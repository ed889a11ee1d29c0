"""Unit tests for the SGD-momentum and Adam updates."""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from gleason_seg.engine import Tensor
from gleason_seg.errors import MissingGradientError, ShapeMismatchError
from gleason_seg.training import OptimizerConfig, OptimizerState, optimizer_step


def _param(value: float) -> Tensor:
    return Tensor(np.full((1, 1, 1, 1), value), requires_grad=True)


@pytest.mark.unit
class TestSgdMomentum:
    def test_first_step_is_plain_sgd(self):
        opt = OptimizerState.create("sgd_momentum", lr=0.1, momentum=0.9)
        out = optimizer_step(opt, {"w": _param(1.0)}, {"w": np.full((1, 1, 1, 1), 2.0)})
        assert out["w"].item() == pytest.approx(0.8)
        assert opt.step == 1

    def test_velocity_accumulates(self):
        opt = OptimizerState.create("sgd_momentum", lr=0.1, momentum=0.5)
        params = {"w": _param(0.0)}
        grad = {"w": np.ones((1, 1, 1, 1))}
        params = optimizer_step(opt, params, grad)  # v = 1
        params = optimizer_step(opt, params, grad)  # v = 1.5
        assert params["w"].item() == pytest.approx(-0.25)
        np.testing.assert_allclose(opt.first_moment["w"], 1.5)

    def test_zero_momentum_is_sgd(self):
        opt = OptimizerState.create("sgd_momentum", lr=0.5, momentum=0.0)
        params = {"w": _param(3.0)}
        for _ in range(3):
            params = optimizer_step(opt, params, {"w": np.ones((1, 1, 1, 1))})
        assert params["w"].item() == pytest.approx(1.5)


@pytest.mark.unit
class TestAdam:
    def test_defaults(self):
        cfg = OptimizerConfig()
        assert (cfg.kind, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam) == ("adam", 1e-3, 0.9, 0.999, 1e-8)

    def test_first_step_moves_by_lr(self):
        # bias correction makes the first step lr * g / |g|
        opt = OptimizerState.create("adam", lr=0.01)
        out = optimizer_step(opt, {"w": _param(1.0)}, {"w": np.full((1, 1, 1, 1), 123.0)})
        assert out["w"].item() == pytest.approx(0.99, abs=1e-9)

    def test_minimises_square(self):
        opt = OptimizerState.create("adam", lr=0.05)
        params = {"w": _param(1.0)}
        closest = 1.0
        for _ in range(200):
            w = params["w"].item()
            params = optimizer_step(opt, params, {"w": np.full((1, 1, 1, 1), 2.0 * w)})
            closest = min(closest, abs(params["w"].item()))
        assert closest < 0.05

    def test_moments_kept_per_parameter(self):
        opt = OptimizerState.create("adam")
        params = {"a": _param(1.0), "b": _param(1.0)}
        optimizer_step(opt, params, {"a": np.ones((1, 1, 1, 1)), "b": -np.ones((1, 1, 1, 1))})
        assert set(opt.first_moment) == set(opt.second_moment) == {"a", "b"}
        assert opt.first_moment["a"].item() == pytest.approx(0.1)
        assert opt.first_moment["b"].item() == pytest.approx(-0.1)


@pytest.mark.unit
class TestStepContract:
    def test_inputs_are_not_mutated(self):
        params = {"w": _param(1.0)}
        optimizer_step(OptimizerState.create(), params, {"w": np.ones((1, 1, 1, 1))})
        assert params["w"].item() == 1.0

    def test_requires_grad_preserved(self):
        out = optimizer_step(OptimizerState.create(), {"w": _param(1.0)}, {"w": np.ones((1, 1, 1, 1))})
        assert out["w"].requires_grad

    def test_missing_gradient(self):
        opt = OptimizerState.create()
        with pytest.raises(MissingGradientError, match="'w'"):
            optimizer_step(opt, {"w": _param(1.0)}, {})
        assert opt.step == 0

    def test_gradient_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            optimizer_step(OptimizerState.create(), {"w": _param(1.0)}, {"w": np.ones((1, 1, 1, 2))})

    @pytest.mark.parametrize("values", [{"lr": 0.0}, {"momentum": 1.0}, {"kind": "rmsprop"}, {"beta2": -0.1}])
    def test_invalid_config(self, values):
        with pytest.raises(ValidationError):
            OptimizerConfig.model_validate(values)
