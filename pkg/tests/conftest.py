"""Shared test fixtures for the segmentation toolkit."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from gleason_seg.architectures import ArchitectureSpec, preset_spec
from gleason_seg.data import Sample, generate_synthetic
from gleason_seg.engine import Tensor

# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


@pytest.fixture
def rng():
    """Fresh generator per test so results never depend on test order."""
    return np.random.default_rng(1234)


@pytest.fixture
def random_tensor(rng):
    """Factory for normally distributed tensors."""

    def make(*shape: int, scale: float = 1.0, requires_grad: bool = False) -> Tensor:
        return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=requires_grad)

    return make


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------


@pytest.fixture
def tiny_unet_spec() -> ArchitectureSpec:
    return preset_spec("tiny-unet")


@pytest.fixture
def tiny_resunet_spec() -> ArchitectureSpec:
    return preset_spec("tiny-resunet")


@pytest.fixture
def tiny_segnet_spec() -> ArchitectureSpec:
    return preset_spec("tiny-segnet")


@pytest.fixture
def tiny_fcn_spec() -> ArchitectureSpec:
    return preset_spec("tiny-fcn8")


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@pytest.fixture
def make_sample(rng):
    """Factory for in-memory samples with random pixels and labels."""

    def make(size: int = 16, num_classes: int = 5) -> Sample:
        image = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, size, size)))
        mask = rng.integers(0, num_classes, size=(size, size)).astype(np.int64)
        return Sample(image=image, mask=mask)

    return make


@pytest.fixture
def synthetic_dir(tmp_path):
    """Eight 32x32 synthetic samples (6 train / 2 test) with a manifest."""
    out = tmp_path / "synthetic"
    generate_synthetic(out, count=8, size=32, seed=7)
    return out


@pytest.fixture(autouse=True)
def _reset_package_logger():
    """configure_logging() installs handlers on the package logger; undo it after each test."""
    logger = logging.getLogger("gleason_seg")
    handlers, level, propagate = list(logger.handlers), logger.level, logger.propagate
    yield
    logger.handlers[:] = handlers
    logger.setLevel(level)
    logger.propagate = propagate
