"""End-to-end overfit experiment on the synthetic dataset.

Tests cover:
- Tiny ResU-Net memorises 8 synthetic images within 300 steps
- Tiny U-Net trained for the same number of steps also converges
"""

from __future__ import annotations

import math

import pytest

from gleason_seg.architectures import preset_spec
from gleason_seg.data import generate_synthetic, load_dataset
from gleason_seg.scripts.cli import evaluate_model
from gleason_seg.training import TrainConfig, train

STEPS = 300
BATCH = 2
SAMPLES = 8


@pytest.fixture(scope="module")
def training_set(tmp_path_factory):
    manifest = generate_synthetic(tmp_path_factory.mktemp("overfit"), count=SAMPLES, size=32, seed=7, test_fraction=0.0)
    return load_dataset(manifest, "train")


def _overfit(preset, samples, tmp_path):
    config = TrainConfig(
        arch=preset_spec(preset),
        epochs=STEPS * BATCH // SAMPLES,
        batch_size=BATCH,
        seed=0,
        loss_log=tmp_path / "loss.csv",
        log_interval=50,
    )
    return train(config, samples)


@pytest.mark.e2e
@pytest.mark.slow
@pytest.mark.timeout(900)
class TestOverfit:
    def test_resunet_memorises_training_set(self, training_set, tmp_path):
        result = _overfit("tiny-resunet", training_set, tmp_path)
        assert len(result.history) == STEPS
        assert all(math.isfinite(loss) for loss in result.losses)
        assert result.losses[-1] < result.losses[0]

        report = evaluate_model(result.model, training_set)
        assert report.mean_foreground_dice is not None
        assert report.mean_foreground_dice >= 0.95
        assert report.quadratic_kappa is not None
        assert report.quadratic_kappa >= 0.9

    def test_unet_converges_in_same_steps(self, training_set, tmp_path):
        result = _overfit("tiny-unet", training_set, tmp_path)
        assert result.losses[-1] < result.losses[0]
        report = evaluate_model(result.model, training_set)
        assert report.mean_foreground_dice is not None
        assert report.mean_foreground_dice >= 0.90
