"""Unit tests for the soft Dice coefficient and the multi-class Dice loss."""

from __future__ import annotations

import numpy as np
import pytest

from gleason_seg.engine import Tape, Tensor
from gleason_seg.engine.gradcheck import grad_check
from gleason_seg.errors import ShapeMismatchError
from gleason_seg.metrics import (
    DICE_EPSILON,
    confusion,
    dice_coefficient,
    dice_loss,
    per_class_dice,
    per_class_report,
)
from gleason_seg.training import one_hot


def _brute_force_loss(p: np.ndarray, g: np.ndarray) -> float:
    n, k, h, w = p.shape
    scores = []
    for c in range(k):
        inter = sq_p = sq_g = 0.0
        for b in range(n):
            for r in range(h):
                for col in range(w):
                    inter += p[b, c, r, col] * g[b, c, r, col]
                    sq_p += p[b, c, r, col] ** 2
                    sq_g += g[b, c, r, col] ** 2
        scores.append((2.0 * inter + DICE_EPSILON) / (sq_p + sq_g + DICE_EPSILON))
    return 1.0 - sum(scores) / k


@pytest.mark.unit
class TestDiceCoefficient:
    def test_perfect_overlap(self):
        g = np.array([[1.0, 0.0], [1.0, 1.0]])
        assert dice_coefficient(g, g) == pytest.approx(1.0, abs=1e-6)

    def test_disjoint(self):
        assert dice_coefficient([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-6)

    def test_soft_prediction(self):
        assert dice_coefficient([0.8, 0.6], [1.0, 0.0]) == pytest.approx(0.8, abs=1e-7)

    def test_both_empty_is_one(self):
        assert dice_coefficient(np.zeros(4), np.zeros(4)) == 1.0

    def test_accepts_tensors(self):
        t = Tensor.ones((1, 1, 2, 2))
        assert dice_coefficient(t, t) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dice_coefficient(np.zeros(3), np.zeros(4))


@pytest.mark.unit
class TestDiceLoss:
    def test_perfect_prediction_is_zero(self, rng):
        truth = one_hot(rng.integers(0, 5, size=(2, 4, 4)), 5)
        assert dice_loss(truth, truth).item() == pytest.approx(0.0, abs=1e-7)

    def test_uniform_prediction_matches_brute_force(self):
        labels = np.full((1, 3, 3), 2)
        truth = one_hot(labels, 4)
        probs = Tensor.full((1, 4, 3, 3), 0.25)
        expected = _brute_force_loss(probs.data, truth.data)
        assert dice_loss(probs, truth).item() == pytest.approx(expected, abs=1e-12)

    def test_uniform_prediction_closed_form(self):
        truth = one_hot(np.full((1, 3, 3), 2), 4)
        probs = Tensor.full((1, 4, 3, 3), 0.25)
        # present class: 2 * 9/4 / (9/16 + 9); absent classes: eps / (9/16 + eps)
        present = (2 * 9 / 4 + DICE_EPSILON) / (9 / 16 + 9 + DICE_EPSILON)
        absent = DICE_EPSILON / (9 / 16 + DICE_EPSILON)
        assert dice_loss(probs, truth).item() == pytest.approx(1.0 - (present + 3 * absent) / 4, abs=1e-12)

    def test_loss_is_mean_of_per_class_dice(self, rng):
        probs = Tensor(rng.dirichlet(np.ones(3), size=(2, 4, 4)).transpose(0, 3, 1, 2))
        truth = one_hot(rng.integers(0, 3, size=(2, 4, 4)), 3)
        per_class = per_class_dice(probs, truth)
        assert per_class.shape == (3,)
        assert dice_loss(probs, truth).item() == pytest.approx(1.0 - per_class.mean(), abs=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        truth = one_hot(rng.integers(0, 3, size=(1, 2, 2)), 3)
        probs = Tensor(rng.uniform(0.05, 0.95, size=(1, 3, 2, 2)))
        assert grad_check(lambda p: dice_loss(p, truth), probs) < 1e-6

    def test_truth_gets_no_gradient(self, rng):
        truth = Tensor(one_hot(rng.integers(0, 2, size=(1, 2, 2)), 2).data, requires_grad=True)
        probs = Tensor(rng.uniform(size=(1, 2, 2, 2)), requires_grad=True)
        with Tape() as tape:
            loss = dice_loss(probs, truth)
        grads = tape.backward(loss)
        assert truth not in grads
        assert grads[probs].shape == probs.shape

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dice_loss(Tensor.zeros((1, 2, 2, 2)), Tensor.zeros((1, 3, 2, 2)))


@pytest.mark.unit
class TestDiceAgainstReferences:
    def test_loss_matches_brute_force_on_random_inputs(self, rng):
        for _ in range(100):
            probs = rng.dirichlet(np.ones(5), size=(1, 8, 8)).transpose(0, 3, 1, 2)
            truth = one_hot(rng.integers(0, 5, size=(1, 8, 8)), 5)
            expected = _brute_force_loss(probs, truth.data)
            assert dice_loss(Tensor(probs), truth).item() == pytest.approx(expected, abs=1e-12)

    def test_loss_decreases_as_prediction_moves_to_truth(self, rng):
        start = rng.dirichlet(np.ones(4), size=(2, 6, 6)).transpose(0, 3, 1, 2)
        truth = one_hot(rng.integers(0, 4, size=(2, 6, 6)), 4)
        losses = [
            dice_loss(Tensor((1.0 - t) * start + t * truth.data), truth).item() for t in (0.0, 0.25, 0.5, 0.75, 1.0)
        ]
        for before, after in zip(losses, losses[1:], strict=False):
            assert after <= before + 1e-12
        assert losses[0] > losses[-1]
        assert losses[-1] == pytest.approx(0.0, abs=1e-7)

    def test_hard_dice_agrees_with_confusion_report(self, rng):
        pred = rng.integers(0, 5, size=(16, 16))
        truth = rng.integers(0, 5, size=(16, 16))
        report = per_class_report(confusion(pred, truth))
        for c, scores in enumerate(report.classes):
            if not np.any(truth == c):
                continue
            hard = dice_coefficient((pred == c).astype(np.float64), (truth == c).astype(np.float64))
            assert hard == pytest.approx(scores.dice, abs=1e-6)
