"""Unit tests for the tensor type and the autograd tape.

Tests cover:
  - Construction, immutability and scalar access
  - Elementwise ops and reductions, forward and backward
  - Tape scoping: nothing recorded outside a tape, single use, scalar losses only
  - Gradient accumulation when a tensor feeds several ops
  - Linearity of backward in the loss and bit-identical repeat runs
"""

from __future__ import annotations

import numpy as np
import pytest

from gleason_seg.engine import Tape, Tensor, add, backward, elementwise, mul, reduce_sum, relu, scale, sub
from gleason_seg.errors import InvalidAxisError, ShapeMismatchError, TapeError

# ---------------------------------------------------------------------------
# Tensor basics
# ---------------------------------------------------------------------------


@pytest.mark.unit
class TestTensor:
    def test_rank_four_required(self):
        with pytest.raises(ShapeMismatchError):
            Tensor(np.zeros((2, 3)))

    def test_data_is_read_only(self):
        t = Tensor.ones((1, 1, 2, 2))
        with pytest.raises(ValueError, match="read-only"):
            t.data[0, 0, 0, 0] = 5.0

    def test_constructor_copies_input(self):
        source = np.zeros((1, 1, 1, 2))
        t = Tensor(source)
        source[0, 0, 0, 0] = 3.0
        assert t.data[0, 0, 0, 0] == 0.0

    def test_numpy_returns_writable_copy(self):
        t = Tensor.full((1, 1, 1, 1), 2.0)
        copy = t.numpy()
        copy[...] = 9.0
        assert t.item() == 2.0

    def test_item_needs_scalar(self):
        assert Tensor.scalar(1.5).item() == 1.5
        with pytest.raises(ShapeMismatchError):
            Tensor.zeros((1, 2, 1, 1)).item()

    def test_shape_and_size(self):
        t = Tensor.zeros((2, 3, 4, 5))
        assert t.shape == (2, 3, 4, 5)
        assert t.size == 120

    def test_operators(self):
        a = Tensor.full((1, 1, 1, 2), 3.0)
        b = Tensor.full((1, 1, 1, 2), 2.0)
        np.testing.assert_array_equal((a + b).data, 5.0)
        np.testing.assert_array_equal((a - b).data, 1.0)
        np.testing.assert_array_equal((a * b).data, 6.0)
        np.testing.assert_array_equal((a * 0.5).data, 1.5)
        np.testing.assert_array_equal((2.0 * a).data, 6.0)
        np.testing.assert_array_equal((-a).data, -3.0)


# ---------------------------------------------------------------------------
# Elementwise and reductions
# ---------------------------------------------------------------------------


@pytest.mark.unit
class TestElementwise:
    def test_binary_shapes_must_match(self):
        with pytest.raises(ShapeMismatchError):
            add(Tensor.zeros((1, 1, 2, 2)), Tensor.zeros((1, 1, 2, 3)))

    def test_missing_operand(self):
        with pytest.raises(ValueError, match="two operands"):
            elementwise("mul", Tensor.zeros((1, 1, 1, 1)))

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="Unknown elementwise kind"):
            elementwise("pow", Tensor.zeros((1, 1, 1, 1)))  # type: ignore[arg-type]

    def test_relu_forward(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3))
        np.testing.assert_array_equal(relu(x).data.ravel(), [0.0, 0.0, 2.0])

    def test_reduce_sum_keeps_dims(self, random_tensor):
        x = random_tensor(2, 3, 4, 5)
        out = reduce_sum(x, axes=(1, 3))
        assert out.shape == (2, 1, 4, 1)
        np.testing.assert_allclose(out.data, x.data.sum(axis=(1, 3), keepdims=True))

    def test_reduce_sum_all_axes_is_scalar(self, random_tensor):
        x = random_tensor(2, 2, 2, 2)
        assert reduce_sum(x).item() == pytest.approx(float(x.data.sum()))

    def test_reduce_sum_empty_axes_is_identity(self, random_tensor):
        x = random_tensor(1, 2, 2, 2)
        np.testing.assert_array_equal(reduce_sum(x, axes=()).data, x.data)

    def test_reduce_sum_of_ones_counts_elements(self):
        assert reduce_sum(Tensor.ones((1, 1, 2, 2))).item() == 4.0

    def test_reduce_sum_over_channels_example(self):
        x = Tensor(np.arange(12.0).reshape(1, 3, 2, 2))
        out = reduce_sum(x, axes=(1,))
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out.data.ravel(), [12.0, 15.0, 18.0, 21.0])

    def test_reduce_sum_rejects_bad_axis(self):
        with pytest.raises(InvalidAxisError):
            reduce_sum(Tensor.zeros((1, 1, 1, 1)), axes=(4,))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


@pytest.mark.unit
class TestTape:
    def test_square_gradient(self, random_tensor):
        w = random_tensor(1, 1, 2, 2, requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(mul(w, w))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[w], 2.0 * w.data)

    def test_binary_op_gradients(self, random_tensor):
        a = random_tensor(1, 2, 2, 2, requires_grad=True)
        b = random_tensor(1, 2, 2, 2, requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(add(sub(a, b), scale(b, 3.0)))
        grads = backward(tape, loss)
        np.testing.assert_allclose(grads[a], 1.0)
        np.testing.assert_allclose(grads[b], 2.0)

    def test_relu_gradient_masks_negatives(self):
        x = Tensor(np.array([-1.0, 0.5, 2.0, -0.1]).reshape(1, 1, 2, 2), requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(relu(x))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads[x].ravel(), [0.0, 1.0, 1.0, 0.0])

    def test_fan_out_accumulates(self, random_tensor):
        x = random_tensor(1, 1, 1, 3, requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
            loss = reduce_sum(add(y, x))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[x], 2.0 * x.data + 1.0)

    def test_reduce_sum_gradient_broadcasts(self, random_tensor):
        x = random_tensor(2, 3, 2, 2, requires_grad=True)
        weights = random_tensor(2, 1, 2, 2)
        with Tape() as tape:
            loss = reduce_sum(mul(reduce_sum(x, axes=(1,)), weights))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[x], np.broadcast_to(weights.data, x.shape))

    def test_nothing_recorded_outside_tape(self, random_tensor):
        x = random_tensor(1, 1, 2, 2, requires_grad=True)
        out = relu(x)
        assert out.node_id is None
        assert Tape.current() is None

    def test_constants_are_not_recorded(self, random_tensor):
        with Tape() as tape:
            relu(random_tensor(1, 1, 2, 2))
        assert len(tape) == 0

    def test_unused_leaf_gets_zero_gradient(self, random_tensor):
        x = random_tensor(1, 1, 2, 2, requires_grad=True)
        y = random_tensor(1, 1, 2, 2, requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(x)
            relu(y)
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads[y], 0.0)
        assert grads.get(y) is None

    def test_unknown_tensor_lookup(self, random_tensor):
        x = random_tensor(1, 1, 1, 1, requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(x)
        grads = tape.backward(loss)
        stranger = random_tensor(1, 1, 1, 1)
        assert stranger not in grads
        with pytest.raises(TapeError):
            grads[stranger]

    def test_non_scalar_loss_rejected(self, random_tensor):
        x = random_tensor(1, 1, 2, 2, requires_grad=True)
        with Tape() as tape:
            out = relu(x)
        with pytest.raises(TapeError, match="scalar"):
            tape.backward(out)

    def test_tape_is_single_use(self, random_tensor):
        x = random_tensor(1, 1, 1, 1, requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(x)
        tape.backward(loss)
        with pytest.raises(TapeError, match="consumed"):
            tape.backward(loss)
        with tape, pytest.raises(TapeError, match="consumed"):
            relu(x)

    def test_loss_from_other_tape_rejected(self, random_tensor):
        x = random_tensor(1, 1, 1, 1, requires_grad=True)
        with Tape():
            loss = reduce_sum(x)
        with Tape() as other, pytest.raises(TapeError, match="not on this tape"):
            other.backward(loss)

    def test_gradients_are_read_only(self, random_tensor):
        x = random_tensor(1, 1, 1, 2, requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(x)
        grads = tape.backward(loss)
        with pytest.raises(ValueError, match="read-only"):
            grads[x][0, 0, 0, 0] = 1.0

    def test_nested_tapes_restore_outer(self):
        with Tape() as outer:
            with Tape() as inner:
                assert Tape.current() is inner
            assert Tape.current() is outer
        assert Tape.current() is None

    def test_backward_is_linear_in_the_loss(self, random_tensor):
        x = random_tensor(1, 2, 3, 3, requires_grad=True)
        w = random_tensor(1, 2, 3, 3)

        def f(t: Tensor) -> Tensor:
            return reduce_sum(mul(relu(t), w))

        def g(t: Tensor) -> Tensor:
            return reduce_sum(mul(t, t), axes=(0, 1, 2, 3))

        def gradient(loss_fn) -> np.ndarray:
            with Tape() as tape:
                loss = loss_fn(x)
            return tape.backward(loss)[x]

        a, b = 2.5, -0.75
        combined = gradient(lambda t: add(scale(f(t), a), scale(g(t), b)))
        np.testing.assert_allclose(combined, a * gradient(f) + b * gradient(g), rtol=1e-12, atol=1e-12)

    def test_same_graph_is_bit_identical(self, rng):
        data = rng.normal(size=(2, 3, 4, 4))
        weights = rng.normal(size=(2, 3, 4, 4))

        def run_once() -> tuple[np.ndarray, float, np.ndarray]:
            x = Tensor(data, requires_grad=True)
            with Tape() as tape:
                hidden = relu(add(mul(x, Tensor(weights)), scale(x, 0.5)))
                loss = reduce_sum(mul(hidden, hidden))
            return hidden.numpy(), loss.item(), tape.backward(loss)[x].copy()

        first, second = run_once(), run_once()
        assert np.array_equal(first[0], second[0])
        assert first[1] == second[1]
        assert np.array_equal(first[2], second[2])
