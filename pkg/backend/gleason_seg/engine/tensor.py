"""Dense rank-4 tensors and an explicit reverse-mode autograd tape.

Tensors are immutable float64 NCHW arrays. Operations are recorded on the
tape that is active in the current context (``with Tape() as tape:``) when
at least one input requires a gradient; outside a tape nothing is recorded,
which is how inference runs.

Usage::

    w = Tensor.from_array(rng.normal(size=(1, 1, 2, 2)), requires_grad=True)
    with Tape() as tape:
        loss = reduce_sum(mul(w, w), axes=(0, 1, 2, 3))
    grads = tape.backward(loss)
    grads[w]  # == 2 * w.data
"""

from __future__ import annotations

import hashlib
from collections.abc import Callable, Iterable, Sequence
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gleason_seg.errors import InvalidAxisError, ShapeMismatchError, TapeError

Array = NDArray[np.float64]
Shape = tuple[int, int, int, int]
BackwardFn = Callable[[Array], Sequence[Array | None]]
ElementwiseKind = Literal["add", "sub", "mul", "relu", "scale"]

SCALAR_SHAPE: Shape = (1, 1, 1, 1)
ALL_AXES: tuple[int, ...] = (0, 1, 2, 3)


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------


class Tensor:
    """Immutable NCHW float64 tensor, optionally tracked by the active tape."""

    __slots__ = ("_data", "node_id", "requires_grad")

    def __init__(self, data: ArrayLike, requires_grad: bool = False) -> None:
        array = np.array(data, dtype=np.float64)
        if array.ndim != 4:
            raise ShapeMismatchError("Tensor requires rank 4 (n, c, h, w)", tuple(array.shape), (-1, -1, -1, -1))
        array.setflags(write=False)
        self._data: Array = array
        self.requires_grad = requires_grad
        self.node_id: int | None = None

    @classmethod
    def _wrap(cls, array: Array, requires_grad: bool = False) -> Tensor:
        """Adopt a freshly computed array without copying it."""
        out = cls.__new__(cls)
        array = np.ascontiguousarray(array, dtype=np.float64)
        array.setflags(write=False)
        out._data = array
        out.requires_grad = requires_grad
        out.node_id = None
        return out

    # -- constructors --

    @classmethod
    def from_array(cls, array: ArrayLike, requires_grad: bool = False) -> Tensor:
        return cls(array, requires_grad=requires_grad)

    @classmethod
    def zeros(cls, shape: Shape, requires_grad: bool = False) -> Tensor:
        return cls._wrap(np.zeros(shape), requires_grad)

    @classmethod
    def ones(cls, shape: Shape, requires_grad: bool = False) -> Tensor:
        return cls._wrap(np.ones(shape), requires_grad)

    @classmethod
    def full(cls, shape: Shape, value: float, requires_grad: bool = False) -> Tensor:
        return cls._wrap(np.full(shape, float(value)), requires_grad)

    @classmethod
    def scalar(cls, value: float) -> Tensor:
        return cls.full(SCALAR_SHAPE, value)

    # -- accessors --

    @property
    def data(self) -> Array:
        """Read-only view of the underlying array."""
        return self._data

    @property
    def shape(self) -> Shape:
        n, c, h, w = self._data.shape
        return (n, c, h, w)

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> Array:
        """Writable copy of the data."""
        return self._data.copy()

    def item(self) -> float:
        if self.shape != SCALAR_SHAPE:
            raise ShapeMismatchError("item() needs a scalar tensor", self.shape, SCALAR_SHAPE)
        return float(self._data.reshape(()))

    def detach(self) -> Tensor:
        """Same values, not tracked."""
        return Tensor._wrap(self._data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operators --

    def __add__(self, other: Tensor) -> Tensor:
        return elementwise("add", self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return elementwise("sub", self, other)

    def __mul__(self, other: Tensor | float) -> Tensor:
        if isinstance(other, Tensor):
            return elementwise("mul", self, other)
        return elementwise("scale", self, k=float(other))

    def __rmul__(self, other: float) -> Tensor:
        return elementwise("scale", self, k=float(other))

    def __neg__(self) -> Tensor:
        return elementwise("scale", self, k=-1.0)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Record:
    input_ids: tuple[int | None, ...]
    output_id: int
    output_shape: Shape
    backward: BackwardFn


_active_tape: ContextVar[Tape | None] = ContextVar("gleason_seg_active_tape", default=None)


class GradientStore:
    """Gradients produced by ``Tape.backward``, keyed by node id and addressable by tensor."""

    def __init__(self, grads: dict[int, Array], lookup: Callable[[Tensor], int | None]) -> None:
        self._grads = grads
        self._lookup = lookup

    def __getitem__(self, tensor: Tensor) -> Array:
        node = self._lookup(tensor)
        if node is None:
            raise TapeError(f"{tensor!r} was not recorded on the tape")
        grad = self._grads.get(node)
        if grad is None:
            # on the tape but did not influence the loss
            return np.zeros(tensor.shape)
        return grad

    def get(self, tensor: Tensor) -> Array | None:
        node = self._lookup(tensor)
        return None if node is None else self._grads.get(node)

    def __contains__(self, tensor: object) -> bool:
        return isinstance(tensor, Tensor) and self._lookup(tensor) is not None

    def __len__(self) -> int:
        return len(self._grads)


class Tape:
    """Ordered record of differentiable operations for one forward pass.

    A tape is single-threaded and single-use: ``backward`` frees the records.
    """

    def __init__(self) -> None:
        self._records: list[_Record] = []
        self._leaf_ids: dict[int, int] = {}
        self._owned: dict[int, int] = {}
        self._keepalive: list[Tensor] = []
        self._next_id = 0
        self._token: object | None = None
        self._consumed = False

    # -- context management --

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *args: object) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)  # type: ignore[arg-type]
            self._token = None

    @staticmethod
    def current() -> Tape | None:
        return _active_tape.get()

    def __len__(self) -> int:
        return len(self._records)

    # -- node bookkeeping --

    def _new_id(self) -> int:
        node = self._next_id
        self._next_id += 1
        return node

    def node_of(self, tensor: Tensor) -> int | None:
        """Return the node id of ``tensor`` on this tape, or None if it never took part."""
        key = id(tensor)
        if key in self._owned:
            return self._owned[key]
        return self._leaf_ids.get(key)

    def watch(self, tensor: Tensor) -> int:
        """Register a leaf tensor, returning its node id."""
        node = self.node_of(tensor)
        if node is None:
            node = self._new_id()
            self._leaf_ids[id(tensor)] = node
            self._keepalive.append(tensor)
        return node

    def record(self, inputs: Sequence[Tensor], output: Array, backward: BackwardFn) -> Tensor:
        """Append one operation and return its tracked output tensor."""
        if self._consumed:
            raise TapeError("Tape was already consumed by backward(); start a new tape per forward pass")
        input_ids = tuple(self.watch(t) if t.requires_grad else None for t in inputs)
        result = Tensor._wrap(output, requires_grad=True)
        node = self._new_id()
        result.node_id = node
        self._owned[id(result)] = node
        self._keepalive.append(result)
        self._records.append(_Record(input_ids, node, result.shape, backward))
        return result

    # -- reverse pass --

    def backward(self, loss: Tensor) -> GradientStore:
        """Propagate d(loss)/d(node) to every recorded node.

        Raises:
            TapeError: If ``loss`` is not scalar-shaped, not on this tape, or the tape was consumed.
        """
        if self._consumed:
            raise TapeError("Tape was already consumed by backward()")
        if loss.shape != SCALAR_SHAPE:
            raise TapeError(f"backward() needs a scalar loss of shape {SCALAR_SHAPE}, got {loss.shape}")
        loss_id = self.node_of(loss)
        if loss_id is None:
            raise TapeError("Loss tensor is not on this tape")

        grads: dict[int, Array] = {loss_id: np.ones(SCALAR_SHAPE)}
        for record in reversed(self._records):
            upstream = grads.get(record.output_id)
            if upstream is None:
                continue
            input_grads = record.backward(upstream)
            for node, grad in zip(record.input_ids, input_grads, strict=True):
                if node is None or grad is None:
                    continue
                grads[node] = grads[node] + grad if node in grads else np.asarray(grad, dtype=np.float64)

        # tensors stay referenced by the lookup so their ids cannot be recycled
        lookup = {id(t): (self.node_of(t), t) for t in self._keepalive}
        self._records.clear()
        self._keepalive.clear()
        self._consumed = True
        for grad in grads.values():
            grad.setflags(write=False)

        def resolve(tensor: Tensor) -> int | None:
            entry = lookup.get(id(tensor))
            return entry[0] if entry is not None and entry[1] is tensor else None

        return GradientStore(grads, resolve)


def backward(tape: Tape, loss: Tensor) -> GradientStore:
    """Functional alias for ``tape.backward(loss)``."""
    return tape.backward(loss)


def apply_op(inputs: Sequence[Tensor], output: Array, backward_fn: BackwardFn) -> Tensor:
    """Wrap ``output`` as a Tensor, recording it on the active tape when any input requires grad."""
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        return tape.record(inputs, output, backward_fn)
    return Tensor._wrap(output)


# ---------------------------------------------------------------------------
# Activation pattern monitor (used by the gradient checker to spot kinks)
# ---------------------------------------------------------------------------


class ActivationPattern:
    """Digest of every piecewise-linear branch taken during a forward pass.

    relu masks and max-pool argmax offsets are folded into one hash; two
    evaluations with equal digests ran through the same linear region.
    """

    def __init__(self) -> None:
        self._hash = hashlib.blake2b(digest_size=16)
        self._token: object | None = None

    def __enter__(self) -> ActivationPattern:
        self._token = _active_pattern.set(self)
        return self

    def __exit__(self, *args: object) -> None:
        if self._token is not None:
            _active_pattern.reset(self._token)  # type: ignore[arg-type]
            self._token = None

    def update(self, branch: NDArray) -> None:
        self._hash.update(np.ascontiguousarray(branch).tobytes())

    def digest(self) -> bytes:
        return self._hash.digest()


_active_pattern: ContextVar[ActivationPattern | None] = ContextVar("gleason_seg_active_pattern", default=None)


def note_branch(branch: NDArray) -> None:
    """Feed a branch decision (relu mask, pool offsets) to the active ActivationPattern, if any."""
    pattern = _active_pattern.get()
    if pattern is not None:
        pattern.update(branch)


# ---------------------------------------------------------------------------
# Elementwise and reduction ops
# ---------------------------------------------------------------------------


def _check_same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"elementwise {kind}", a.shape, b.shape)


def elementwise(op_kind: ElementwiseKind, a: Tensor, b: Tensor | None = None, *, k: float = 1.0) -> Tensor:
    """Apply add/sub/mul (binary, identical shapes), relu or scale(k) (unary).

    Raises:
        ShapeMismatchError: Binary kinds with differently shaped operands.
        ValueError: Unknown kind or a missing second operand.
    """
    if op_kind in ("add", "sub", "mul"):
        if b is None:
            raise ValueError(f"elementwise '{op_kind}' needs two operands")
        _check_same_shape(op_kind, a, b)
        x, y = a.data, b.data
        if op_kind == "add":
            return apply_op((a, b), x + y, lambda g: (g, g))
        if op_kind == "sub":
            return apply_op((a, b), x - y, lambda g: (g, -g))
        return apply_op((a, b), x * y, lambda g: (g * y, g * x))

    if op_kind == "relu":
        mask = a.data > 0
        note_branch(mask)
        return apply_op((a,), np.where(mask, a.data, 0.0), lambda g: (np.where(mask, g, 0.0),))

    if op_kind == "scale":
        factor = float(k)
        return apply_op((a,), a.data * factor, lambda g: (g * factor,))

    raise ValueError(f"Unknown elementwise kind '{op_kind}'. Must be one of: add, sub, mul, relu, scale")


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("mul", a, b)


def relu(a: Tensor) -> Tensor:
    return elementwise("relu", a)


def scale(a: Tensor, k: float) -> Tensor:
    return elementwise("scale", a, k=k)


def reduce_sum(a: Tensor, axes: Iterable[int] = ALL_AXES) -> Tensor:
    """Sum over ``axes``, keeping reduced dimensions as size 1.

    Raises:
        InvalidAxisError: An axis outside 0..3.
    """
    axes = tuple(sorted(set(axes)))
    bad = [ax for ax in axes if not 0 <= ax <= 3]
    if bad:
        raise InvalidAxisError(f"reduce_sum axes {bad} are invalid for a rank-4 tensor (valid: 0..3)")
    if not axes:
        return apply_op((a,), a.data.copy(), lambda g: (g,))
    shape = a.shape
    out = a.data.sum(axis=axes, keepdims=True)
    return apply_op((a,), out, lambda g: (np.broadcast_to(g, shape).copy(),))
