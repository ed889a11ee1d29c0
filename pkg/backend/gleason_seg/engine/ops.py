"""Neural-network layer primitives over NCHW tensors.

Convolutions accumulate one tensordot per kernel tap over strided slices of
the padded input (cross-correlation, no kernel flip), which keeps memory at
the size of the input instead of a full im2col matrix. All ops are pure over
immutable inputs except ``batch_norm2d`` in train mode, which updates the
running statistics held in its ``BatchNormState``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from gleason_seg.engine.tensor import Array, Shape, Tensor, apply_op, note_branch
from gleason_seg.errors import BatchStatisticsError, ShapeMismatchError, SpatialSizeError

logger = logging.getLogger(__name__)

Padding = Literal["same", "valid"]
BatchNormMode = Literal["train", "eval"]
LabelMap = NDArray[np.int64]

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9
POOL_WINDOW = 2


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvParams:
    """Weights for a convolution.

    ``weight`` is (out_c, in_c, kh, kw) for ``conv2d``. For ``conv2d_transpose``
    (``transposed=True``) it is (in_c, out_c, kh, kw): the same array a forward
    convolution from out_c to in_c channels would use, so the two are adjoint.
    ``bias`` is stored as (1, out_c, 1, 1).
    """

    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: Padding = "same"
    transposed: bool = False

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError(f"Convolution stride must be positive, got {self.stride}")
        expected = (1, self.out_channels, 1, 1)
        if self.bias.shape != expected:
            raise ShapeMismatchError("Convolution bias", self.bias.shape, expected)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[0] if self.transposed else self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[1] if self.transposed else self.weight.shape[0]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]


@dataclass(frozen=True)
class PoolIndices:
    """Argmax positions captured by ``max_pool2d``.

    ``offsets`` has the pooled output's shape; each entry is the row-major
    offset (row * width + col) of the selected maximum inside the input plane
    of the same (n, c). ``input_shape`` is the shape of the pooled input.
    """

    offsets: NDArray[np.int64]
    input_shape: Shape

    def positions(self) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
        """Row and column of every recorded maximum."""
        width = self.input_shape[3]
        return self.offsets // width, self.offsets % width


@dataclass
class BatchNormState:
    """Affine parameters and running statistics of one batch-norm layer.

    ``gamma``/``beta`` are trainable tensors of shape (1, c, 1, 1). The running
    statistics are replaced (never mutated in place) after every train-mode call.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM
    mode: BatchNormMode = "train"

    @classmethod
    def initial(cls, channels: int, mode: BatchNormMode = "train") -> BatchNormState:
        shape = (1, channels, 1, 1)
        return cls(
            gamma=Tensor.ones(shape, requires_grad=True),
            beta=Tensor.zeros(shape, requires_grad=True),
            running_mean=Tensor.zeros(shape),
            running_var=Tensor.ones(shape),
            mode=mode,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[1]


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------


def _same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def _tap(array: Array, i: int, j: int, stride: int, oh: int, ow: int) -> Array:
    return array[:, :, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride]


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """2-D cross-correlation with zero "same" or "valid" padding.

    Raises:
        ShapeMismatchError: Input channels differ from the weight's in_c.
        SpatialSizeError: The output would have a non-positive spatial size.
    """
    if p.transposed:
        raise ValueError("conv2d received transposed ConvParams; use conv2d_transpose")
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ShapeMismatchError("conv2d input channels vs weight", x.shape, p.weight.shape)
    kh, kw = p.kernel_size
    s = p.stride
    if p.padding == "same":
        oh, top, bottom = _same_padding(h, kh, s)
        ow, left, right = _same_padding(w, kw, s)
    else:
        oh, ow = (h - kh) // s + 1, (w - kw) // s + 1
        top = bottom = left = right = 0
    if oh <= 0 or ow <= 0 or h + top + bottom < kh or w + left + right < kw:
        raise SpatialSizeError(f"conv2d output would be empty: input {(h, w)}, kernel {(kh, kw)}, {p.padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)))
    weight = p.weight.data
    out = np.zeros((p.out_channels, n, oh, ow))
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(weight[:, :, i, j], _tap(xp, i, j, s, oh, ow), axes=([1], [1]))
    out = out.transpose(1, 0, 2, 3) + p.bias.data

    def backward(g: Array) -> tuple[Array, Array, Array]:
        grad_xp = np.zeros_like(xp)
        grad_w = np.zeros_like(weight)
        for i in range(kh):
            for j in range(kw):
                grad_w[:, :, i, j] = np.tensordot(g, _tap(xp, i, j, s, oh, ow), axes=([0, 2, 3], [0, 2, 3]))
                contribution = np.tensordot(g, weight[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                _tap(grad_xp, i, j, s, oh, ow)[...] += contribution
        grad_x = grad_xp[:, :, top : top + h, left : left + w]
        grad_b = g.sum(axis=(0, 2, 3), keepdims=True)
        return grad_x, grad_w, grad_b

    return apply_op((x, p.weight, p.bias), out, backward)


def conv2d_transpose(x: Tensor, p: ConvParams, stride: int = 2) -> Tensor:
    """Transposed convolution (the adjoint of a valid, strided ``conv2d``).

    The output spatial size is (h - 1) * stride + k, i.e. h * stride for the
    2x2, stride-2 upsampling used by the decoders.

    Raises:
        ShapeMismatchError: Input channels differ from the weight's in_c.
    """
    if stride < 1:
        raise ValueError(f"conv2d_transpose stride must be positive, got {stride}")
    n, c, h, w = x.shape
    weight = p.weight.data
    if c != weight.shape[0]:
        raise ShapeMismatchError("conv2d_transpose input channels vs weight", x.shape, p.weight.shape)
    kh, kw = weight.shape[2], weight.shape[3]
    co = weight.shape[1]
    oh, ow = (h - 1) * stride + kh, (w - 1) * stride + kw
    xd = x.data

    out = np.zeros((n, co, oh, ow))
    for i in range(kh):
        for j in range(kw):
            contribution = np.tensordot(xd, weight[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
            _tap(out, i, j, stride, h, w)[...] += contribution
    out += p.bias.data.reshape(1, -1, 1, 1)

    def backward(g: Array) -> tuple[Array, Array, Array]:
        grad_x = np.zeros_like(xd)
        grad_w = np.zeros_like(weight)
        for i in range(kh):
            for j in range(kw):
                g_tap = _tap(g, i, j, stride, h, w)
                grad_x += np.tensordot(g_tap, weight[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
                grad_w[:, :, i, j] = np.tensordot(xd, g_tap, axes=([0, 2, 3], [0, 2, 3]))
        grad_b = g.sum(axis=(0, 2, 3)).reshape(p.bias.shape)
        return grad_x, grad_w, grad_b

    return apply_op((x, p.weight, p.bias), out, backward)


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------


def max_pool2d(x: Tensor, window: int = POOL_WINDOW) -> tuple[Tensor, PoolIndices]:
    """2x2, stride-2 max pooling that also returns the argmax of every window.

    Ties resolve to the lowest offset, i.e. window order (0,0), (0,1), (1,0), (1,1).

    Raises:
        SpatialSizeError: Odd height or width.
    """
    if window != POOL_WINDOW:
        raise ValueError(f"Only {POOL_WINDOW}x{POOL_WINDOW} pooling windows are supported, got {window}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise SpatialSizeError(f"max_pool2d needs even spatial dimensions, got {h}x{w}")
    oh, ow = h // 2, w // 2
    windows = x.data.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    local = windows.argmax(axis=-1)
    note_branch(local)
    out = np.take_along_axis(windows, local[..., None], axis=-1)[..., 0]

    rows = np.arange(oh)[:, None] * 2 + local // 2
    cols = np.arange(ow)[None, :] * 2 + local % 2
    indices = PoolIndices(offsets=(rows * w + cols).astype(np.int64), input_shape=x.shape)

    def backward(g: Array) -> tuple[Array]:
        return (_scatter(g, indices),)

    return apply_op((x,), out, backward), indices


def _scatter(values: Array, idx: PoolIndices) -> Array:
    n, c, h, w = idx.input_shape
    plane = np.zeros((n, c, h * w))
    np.put_along_axis(plane, idx.offsets.reshape(n, c, -1), values.reshape(n, c, -1), axis=2)
    return plane.reshape(n, c, h, w)


def max_unpool2d(y: Tensor, idx: PoolIndices, out_shape: Shape | None = None) -> Tensor:
    """Scatter ``y`` back to the argmax positions recorded by ``max_pool2d``; zeros elsewhere.

    Raises:
        ShapeMismatchError: ``idx`` does not belong to a pooling of ``out_shape`` into ``y``'s shape.
    """
    target = idx.input_shape if out_shape is None else tuple(out_shape)
    if tuple(target) != idx.input_shape:
        raise ShapeMismatchError("max_unpool2d output shape vs recorded pooling input", tuple(target), idx.input_shape)
    if y.shape != idx.offsets.shape:
        raise ShapeMismatchError("max_unpool2d values vs recorded indices", y.shape, tuple(idx.offsets.shape))
    n, c = y.shape[:2]
    out = _scatter(y.data, idx)

    def backward(g: Array) -> tuple[Array]:
        flat = g.reshape(n, c, -1)
        return (np.take_along_axis(flat, idx.offsets.reshape(n, c, -1), axis=2).reshape(y.shape),)

    return apply_op((y,), out, backward)


# ---------------------------------------------------------------------------
# Normalisation and heads
# ---------------------------------------------------------------------------


def batch_norm2d(x: Tensor, s: BatchNormState) -> Tensor:
    """Per-channel batch normalisation followed by the affine transform.

    Train mode normalises with the batch statistics over (n, h, w) and moves
    the running statistics towards them (``running = m * running + (1 - m) * batch``,
    unbiased variance); eval mode uses the running statistics only.

    Raises:
        ShapeMismatchError: Channel count differs from the state.
        BatchStatisticsError: Train mode with n * h * w == 1.
    """
    n, c, h, w = x.shape
    if c != s.channels:
        raise ShapeMismatchError("batch_norm2d channels vs state", x.shape, s.gamma.shape)
    xd = x.data
    gamma = s.gamma.data
    count = n * h * w

    if s.mode == "train":
        if count <= 1:
            raise BatchStatisticsError("batch_norm2d in train mode needs more than one value per channel")
        mean = xd.mean(axis=(0, 2, 3), keepdims=True)
        var = xd.var(axis=(0, 2, 3), keepdims=True)
        s.running_mean = Tensor(s.momentum * s.running_mean.data + (1.0 - s.momentum) * mean)
        unbiased = var * count / (count - 1)
        s.running_var = Tensor(s.momentum * s.running_var.data + (1.0 - s.momentum) * unbiased)
    else:
        mean = s.running_mean.data
        var = s.running_var.data

    inv_std = 1.0 / np.sqrt(var + s.epsilon)
    x_hat = (xd - mean) * inv_std
    out = gamma * x_hat + s.beta.data
    training = s.mode == "train"

    def backward(g: Array) -> tuple[Array, Array, Array]:
        grad_gamma = (g * x_hat).sum(axis=(0, 2, 3), keepdims=True)
        grad_beta = g.sum(axis=(0, 2, 3), keepdims=True)
        if training:
            grad_x = (gamma * inv_std / count) * (count * g - grad_beta - x_hat * grad_gamma)
        else:
            grad_x = g * gamma * inv_std
        return grad_x, grad_gamma, grad_beta

    return apply_op((x, s.gamma, s.beta), out, backward)


def softmax_channels(x: Tensor) -> Tensor:
    """Per-pixel softmax over the channel axis, computed with max subtraction."""
    if x.shape[1] < 2:
        raise ShapeMismatchError("softmax_channels needs at least two channels", x.shape, (x.shape[0], 2, *x.shape[2:]))
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)

    def backward(g: Array) -> tuple[Array]:
        return (probs * (g - (g * probs).sum(axis=1, keepdims=True)),)

    return apply_op((x,), probs, backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack ``a`` then ``b`` along the channel axis.

    Raises:
        ShapeMismatchError: n, h or w differ.
    """
    na, ca, ha, wa = a.shape
    nb, _, hb, wb = b.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeMismatchError("concat_channels batch/spatial dims", a.shape, b.shape)
    out = np.concatenate([a.data, b.data], axis=1)
    return apply_op((a, b), out, lambda g: (g[:, :ca], g[:, ca:]))


def _bilinear_matrix(in_size: int, out_size: int) -> Array:
    """Row-stochastic interpolation matrix (out_size, in_size), align_corners=False."""
    matrix = np.zeros((out_size, in_size))
    scale = in_size / out_size
    src = np.maximum((np.arange(out_size) + 0.5) * scale - 0.5, 0.0)
    lower = np.minimum(np.floor(src).astype(np.int64), in_size - 1)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = src - lower
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resampling with the align-corners=False convention."""
    if out_h < 1 or out_w < 1:
        raise SpatialSizeError(f"resize_bilinear target must be at least 1x1, got {out_h}x{out_w}")
    _, _, h, w = x.shape
    rows = _bilinear_matrix(h, out_h)
    cols = _bilinear_matrix(w, out_w)
    out = np.einsum("ih,nchw,jw->ncij", rows, x.data, cols, optimize=True)

    def backward(g: Array) -> tuple[Array]:
        return (np.einsum("ih,ncij,jw->nchw", rows, g, cols, optimize=True),)

    return apply_op((x,), out, backward)


def argmax_channels(probs: Tensor) -> LabelMap:
    """Per-pixel index of the largest channel, shape (n, h, w); ties go to the lowest index."""
    return probs.data.argmax(axis=1).astype(np.int64)
