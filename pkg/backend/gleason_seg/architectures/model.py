"""Parameter store, thin layer wrappers and the Model type shared by every builder.

Layers hold no tensors themselves: they address named entries of a shared
``ParameterStore``. Optimizer updates and checkpoint loads replace entries in
the store, and the next forward pass picks them up.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from typing import Literal

import numpy as np

from gleason_seg.architectures.specs import ArchitectureSpec
from gleason_seg.engine import ops
from gleason_seg.engine.tensor import Array, Tensor
from gleason_seg.errors import ShapeMismatchError, SpatialSizeError

logger = logging.getLogger(__name__)

Mode = Literal["train", "eval"]
UPSAMPLE_NOISE_STD = 0.01


# ---------------------------------------------------------------------------
# Parameter store
# ---------------------------------------------------------------------------


class ParameterStore:
    """Ordered name -> Tensor map plus the train/eval mode and the init generator."""

    def __init__(self, rng: np.random.Generator | None = None) -> None:
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.mode: Mode = "train"
        self._tensors: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def create(self, name: str, value: Array, trainable: bool = True) -> str:
        if name in self._tensors:
            raise ValueError(f"Duplicate parameter name '{name}'")
        self._tensors[name] = Tensor(value, requires_grad=trainable)
        self._trainable[name] = trainable
        return name

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set(self, name: str, value: Tensor | Array) -> None:
        """Replace an existing entry, keeping its shape and trainability."""
        current = self._tensors[name]
        array = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        if array.shape != current.shape:
            raise ShapeMismatchError(f"Parameter '{name}'", tuple(array.shape), current.shape)
        self._tensors[name] = Tensor(array, requires_grad=self._trainable[name])

    def count(self, prefix: str = "", trainable_only: bool = True) -> int:
        return sum(
            t.size
            for name, t in self._tensors.items()
            if name.startswith(prefix) and (self._trainable[name] or not trainable_only)
        )


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def he_normal(rng: np.random.Generator, shape: tuple[int, int, int, int], fan_in: int) -> Array:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def upsample_kernel(rng: np.random.Generator, in_c: int, out_c: int, kernel: int) -> Array:
    """Transposed-conv weights that start as nearest/bilinear-equivalent upsampling plus small noise.

    With kernel == stride the bilinear kernel degenerates to a constant tile.
    Input channel i feeds output channel i % out_c; each output averages the
    inputs mapped onto it.
    """
    weight = np.zeros((in_c, out_c, kernel, kernel))
    fan = -(-in_c // out_c)
    for i in range(in_c):
        weight[i, i % out_c] = 1.0 / fan
    return weight + rng.normal(0.0, UPSAMPLE_NOISE_STD, size=weight.shape)


class Conv2d:
    """3x3 / 1x1 same-padded convolution over store entries ``{name}.weight`` / ``{name}.bias``."""

    def __init__(self, store: ParameterStore, name: str, in_c: int, out_c: int, kernel: int = 3) -> None:
        self.store = store
        self.name = name
        self.in_c = in_c
        self.out_c = out_c
        store.create(f"{name}.weight", he_normal(store.rng, (out_c, in_c, kernel, kernel), in_c * kernel * kernel))
        store.create(f"{name}.bias", np.zeros((1, out_c, 1, 1)))

    def params(self) -> ops.ConvParams:
        return ops.ConvParams(weight=self.store[f"{self.name}.weight"], bias=self.store[f"{self.name}.bias"])

    def zero_(self) -> None:
        """Set weights and bias to zero."""
        for suffix in ("weight", "bias"):
            key = f"{self.name}.{suffix}"
            self.store.set(key, np.zeros(self.store[key].shape))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.params())


class ConvTranspose2d:
    """Learnable k x k, stride-k upsampling (k = 2 in the decoders)."""

    def __init__(self, store: ParameterStore, name: str, in_c: int, out_c: int, factor: int = 2) -> None:
        self.store = store
        self.name = name
        self.factor = factor
        store.create(f"{name}.weight", upsample_kernel(store.rng, in_c, out_c, factor))
        store.create(f"{name}.bias", np.zeros((1, out_c, 1, 1)))

    def __call__(self, x: Tensor) -> Tensor:
        params = ops.ConvParams(
            weight=self.store[f"{self.name}.weight"],
            bias=self.store[f"{self.name}.bias"],
            stride=self.factor,
            padding="valid",
            transposed=True,
        )
        return ops.conv2d_transpose(x, params, stride=self.factor)


class BatchNorm2d:
    """Batch norm whose gamma/beta are trainable and running statistics are buffers."""

    def __init__(self, store: ParameterStore, name: str, channels: int) -> None:
        self.store = store
        self.name = name
        initial = ops.BatchNormState.initial(channels)
        store.create(f"{name}.gamma", initial.gamma.data)
        store.create(f"{name}.beta", initial.beta.data)
        store.create(f"{name}.running_mean", initial.running_mean.data, trainable=False)
        store.create(f"{name}.running_var", initial.running_var.data, trainable=False)

    def __call__(self, x: Tensor) -> Tensor:
        state = ops.BatchNormState(
            gamma=self.store[f"{self.name}.gamma"],
            beta=self.store[f"{self.name}.beta"],
            running_mean=self.store[f"{self.name}.running_mean"],
            running_var=self.store[f"{self.name}.running_var"],
            mode=self.store.mode,
        )
        out = ops.batch_norm2d(x, state)
        if state.mode == "train":
            self.store.set(f"{self.name}.running_mean", state.running_mean)
            self.store.set(f"{self.name}.running_var", state.running_var)
        return out


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class Model:
    """One built architecture: its spec, named parameters and executable graph.

    Usage::

        model = build_model(preset_spec("tiny-resunet"), seed=7)
        probs = model.eval()(batch)          # (n, num_classes, h, w)
        labels = ops.argmax_channels(probs)
    """

    def __init__(self, spec: ArchitectureSpec, store: ParameterStore, graph: Callable[[Tensor], Tensor]) -> None:
        self.spec = spec
        self.store = store
        self.graph = graph

    @property
    def parameters(self) -> dict[str, Tensor]:
        """All named tensors (trainable parameters and BN buffers) in creation order."""
        return dict(self.store.items())

    def trainable_names(self) -> list[str]:
        return [name for name in self.store if self.store.is_trainable(name)]

    def parameter_count(self, trainable_only: bool = True) -> int:
        return self.store.count(trainable_only=trainable_only)

    @property
    def mode(self) -> Mode:
        return self.store.mode

    def train(self) -> Model:
        self.store.mode = "train"
        return self

    def eval(self) -> Model:
        self.store.mode = "eval"
        return self

    def __call__(self, batch: Tensor) -> Tensor:
        return forward(self, batch)


def forward(model: Model, batch: Tensor) -> Tensor:
    """Run ``batch`` through the model and return per-pixel class probabilities.

    Raises:
        ShapeMismatchError: Channel count differs from spec.in_channels.
        SpatialSizeError: Height or width not divisible by 2**depth.
    """
    spec = model.spec
    n, c, h, w = batch.shape
    if c != spec.in_channels:
        raise ShapeMismatchError("Model input channels", batch.shape, (n, spec.in_channels, h, w))
    multiple = spec.size_multiple
    if h % multiple or w % multiple or h == 0 or w == 0:
        raise SpatialSizeError(f"{spec.name} input {h}x{w} must be a positive multiple of {multiple}")
    return model.graph(batch)
