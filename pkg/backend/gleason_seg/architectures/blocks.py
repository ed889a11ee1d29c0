"""Convolutional building blocks shared by the encoder-decoder families."""

from __future__ import annotations

from typing import Protocol

from gleason_seg.architectures.model import BatchNorm2d, Conv2d, ParameterStore
from gleason_seg.engine.tensor import Tensor, add, relu


class Block(Protocol):
    name: str
    in_c: int
    out_c: int

    def __call__(self, x: Tensor) -> Tensor: ...


class ConvBlock:
    """conv3x3 + ReLU, conv3x3 + ReLU (same padding, no normalisation)."""

    def __init__(self, store: ParameterStore, name: str, in_c: int, out_c: int) -> None:
        self.store = store
        self.name = name
        self.in_c = in_c
        self.out_c = out_c
        self.conv1 = Conv2d(store, f"{name}.conv1", in_c, out_c)
        self.conv2 = Conv2d(store, f"{name}.conv2", out_c, out_c)

    def __call__(self, x: Tensor) -> Tensor:
        return relu(self.conv2(relu(self.conv1(x))))

    def parameter_count(self) -> int:
        return self.store.count(f"{self.name}.")

    @staticmethod
    def expected_parameter_count(in_c: int, out_c: int) -> int:
        return 9 * in_c * out_c + out_c + 9 * out_c * out_c + out_c


class ResidualBlock:
    """Identity-mapping residual block with a channel-normalising pre-convolution.

    pre (1x1, F_in -> F_out), then conv1 (3x3) gives y1;
    r = conv3(relu(bn2(conv2(relu(bn1(y1))))));  output = y1 + r.
    """

    def __init__(self, store: ParameterStore, name: str, in_c: int, out_c: int) -> None:
        self.store = store
        self.name = name
        self.in_c = in_c
        self.out_c = out_c
        self.pre = Conv2d(store, f"{name}.pre", in_c, out_c, kernel=1)
        self.conv1 = Conv2d(store, f"{name}.conv1", out_c, out_c)
        self.bn1 = BatchNorm2d(store, f"{name}.bn1", out_c)
        self.conv2 = Conv2d(store, f"{name}.conv2", out_c, out_c)
        self.bn2 = BatchNorm2d(store, f"{name}.bn2", out_c)
        self.conv3 = Conv2d(store, f"{name}.conv3", out_c, out_c)

    def first_output(self, x: Tensor) -> Tensor:
        """y1: the pre-convolution followed by the first 3x3 convolution."""
        return self.conv1(self.pre(x))

    def __call__(self, x: Tensor) -> Tensor:
        y1 = self.first_output(x)
        r = self.conv3(relu(self.bn2(self.conv2(relu(self.bn1(y1))))))
        return add(y1, r)

    def zero_residual_path(self) -> None:
        """Zero conv2 and conv3 so the block reduces to its skip path."""
        self.conv2.zero_()
        self.conv3.zero_()

    def parameter_count(self) -> int:
        return self.store.count(f"{self.name}.")

    @staticmethod
    def expected_parameter_count(in_c: int, out_c: int) -> int:
        pre = in_c * out_c + out_c
        convs = 3 * (9 * out_c * out_c + out_c)
        norms = 2 * 2 * out_c
        return pre + convs + norms


def build_conv_block(in_c: int, out_c: int, store: ParameterStore | None = None, name: str = "block") -> ConvBlock:
    """Create a plain U-Net conv block (its parameters go into ``store`` or a fresh one)."""
    if in_c < 1 or out_c < 1:
        raise ValueError(f"Block channels must be positive, got {in_c} -> {out_c}")
    return ConvBlock(store if store is not None else ParameterStore(), name, in_c, out_c)


def build_residual_block(
    in_c: int, out_c: int, store: ParameterStore | None = None, name: str = "block"
) -> ResidualBlock:
    """Create a residual block mapping F_in -> F_out channels at unchanged spatial size."""
    if in_c < 1 or out_c < 1:
        raise ValueError(f"Block channels must be positive, got {in_c} -> {out_c}")
    return ResidualBlock(store if store is not None else ParameterStore(), name, in_c, out_c)
