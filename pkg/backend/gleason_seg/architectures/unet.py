"""U-Net and residual U-Net builders.

Encoder: ``depth`` blocks (f, 2f, ... f*2^(depth-1)) with 2x2 max pooling
between them, then a bottleneck block at f*2^depth. Decoder: per level, a
2x2 stride-2 transposed convolution halves the filters, its output is
concatenated after the matching encoder activation, and a block fuses the
pair. A 1x1 convolution and a channel softmax form the head.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from gleason_seg.architectures.blocks import Block, ConvBlock, ResidualBlock
from gleason_seg.architectures.model import Conv2d, ConvTranspose2d, Model, ParameterStore
from gleason_seg.architectures.specs import ArchitectureSpec
from gleason_seg.engine import ops
from gleason_seg.engine.tensor import Tensor

BlockFactory = Callable[[ParameterStore, str, int, int], Block]


class UNetGraph:
    """Executable U-Net topology over a parameter store."""

    def __init__(self, spec: ArchitectureSpec, store: ParameterStore, block: BlockFactory) -> None:
        ladder = spec.filter_ladder()
        self.encoder: list[Block] = []
        in_c = spec.in_channels
        for level in range(spec.depth):
            self.encoder.append(block(store, f"enc{level}", in_c, ladder[level]))
            in_c = ladder[level]
        self.bottleneck = block(store, "bottleneck", ladder[-2], ladder[-1])

        self.ups: list[ConvTranspose2d] = []
        self.decoder: list[Block] = []
        for level in reversed(range(spec.depth)):
            self.ups.append(ConvTranspose2d(store, f"up{level}", ladder[level + 1], ladder[level]))
            self.decoder.append(block(store, f"dec{level}", 2 * ladder[level], ladder[level]))
        self.head = Conv2d(store, "head", ladder[0], spec.num_classes, kernel=1)

    def blocks(self) -> list[Block]:
        return [*self.encoder, self.bottleneck, *self.decoder]

    def __call__(self, x: Tensor) -> Tensor:
        skips: list[Tensor] = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)
            x, _ = ops.max_pool2d(x)
        x = self.bottleneck(x)
        for up, block, skip in zip(self.ups, self.decoder, reversed(skips), strict=True):
            x = block(ops.concat_channels(skip, up(x)))
        return ops.softmax_channels(self.head(x))


def _build(spec: ArchitectureSpec, family: str, block: BlockFactory, seed: int) -> Model:
    if spec.family != family:
        raise ValueError(f"build_{family} received a '{spec.family}' spec")
    store = ParameterStore(np.random.default_rng(seed))
    graph = UNetGraph(spec, store, block)
    model = Model(spec, store, graph)
    return model


def build_unet(spec: ArchitectureSpec, seed: int = 0) -> Model:
    """Plain U-Net: conv+ReLU blocks, no batch normalisation."""
    return _build(spec, "unet", ConvBlock, seed)


def build_resunet(spec: ArchitectureSpec, seed: int = 0) -> Model:
    """U-Net whose every block is a ResidualBlock (identical shape contract)."""
    return _build(spec, "resunet", ResidualBlock, seed)


def expected_unet_parameters(spec: ArchitectureSpec) -> int:
    """Closed-form trainable parameter count for unet/resunet specs."""
    count = ResidualBlock.expected_parameter_count if spec.family == "resunet" else ConvBlock.expected_parameter_count
    ladder = spec.filter_ladder()
    total = 0
    in_c = spec.in_channels
    for level in range(spec.depth):
        total += count(in_c, ladder[level])
        in_c = ladder[level]
    total += count(ladder[-2], ladder[-1])
    for level in range(spec.depth):
        total += ladder[level + 1] * ladder[level] * 4 + ladder[level]
        total += count(2 * ladder[level], ladder[level])
    total += ladder[0] * spec.num_classes + spec.num_classes
    return total
