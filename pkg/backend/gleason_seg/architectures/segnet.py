"""SegNet builder: decoder upsampling by the encoder's max-pooling indices.

Encoder level k (0-based, shallowest first) is a conv block followed by a
max pool whose PoolIndices are kept. Decoder level j = depth - k unpools
with those indices back to level k's resolution and applies a mirrored conv
block (f*2^k -> f*2^(k-1), the last one staying at f). No concatenation skips.
"""

from __future__ import annotations

import numpy as np

from gleason_seg.architectures.blocks import ConvBlock
from gleason_seg.architectures.model import Conv2d, Model, ParameterStore
from gleason_seg.architectures.specs import ArchitectureSpec
from gleason_seg.engine import ops
from gleason_seg.engine.tensor import Tensor


class SegNetGraph:
    """Executable SegNet topology; ``wiring`` lists (encoder_level, decoder_level) of the last forward."""

    def __init__(self, spec: ArchitectureSpec, store: ParameterStore) -> None:
        self.depth = spec.depth
        ladder = spec.filter_ladder()
        self.encoder: list[ConvBlock] = []
        in_c = spec.in_channels
        for level in range(spec.depth):
            self.encoder.append(ConvBlock(store, f"enc{level}", in_c, ladder[level]))
            in_c = ladder[level]

        self.decoder: list[ConvBlock] = []
        for level in reversed(range(spec.depth)):
            out_c = ladder[max(level - 1, 0)]
            self.decoder.append(ConvBlock(store, f"dec{level}", ladder[level], out_c))
        self.head = Conv2d(store, "head", ladder[0], spec.num_classes, kernel=1)
        self.wiring: list[tuple[int, int]] = []

    def __call__(self, x: Tensor) -> Tensor:
        pooled: list[ops.PoolIndices] = []
        for block in self.encoder:
            x, indices = ops.max_pool2d(block(x))
            pooled.append(indices)

        wiring: list[tuple[int, int]] = []
        for decoder_level, block in enumerate(self.decoder, start=1):
            encoder_level = self.depth - decoder_level
            indices = pooled[encoder_level]
            x = block(ops.max_unpool2d(x, indices, indices.input_shape))
            wiring.append((encoder_level, decoder_level))
        self.wiring = wiring
        return ops.softmax_channels(self.head(x))


def build_segnet(spec: ArchitectureSpec, seed: int = 0) -> Model:
    """Assemble a SegNet model for ``spec``."""
    if spec.family != "segnet":
        raise ValueError(f"build_segnet received a '{spec.family}' spec")
    store = ParameterStore(np.random.default_rng(seed))
    graph = SegNetGraph(spec, store)
    model = Model(spec, store, graph)
    return model


def expected_segnet_parameters(spec: ArchitectureSpec) -> int:
    ladder = spec.filter_ladder()
    total = 0
    in_c = spec.in_channels
    for level in range(spec.depth):
        total += ConvBlock.expected_parameter_count(in_c, ladder[level])
        in_c = ladder[level]
    for level in range(spec.depth):
        total += ConvBlock.expected_parameter_count(ladder[level], ladder[max(level - 1, 0)])
    return total + ladder[0] * spec.num_classes + spec.num_classes
