"""Fully convolutional network with stride-level score fusion (FCN32 / FCN16 / FCN8).

A five-stage VGG-style encoder (conv block + 2x2 max pool per stage) is
trained from scratch. 1x1 score heads read the pooled activations at /32,
/16 and /8; the deeper score is upsampled 2x by a transposed convolution and
added to the next shallower one until the stride level is reached, then a
single x``stride`` upsampling restores the input resolution.
"""

from __future__ import annotations

import logging

import numpy as np

from gleason_seg.architectures.blocks import ConvBlock
from gleason_seg.architectures.model import Conv2d, ConvTranspose2d, Model, ParameterStore
from gleason_seg.architectures.specs import FCN_DEPTH, ArchitectureSpec
from gleason_seg.engine import ops
from gleason_seg.engine.tensor import Tensor, add

logger = logging.getLogger(__name__)

# Encoder stage whose pooled output feeds the score head of each stride.
SCORE_STAGES = {32: 4, 16: 3, 8: 2}


def fused_strides(stride: int) -> list[int]:
    """Strides whose score heads take part, deepest first (e.g. [32, 16, 8] for FCN8)."""
    return [s for s in (32, 16, 8) if s >= stride]


class FCNGraph:
    def __init__(self, spec: ArchitectureSpec, store: ParameterStore) -> None:
        if spec.stride is None:
            raise ValueError("FCN specs need a stride")
        ladder = spec.filter_ladder()
        k = spec.num_classes
        self.stride = spec.stride
        self.upsample = spec.fcn_upsample

        self.encoder: list[ConvBlock] = []
        in_c = spec.in_channels
        for level in range(FCN_DEPTH):
            self.encoder.append(ConvBlock(store, f"enc{level}", in_c, ladder[level]))
            in_c = ladder[level]

        self.strides = fused_strides(spec.stride)
        self.scores = {s: Conv2d(store, f"score{s}", ladder[SCORE_STAGES[s]], k, kernel=1) for s in self.strides}
        self.fuse_ups = {s: ConvTranspose2d(store, f"up{s}", k, k) for s in self.strides[:-1]}
        self.final_up = (
            ConvTranspose2d(store, "final_up", k, k, factor=spec.stride) if self.upsample == "deconv" else None
        )

    def __call__(self, x: Tensor) -> Tensor:
        _, _, h, w = x.shape
        pooled: list[Tensor] = []
        for block in self.encoder:
            x, _ = ops.max_pool2d(block(x))
            pooled.append(x)

        score = self.scores[32](pooled[SCORE_STAGES[32]])
        for deeper, shallower in zip(self.strides, self.strides[1:], strict=False):
            skip = self.scores[shallower](pooled[SCORE_STAGES[shallower]])
            score = add(self.fuse_ups[deeper](score), skip)

        if self.final_up is not None:
            score = self.final_up(score)
        else:
            score = ops.resize_bilinear(score, h, w)
        return ops.softmax_channels(score)


def build_fcn(spec: ArchitectureSpec, seed: int = 0) -> Model:
    """Assemble FCN32, FCN16 or FCN8 depending on ``spec.stride``."""
    if spec.family != "fcn":
        raise ValueError(f"build_fcn received a '{spec.family}' spec")
    store = ParameterStore(np.random.default_rng(seed))
    graph = FCNGraph(spec, store)
    logger.debug(f"Built {spec.name} fusing strides {graph.strides} with {spec.fcn_upsample} upsampling")
    return Model(spec, store, graph)


def expected_fcn_parameters(spec: ArchitectureSpec) -> int:
    assert spec.stride is not None
    ladder = spec.filter_ladder()
    k = spec.num_classes
    total = 0
    in_c = spec.in_channels
    for level in range(FCN_DEPTH):
        total += ConvBlock.expected_parameter_count(in_c, ladder[level])
        in_c = ladder[level]
    strides = fused_strides(spec.stride)
    for s in strides:
        total += ladder[SCORE_STAGES[s]] * k + k
    total += (len(strides) - 1) * (k * k * 4 + k)
    if spec.fcn_upsample == "deconv":
        total += k * k * spec.stride**2 + k
    return total
