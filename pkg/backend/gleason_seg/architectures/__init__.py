"""Model builders for the four segmentation families."""

from __future__ import annotations

from collections.abc import Callable

from gleason_seg.architectures.blocks import build_conv_block, build_residual_block
from gleason_seg.architectures.fcn import build_fcn, expected_fcn_parameters
from gleason_seg.architectures.model import Model, ParameterStore, forward
from gleason_seg.architectures.segnet import build_segnet, expected_segnet_parameters
from gleason_seg.architectures.specs import CLASS_NAMES, ArchitectureSpec, load_presets, preset_spec
from gleason_seg.architectures.unet import build_resunet, build_unet, expected_unet_parameters

BUILDERS: dict[str, Callable[[ArchitectureSpec, int], Model]] = {
    "fcn": build_fcn,
    "segnet": build_segnet,
    "unet": build_unet,
    "resunet": build_resunet,
}


def build_model(spec: ArchitectureSpec, seed: int = 0) -> Model:
    """Dispatch to the builder of ``spec.family``."""
    return BUILDERS[spec.family](spec, seed)


def expected_parameter_count(spec: ArchitectureSpec) -> int:
    """Closed-form trainable parameter count of the model ``build_model(spec)`` returns."""
    if spec.family == "fcn":
        return expected_fcn_parameters(spec)
    if spec.family == "segnet":
        return expected_segnet_parameters(spec)
    return expected_unet_parameters(spec)


__all__ = [
    "BUILDERS",
    "CLASS_NAMES",
    "ArchitectureSpec",
    "Model",
    "ParameterStore",
    "build_conv_block",
    "build_fcn",
    "build_model",
    "build_residual_block",
    "build_resunet",
    "build_segnet",
    "build_unet",
    "expected_parameter_count",
    "forward",
    "load_presets",
    "preset_spec",
]
