"""Declarative architecture descriptions and the named presets shipped in presets.yml."""

from __future__ import annotations

from functools import cache
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, model_validator

Family = Literal["fcn", "segnet", "unet", "resunet"]
FcnUpsample = Literal["deconv", "bilinear"]

PRESETS_FILE = Path(__file__).parent / "presets.yml"
FCN_DEPTH = 5
FCN_STRIDES = (8, 16, 32)

# Class order is ordinal: background first, then increasing Gleason severity.
CLASS_NAMES: tuple[str, ...] = ("BG", "NC", "GP3", "GP4", "GP5")


class ArchitectureSpec(BaseModel):
    """Family, topology and I/O contract of one segmentation model.

    For the FCN family ``depth`` is the number of encoder stages and is fixed
    at 5 (pools down to /32); ``stride`` picks FCN8/16/32.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Family
    stride: int | None = None
    depth: int = 4
    base_filters: int = 64
    in_channels: int = 3
    num_classes: int = 5
    input_size: int = 256
    fcn_upsample: FcnUpsample = "deconv"

    @model_validator(mode="before")
    @classmethod
    def _fcn_defaults(cls, data: object) -> object:
        if isinstance(data, dict) and data.get("family") == "fcn" and data.get("depth") is None:
            return {**data, "depth": FCN_DEPTH}
        return data

    @model_validator(mode="after")
    def _check_contract(self) -> ArchitectureSpec:
        if self.depth < 1:
            raise ValueError(f"depth must be at least 1, got {self.depth}")
        if self.base_filters < 1 or self.in_channels < 1:
            raise ValueError("base_filters and in_channels must be positive")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.family == "fcn":
            if self.depth != FCN_DEPTH:
                raise ValueError(f"FCN encoders have exactly {FCN_DEPTH} stages, got depth={self.depth}")
            if self.stride not in FCN_STRIDES:
                raise ValueError(f"FCN stride must be one of {FCN_STRIDES}, got {self.stride}")
        elif self.stride is not None:
            raise ValueError(f"stride only applies to the fcn family, not {self.family}")
        if self.input_size % self.size_multiple:
            raise ValueError(f"input_size {self.input_size} must be divisible by {self.size_multiple}")
        return self

    @property
    def size_multiple(self) -> int:
        """Spatial sizes accepted by the model are multiples of this."""
        return 2**self.depth

    @property
    def name(self) -> str:
        return f"fcn{self.stride}" if self.family == "fcn" else self.family

    def filter_ladder(self) -> list[int]:
        """Encoder widths, shallowest first.

        U-Net/ResU-Net include the bottleneck (64..1024 by default), SegNet
        stops at the deepest encoder block, FCN follows the VGG pattern
        (f, 2f, 4f, 8f, 8f).
        """
        f = self.base_filters
        if self.family in ("unet", "resunet"):
            return [f * 2**k for k in range(self.depth + 1)]
        if self.family == "segnet":
            return [f * 2**k for k in range(self.depth)]
        return [f * 2 ** min(k, 3) for k in range(self.depth)]

    # -- canonical text form (checkpoint header) --

    def to_canonical_text(self) -> str:
        """Sorted ``key=value`` lines; ``None`` is written as an empty value."""
        items = self.model_dump()
        return "".join(f"{key}={'' if items[key] is None else items[key]}\n" for key in sorted(items))

    @classmethod
    def from_canonical_text(cls, text: str) -> ArchitectureSpec:
        values: dict[str, str | None] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"Malformed spec line: {line!r}")
            values[key.strip()] = value.strip() or None
        return cls.model_validate(values)


@cache
def load_presets(path: Path = PRESETS_FILE) -> dict[str, dict[str, object]]:
    """Read the named architecture presets."""
    with path.open() as f:
        data = yaml.safe_load(f) or {}
    presets: dict[str, dict[str, object]] = data.get("presets", {})
    return presets


def preset_spec(name: str, **overrides: object) -> ArchitectureSpec:
    """Build an ArchitectureSpec from a named preset, applying non-None overrides.

    Raises:
        KeyError: Unknown preset name.
        pydantic.ValidationError: The resulting spec violates its contract.
    """
    presets = load_presets()
    if name not in presets:
        raise KeyError(f"Unknown architecture '{name}'. Must be one of: {', '.join(sorted(presets))}")
    values = {**presets[name], **{k: v for k, v in overrides.items() if v is not None}}
    return ArchitectureSpec.model_validate(values)


__all__ = [
    "CLASS_NAMES",
    "ArchitectureSpec",
    "Family",
    "load_presets",
    "preset_spec",
]
