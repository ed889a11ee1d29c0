"""Image/mask pairs: loading, saving and resizing."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from gleason_seg.architectures.specs import CLASS_NAMES
from gleason_seg.data.netpbm import MAXVAL, read_netpbm, write_pgm, write_ppm
from gleason_seg.engine import ops
from gleason_seg.engine.ops import LabelMap
from gleason_seg.engine.tensor import Tensor
from gleason_seg.errors import LabelRangeError, NetpbmFormatError, ShapeMismatchError

MaskMode = Literal["raw", "palette"]

NUM_CLASSES = len(CLASS_NAMES)

# Display colours for palette masks, indexed by class.
PALETTE: NDArray[np.uint8] = np.array(
    [
        (0, 0, 0),  # BG
        (0, 160, 0),  # NC
        (255, 255, 0),  # GP3
        (255, 128, 0),  # GP4
        (255, 0, 0),  # GP5
    ],
    dtype=np.uint8,
)


def check_labels(mask: NDArray[np.integer], num_classes: int = NUM_CLASSES, path: Path | str | None = None) -> None:
    """Raise LabelRangeError for the first value outside 0..num_classes-1."""
    bad = mask[(mask < 0) | (mask >= num_classes)]
    if bad.size:
        raise LabelRangeError(int(bad.flat[0]), num_classes, path)


@dataclass(frozen=True)
class Sample:
    """One RGB image (1, 3, h, w) in [0, 1] and its (h, w) label map."""

    image: Tensor
    mask: LabelMap

    def __post_init__(self) -> None:
        n, c, h, w = self.image.shape
        if n != 1 or c != 3:
            raise ShapeMismatchError("Sample image", self.image.shape, (1, 3, h, w))
        if self.mask.shape != (h, w):
            raise ShapeMismatchError("Sample mask vs image", tuple(self.mask.shape), (h, w))
        check_labels(self.mask)

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[2], self.image.shape[3]


def load_image(path: Path | str) -> Tensor:
    """Read a P6 image as a (1, 3, h, w) tensor scaled to [0, 1].

    Raises:
        NetpbmFormatError: Malformed file or not a PPM.
    """
    rgb = read_netpbm(path)
    if rgb.ndim != 3:
        raise NetpbmFormatError(f"{path}: images must be binary PPM (P6)")
    return Tensor(rgb.transpose(2, 0, 1)[None].astype(np.float64) / MAXVAL)


def load_sample(image_path: Path | str, mask_path: Path | str, num_classes: int = NUM_CLASSES) -> Sample:
    """Read a P6 image and a P5 label mask.

    Raises:
        NetpbmFormatError: Malformed file, or a PGM where a PPM is expected (and vice versa).
        LabelRangeError: Mask value of num_classes or more.
        ShapeMismatchError: Image and mask dimensions differ.
    """
    image = load_image(image_path)
    labels = read_netpbm(mask_path)
    if labels.ndim != 2:
        raise NetpbmFormatError(f"{mask_path}: masks must be binary PGM (P5)")
    if labels.shape != image.shape[2:]:
        raise ShapeMismatchError(f"Mask {mask_path} vs image {image_path}", labels.shape, image.shape[2:])
    check_labels(labels, num_classes, mask_path)
    return Sample(image=image, mask=labels.astype(np.int64))


def save_image(image: Tensor, path: Path | str) -> Path:
    """Quantise a (1, 3, h, w) image in [0, 1] to 8 bits and write it as PPM."""
    rgb = np.clip(image.data[0].transpose(1, 2, 0), 0.0, 1.0)
    return write_ppm(path, np.rint(rgb * MAXVAL).astype(np.uint8))


def save_mask(mask: LabelMap, path: Path | str, mode: MaskMode = "raw") -> Path:
    """Write class indices as PGM (``raw``) or as palette colours in a PPM (``palette``)."""
    labels = np.asarray(mask, dtype=np.int64)
    check_labels(labels, len(PALETTE))
    if mode == "palette":
        return write_ppm(path, PALETTE[labels])
    return write_pgm(path, labels.astype(np.uint8))


def nearest_indices(in_size: int, out_size: int) -> NDArray[np.int64]:
    """Source index of every output position under nearest-neighbour sampling (pixel centres)."""
    src = np.floor((np.arange(out_size) + 0.5) * in_size / out_size).astype(np.int64)
    return np.minimum(src, in_size - 1)


def resize_mask(mask: LabelMap, out_h: int, out_w: int) -> LabelMap:
    rows = nearest_indices(mask.shape[0], out_h)
    cols = nearest_indices(mask.shape[1], out_w)
    return mask[rows[:, None], cols[None, :]]


def resize_sample(sample: Sample, target: int | tuple[int, int]) -> Sample:
    """Resize the image bilinearly and the mask by nearest neighbour."""
    out_h, out_w = (target, target) if isinstance(target, int) else target
    if out_h < 1 or out_w < 1:
        raise ValueError(f"Resize target must be at least 1x1, got {out_h}x{out_w}")
    if (out_h, out_w) == sample.size:
        return sample
    return Sample(
        image=ops.resize_bilinear(sample.image, out_h, out_w),
        mask=resize_mask(sample.mask, out_h, out_w),
    )


def stack_samples(samples: Sequence[Sample]) -> tuple[Tensor, LabelMap]:
    """Batch images into (n, 3, h, w) and masks into (n, h, w)."""
    images = np.concatenate([s.image.data for s in samples], axis=0)
    masks = np.stack([s.mask for s in samples], axis=0)
    return Tensor(images), masks
