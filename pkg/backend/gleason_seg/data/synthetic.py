"""Synthetic 5-class dataset standing in for annotated histology tiles.

Each sample is a background canvas holding one to four non-overlapping
shapes (disc, rectangle or annulus). Every shape gets a class 1..4 and is
filled with that class's texture: a class mean colour plus Gaussian noise.
The mask is the exact rasterisation, so texture class and mask class agree
on every pixel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from gleason_seg.data.manifest import Manifest, ManifestEntry, write_manifest
from gleason_seg.data.samples import Sample, save_image, save_mask
from gleason_seg.engine.tensor import Tensor
from gleason_seg.errors import SpatialSizeError

logger = logging.getLogger(__name__)

ShapeKind = Literal["disc", "rectangle", "annulus"]
SHAPE_KINDS: tuple[ShapeKind, ...] = ("disc", "rectangle", "annulus")

MIN_SIZE = 16
MAX_SHAPES = 4
PLACEMENT_ATTEMPTS = 50
TEXTURE_NOISE = 0.04
MANIFEST_NAME = "manifest.tsv"

# Mean RGB per class: pale background, then darker and bluer with severity.
CLASS_COLOURS: NDArray[np.float64] = np.array(
    [
        (0.93, 0.90, 0.92),  # BG
        (0.88, 0.55, 0.72),  # NC
        (0.62, 0.35, 0.68),  # GP3
        (0.40, 0.22, 0.58),  # GP4
        (0.18, 0.10, 0.38),  # GP5
    ]
)


@dataclass(frozen=True)
class PlacedShape:
    kind: ShapeKind
    label: int
    centre: tuple[int, int]
    extent: tuple[int, int]


def _rasterise(kind: ShapeKind, size: int, centre: tuple[int, int], extent: tuple[int, int]) -> NDArray[np.bool_]:
    rows, cols = np.mgrid[0:size, 0:size]
    cy, cx = centre
    ry, rx = extent
    if kind == "rectangle":
        return (np.abs(rows - cy) <= ry) & (np.abs(cols - cx) <= rx)
    distance = np.hypot(rows - cy, cols - cx)
    if kind == "disc":
        return distance <= ry
    return (distance <= ry) & (distance > ry / 2.0)


def render_sample(size: int, rng: np.random.Generator) -> tuple[Sample, list[PlacedShape]]:
    """Draw one image/mask pair of ``size`` x ``size`` pixels.

    Raises:
        SpatialSizeError: ``size`` below 16, too small to place shapes.
    """
    if size < MIN_SIZE:
        raise SpatialSizeError(f"Synthetic samples need size >= {MIN_SIZE}, got {size}")
    low = max(2, size // 10)
    high = max(low + 1, size // 4)

    mask = np.zeros((size, size), dtype=np.int64)
    occupied = np.zeros((size, size), dtype=bool)
    shapes: list[PlacedShape] = []
    wanted = int(rng.integers(1, MAX_SHAPES + 1))
    for _ in range(wanted):
        for _ in range(PLACEMENT_ATTEMPTS):
            kind = SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))]
            ry = int(rng.integers(low, high + 1))
            rx = int(rng.integers(low, high + 1)) if kind == "rectangle" else ry
            centre = (int(rng.integers(ry, size - ry)), int(rng.integers(rx, size - rx)))
            region = _rasterise(kind, size, centre, (ry, rx))
            if region.any() and not (region & occupied).any():
                break
        else:
            continue
        label = int(rng.integers(1, len(CLASS_COLOURS)))
        occupied |= region
        mask[region] = label
        shapes.append(PlacedShape(kind=kind, label=label, centre=centre, extent=(ry, rx)))

    noise = rng.normal(0.0, TEXTURE_NOISE, size=(size, size, 3))
    rgb = np.clip(CLASS_COLOURS[mask] + noise, 0.0, 1.0)
    image = Tensor(rgb.transpose(2, 0, 1)[None])
    return Sample(image=image, mask=mask), shapes


def assign_splits(count: int, test_fraction: float, val_fraction: float) -> list[str]:
    """Contiguous split assignment: train first, then val, then test."""
    if test_fraction < 0 or val_fraction < 0 or test_fraction + val_fraction > 1:
        raise ValueError("Split fractions must be non-negative and sum to at most 1")
    n_test = round(count * test_fraction)
    n_val = round(count * val_fraction)
    n_train = count - n_test - n_val
    return ["train"] * n_train + ["val"] * n_val + ["test"] * n_test


def generate_synthetic(
    out_dir: Path | str,
    count: int,
    size: int,
    seed: int,
    test_fraction: float = 0.25,
    val_fraction: float = 0.0,
) -> Manifest:
    """Write ``count`` samples plus ``manifest.tsv`` under ``out_dir``; byte-identical for equal arguments.

    Raises:
        SpatialSizeError: ``size`` below 16.
        ValueError: Non-positive ``count`` or invalid split fractions.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if size < MIN_SIZE:
        raise SpatialSizeError(f"Synthetic samples need size >= {MIN_SIZE}, got {size}")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    splits = assign_splits(count, test_fraction, val_fraction)
    rng = np.random.default_rng(seed)

    entries: list[ManifestEntry] = []
    for index in range(count):
        sample, shapes = render_sample(size, rng)
        image_path = save_image(sample.image, root / f"sample_{index:04d}.ppm")
        mask_path = save_mask(sample.mask, root / f"sample_{index:04d}_mask.pgm")
        entries.append(ManifestEntry.model_validate({"image": image_path, "mask": mask_path, "split": splits[index]}))
        logger.debug(f"sample {index}: {[(s.kind, s.label) for s in shapes]}")

    manifest = Manifest(root=root, entries=entries)
    write_manifest(manifest, root / MANIFEST_NAME)
    logger.info(f"Generated {count} synthetic {size}x{size} samples in {root} (seed {seed})")
    return manifest
