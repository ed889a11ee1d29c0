"""Image/mask I/O, manifests and the synthetic dataset generator."""

from gleason_seg.data.manifest import Manifest, ManifestEntry, load_dataset, load_manifest, write_manifest
from gleason_seg.data.netpbm import read_netpbm, write_pgm, write_ppm
from gleason_seg.data.samples import (
    PALETTE,
    Sample,
    load_image,
    load_sample,
    resize_mask,
    resize_sample,
    save_image,
    save_mask,
    stack_samples,
)
from gleason_seg.data.synthetic import generate_synthetic, render_sample

__all__ = [
    "PALETTE",
    "Manifest",
    "ManifestEntry",
    "Sample",
    "generate_synthetic",
    "load_dataset",
    "load_image",
    "load_manifest",
    "load_sample",
    "read_netpbm",
    "render_sample",
    "resize_mask",
    "resize_sample",
    "save_image",
    "save_mask",
    "stack_samples",
    "write_manifest",
    "write_pgm",
    "write_ppm",
]
