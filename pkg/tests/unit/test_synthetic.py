"""Unit tests for the synthetic dataset generator.

Tests cover:
- Shape placement and texture colour per class
- Contiguous train/val/test split assignment
- Byte-identical output for equal seeds
"""

from __future__ import annotations

import numpy as np
import pytest

from gleason_seg.data import generate_synthetic, load_dataset, load_manifest, render_sample
from gleason_seg.data.synthetic import CLASS_COLOURS, MANIFEST_NAME, TEXTURE_NOISE, assign_splits
from gleason_seg.errors import SpatialSizeError


@pytest.mark.unit
class TestRenderSample:
    def test_shapes_and_labels(self, rng):
        sample, shapes = render_sample(32, rng)
        assert sample.image.shape == (1, 3, 32, 32)
        assert sample.mask.shape == (32, 32)
        assert 1 <= len(shapes) <= 4
        labels = set(np.unique(sample.mask)) - {0}
        assert labels == {s.label for s in shapes}

    def test_texture_matches_mask(self, rng):
        sample, _ = render_sample(48, rng)
        rgb = sample.image.data[0].transpose(1, 2, 0)
        for label in np.unique(sample.mask):
            mean = rgb[sample.mask == label].mean(axis=0)
            # nearest class colour of every region's mean is its own class
            distances = np.linalg.norm(CLASS_COLOURS - mean, axis=1)
            assert int(distances.argmin()) == label
            assert np.all(np.abs(mean - CLASS_COLOURS[label]) < 5 * TEXTURE_NOISE)

    def test_pixels_in_unit_range(self, rng):
        sample, _ = render_sample(16, rng)
        assert sample.image.data.min() >= 0.0
        assert sample.image.data.max() <= 1.0

    def test_too_small(self, rng):
        with pytest.raises(SpatialSizeError):
            render_sample(8, rng)


@pytest.mark.unit
class TestSplits:
    def test_default_quarter_test(self):
        assert assign_splits(8, 0.25, 0.0) == ["train"] * 6 + ["test"] * 2

    def test_with_validation(self):
        assert assign_splits(10, 0.2, 0.1) == ["train"] * 7 + ["val"] + ["test"] * 2

    def test_invalid_fractions(self):
        with pytest.raises(ValueError, match="fractions"):
            assign_splits(4, 0.8, 0.5)


@pytest.mark.unit
class TestGenerate:
    def test_files_and_manifest(self, synthetic_dir):
        assert (synthetic_dir / MANIFEST_NAME).is_file()
        assert len(list(synthetic_dir.glob("sample_*_mask.pgm"))) == 8
        manifest = load_manifest(synthetic_dir / MANIFEST_NAME)
        assert manifest.counts() == {"train": 6, "val": 0, "test": 2}

    def test_byte_identical_for_same_seed(self, tmp_path):
        generate_synthetic(tmp_path / "a", count=3, size=16, seed=9)
        generate_synthetic(tmp_path / "b", count=3, size=16, seed=9)
        for file in sorted((tmp_path / "a").iterdir()):
            assert file.read_bytes() == (tmp_path / "b" / file.name).read_bytes(), file.name

    def test_seed_changes_output(self, tmp_path):
        generate_synthetic(tmp_path / "a", count=1, size=16, seed=1)
        generate_synthetic(tmp_path / "b", count=1, size=16, seed=2)
        assert (tmp_path / "a" / "sample_0000.ppm").read_bytes() != (tmp_path / "b" / "sample_0000.ppm").read_bytes()

    def test_samples_load_back(self, synthetic_dir):
        samples = load_dataset(load_manifest(synthetic_dir / MANIFEST_NAME), "test")
        assert len(samples) == 2
        assert all(s.size == (32, 32) for s in samples)

    def test_invalid_arguments(self, tmp_path):
        with pytest.raises(ValueError, match="count"):
            generate_synthetic(tmp_path, count=0, size=16, seed=0)
        with pytest.raises(SpatialSizeError):
            generate_synthetic(tmp_path, count=1, size=12, seed=0)
