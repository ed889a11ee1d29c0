"""Unit tests for dataset manifests.

Tests cover:
- Parsing comments, relative and absolute paths
- Rejection of malformed lines, unknown splits and duplicates
- Writing relative paths and loading samples by split
"""

from __future__ import annotations

from pathlib import Path

import pytest

from gleason_seg.data import Manifest, ManifestEntry, load_dataset, load_manifest, write_manifest
from gleason_seg.data.manifest import parse_manifest
from gleason_seg.errors import ManifestError


@pytest.mark.unit
class TestParse:
    def test_relative_paths_resolve_against_root(self):
        manifest = parse_manifest("# header\na.ppm\ta.pgm\ttrain\n\n/abs/b.ppm\tb.pgm\ttest\n", Path("/data"))
        assert [e.image for e in manifest.entries] == [Path("/data/a.ppm"), Path("/abs/b.ppm")]
        assert manifest.entries[1].mask == Path("/data/b.pgm")
        assert manifest.counts() == {"train": 1, "val": 0, "test": 1}

    def test_wrong_field_count(self):
        with pytest.raises(ManifestError, match="m.tsv:1: expected 3"):
            parse_manifest("a.ppm\ta.pgm\n", Path("."), "m.tsv")

    def test_unknown_split(self):
        with pytest.raises(ManifestError, match="invalid split 'dev'"):
            parse_manifest("a.ppm\ta.pgm\tdev\n", Path("."))

    def test_duplicate_image(self):
        with pytest.raises(ManifestError, match="duplicate"):
            parse_manifest("a.ppm\ta.pgm\ttrain\na.ppm\tb.pgm\ttest\n", Path("."))

    def test_unknown_split_name_lookup(self):
        with pytest.raises(ManifestError, match="Unknown split"):
            Manifest(root=Path("."), entries=[]).split("holdout")


@pytest.mark.unit
class TestFiles:
    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "manifest.tsv")

    def test_missing_referenced_file(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("a.ppm\ta.pgm\ttrain\n")
        with pytest.raises(ManifestError, match="a.ppm"):
            load_manifest(path)
        assert len(load_manifest(path, check_files=False).entries) == 1

    def test_write_uses_relative_paths(self, tmp_path):
        entries = [ManifestEntry(image=tmp_path / "x" / "a.ppm", mask=tmp_path / "x" / "a.pgm", split="val")]
        path = write_manifest(Manifest(root=tmp_path, entries=entries), tmp_path / "manifest.tsv")
        assert path.read_text().splitlines()[1] == "x/a.ppm\tx/a.pgm\tval"
        reread = load_manifest(path, check_files=False)
        assert reread.entries[0].image == tmp_path / "x" / "a.ppm"

    def test_load_dataset_by_split_and_size(self, synthetic_dir):
        manifest = load_manifest(synthetic_dir / "manifest.tsv")
        assert len(load_dataset(manifest)) == 8
        train = load_dataset(manifest, "train", size=16)
        assert len(train) == 6
        assert all(s.size == (16, 16) for s in train)
