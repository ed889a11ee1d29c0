"""Dataset manifests: tab-separated ``image<TAB>mask<TAB>split`` lines, ``#`` comments.

Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ValidationError

from gleason_seg.data.samples import Sample, load_sample, resize_sample
from gleason_seg.errors import ManifestError

logger = logging.getLogger(__name__)

Split = Literal["train", "val", "test"]
SPLITS: tuple[str, ...] = ("train", "val", "test")


class ManifestEntry(BaseModel):
    image: Path
    mask: Path
    split: Split


class Manifest(BaseModel):
    """Entries with absolute paths plus the directory relative paths were resolved against."""

    root: Path
    entries: list[ManifestEntry]

    def split(self, name: str) -> list[ManifestEntry]:
        if name not in SPLITS:
            raise ManifestError(f"Unknown split '{name}'. Must be one of: {', '.join(SPLITS)}")
        return [e for e in self.entries if e.split == name]

    def counts(self) -> dict[str, int]:
        return {name: len(self.split(name)) for name in SPLITS}


def _resolve(root: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else root / path


def parse_manifest(text: str, root: Path, source: Path | str = "<manifest>") -> Manifest:
    """Parse manifest text without touching the filesystem.

    Raises:
        ManifestError: Malformed line, unknown split or duplicate image path.
    """
    entries: list[ManifestEntry] = []
    seen: set[Path] = set()
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t")
        if len(fields) != 3:
            raise ManifestError(f"{source}:{number}: expected 3 tab-separated fields, got {len(fields)}")
        image, mask, split = (f.strip() for f in fields)
        try:
            values = {"image": _resolve(root, image), "mask": _resolve(root, mask), "split": split}
            entry = ManifestEntry.model_validate(values)
        except ValidationError as exc:
            choices = ", ".join(SPLITS)
            raise ManifestError(f"{source}:{number}: invalid split '{split}'. Must be one of: {choices}") from exc
        if entry.image in seen:
            raise ManifestError(f"{source}:{number}: duplicate image path {entry.image}")
        seen.add(entry.image)
        entries.append(entry)
    return Manifest(root=root, entries=entries)


def load_manifest(path: Path | str, check_files: bool = True) -> Manifest:
    """Read a manifest file, by default verifying every referenced file exists.

    Raises:
        ManifestError: Parse errors as in ``parse_manifest``, or a missing file (path in the message).
    """
    source = Path(path)
    if not source.is_file():
        raise ManifestError(f"Manifest not found: {source}")
    manifest = parse_manifest(source.read_text(), source.parent, source)
    if check_files:
        for entry in manifest.entries:
            for file in (entry.image, entry.mask):
                if not file.is_file():
                    raise ManifestError(f"{source}: referenced file does not exist: {file}")
    logger.debug(f"Loaded manifest {source}: {manifest.counts()}")
    return manifest


def write_manifest(manifest: Manifest, path: Path | str) -> Path:
    """Write entries, relative to the manifest directory where possible."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    base = target.parent.resolve()
    lines = ["# image\tmask\tsplit"]
    for entry in manifest.entries:
        paths = []
        for file in (entry.image, entry.mask):
            try:
                paths.append(file.resolve().relative_to(base).as_posix())
            except ValueError:
                paths.append(str(file))
        lines.append("\t".join([*paths, entry.split]))
    target.write_text("\n".join(lines) + "\n")
    return target


def load_dataset(manifest: Manifest, split: str | None = None, size: int | None = None) -> list[Sample]:
    """Load the samples of ``split`` (all entries when None), resized to ``size`` if given."""
    entries = manifest.entries if split is None else manifest.split(split)
    samples = []
    for entry in entries:
        sample = load_sample(entry.image, entry.mask)
        samples.append(resize_sample(sample, size) if size is not None else sample)
    return samples
