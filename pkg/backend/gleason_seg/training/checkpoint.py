"""Binary checkpoint format.

Layout (little-endian)::

    b"SGCK"                      magic
    u32                          format version (1)
    u32 + utf-8 bytes            canonical spec text (sorted key=value lines)
    u32                          parameter count
    per parameter:
        u16 + utf-8 bytes        name
        4 x u32                  shape
        n*c*h*w x f8             values

Batch-norm running statistics are stored like any other named tensor.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from gleason_seg.architectures import build_model
from gleason_seg.architectures.model import Model
from gleason_seg.architectures.specs import ArchitectureSpec
from gleason_seg.atomic import atomic_write
from gleason_seg.errors import CheckpointFormatError

logger = logging.getLogger(__name__)

MAGIC = b"SGCK"
FORMAT_VERSION = 1
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_SHAPE = struct.Struct("<4I")


def encode_checkpoint(model: Model) -> bytes:
    spec_text = model.spec.to_canonical_text().encode("utf-8")
    params = model.parameters
    chunks = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(spec_text)), spec_text, _U32.pack(len(params))]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        chunks += [_U16.pack(len(encoded)), encoded, _SHAPE.pack(*tensor.shape)]
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes, source: Path | str) -> None:
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, size: int, what: str) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise CheckpointFormatError(f"{self.source}: truncated while reading {what}")
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> tuple[int, ...]:
        return fmt.unpack(self.take(fmt.size, what))


def decode_checkpoint(data: bytes, source: Path | str = "<bytes>", seed: int = 0) -> Model:
    """Rebuild the model described by the checkpoint and overwrite its parameters.

    Raises:
        CheckpointFormatError: Bad magic or version, truncation, trailing bytes, an
            invalid spec or parameters that do not match the rebuilt model.
    """
    reader = _Reader(data, source)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointFormatError(f"{source}: not a checkpoint (bad magic)")
    (version,) = reader.unpack(_U32, "version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{source}: unsupported format version {version}, expected {FORMAT_VERSION}")
    (spec_len,) = reader.unpack(_U32, "spec length")
    try:
        spec = ArchitectureSpec.from_canonical_text(reader.take(spec_len, "spec").decode("utf-8"))
    except (ValidationError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"{source}: invalid architecture spec: {exc}") from exc

    model = build_model(spec, seed=seed)
    (count,) = reader.unpack(_U32, "parameter count")
    if count != len(model.store):
        raise CheckpointFormatError(f"{source}: {count} parameters stored, {spec.name} has {len(model.store)}")
    seen: set[str] = set()
    for _ in range(count):
        (name_len,) = reader.unpack(_U16, "parameter name length")
        name = reader.take(name_len, "parameter name").decode("utf-8")
        shape = reader.unpack(_SHAPE, f"shape of '{name}'")
        if name not in model.store:
            raise CheckpointFormatError(f"{source}: unknown parameter '{name}' for {spec.name}")
        if name in seen:
            raise CheckpointFormatError(f"{source}: duplicate parameter '{name}'")
        seen.add(name)
        if shape != model.store[name].shape:
            raise CheckpointFormatError(f"{source}: '{name}' has shape {shape}, expected {model.store[name].shape}")
        raw = reader.take(8 * int(np.prod(shape)), f"values of '{name}'")
        model.store.set(name, np.frombuffer(raw, dtype="<f8").reshape(shape))
    if reader.pos != len(data):
        raise CheckpointFormatError(f"{source}: {len(data) - reader.pos} trailing byte(s)")
    return model


def save_checkpoint(model: Model, path: Path | str) -> Path:
    """Write ``model`` atomically (temporary file, then rename)."""
    target = atomic_write(path, encode_checkpoint(model))
    logger.info(f"Saved {model.spec.name} checkpoint ({len(model.store)} tensors) to {target}")
    return target


def load_checkpoint(path: Path | str) -> Model:
    """Read a checkpoint written by ``save_checkpoint``; the model comes back in eval mode.

    Raises:
        CheckpointFormatError: See ``decode_checkpoint``.
        OSError: The file cannot be read.
    """
    source = Path(path)
    model = decode_checkpoint(source.read_bytes(), source)
    return model.eval()
