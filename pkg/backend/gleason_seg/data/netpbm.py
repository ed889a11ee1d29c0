"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from gleason_seg.errors import NetpbmFormatError

MAXVAL = 255
_CHANNELS = {b"P5": 1, b"P6": 3}
_WHITESPACE = b" \t\n\r\v\f"


def _header_tokens(data: bytes, count: int, path: Path) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset of the first raster byte (after the
    single whitespace byte that ends the header).
    """
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos >= len(data):
            raise NetpbmFormatError(f"{path}: truncated header")
        if data[pos] == ord("#"):
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        tokens.append(data[start:pos])
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise NetpbmFormatError(f"{path}: header must end with a single whitespace byte")
    return tokens, pos + 1


def read_netpbm(path: Path | str) -> NDArray[np.uint8]:
    """Read a P5 or P6 file; returns (h, w) for PGM and (h, w, 3) for PPM.

    Raises:
        NetpbmFormatError: Unknown magic, bad dimensions, maxval other than 255 or a short raster.
    """
    source = Path(path)
    data = source.read_bytes()
    tokens, offset = _header_tokens(data, 4, source)
    magic, width_token, height_token, maxval_token = tokens
    channels = _CHANNELS.get(magic)
    if channels is None:
        raise NetpbmFormatError(f"{source}: unsupported magic {magic!r}; expected P5 or P6")
    try:
        width, height, maxval = int(width_token), int(height_token), int(maxval_token)
    except ValueError as exc:
        raise NetpbmFormatError(f"{source}: non-numeric header field") from exc
    if width < 1 or height < 1:
        raise NetpbmFormatError(f"{source}: invalid dimensions {width}x{height}")
    if maxval != MAXVAL:
        raise NetpbmFormatError(f"{source}: only maxval {MAXVAL} is supported, got {maxval}")

    expected = width * height * channels
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise NetpbmFormatError(f"{source}: raster has {len(raster)} bytes, expected {expected}")
    array = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return array[:, :, 0].copy() if channels == 1 else array.copy()


def _write(path: Path | str, magic: bytes, array: NDArray[np.uint8]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    height, width = array.shape[:2]
    header = magic + f"\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    target.write_bytes(header + np.ascontiguousarray(array, dtype=np.uint8).tobytes())
    return target


def write_pgm(path: Path | str, array: NDArray[np.integer]) -> Path:
    """Write an (h, w) array of 0..255 values as binary PGM."""
    values = np.asarray(array)
    if values.ndim != 2:
        raise NetpbmFormatError(f"PGM data must be 2-D, got shape {values.shape}")
    if values.min(initial=0) < 0 or values.max(initial=0) > MAXVAL:
        raise NetpbmFormatError(f"PGM values must lie in 0..{MAXVAL}")
    return _write(path, b"P5", values.astype(np.uint8))


def write_ppm(path: Path | str, array: NDArray[np.integer]) -> Path:
    """Write an (h, w, 3) array of 0..255 values as binary PPM."""
    values = np.asarray(array)
    if values.ndim != 3 or values.shape[2] != 3:
        raise NetpbmFormatError(f"PPM data must have shape (h, w, 3), got {values.shape}")
    if values.min(initial=0) < 0 or values.max(initial=0) > MAXVAL:
        raise NetpbmFormatError(f"PPM values must lie in 0..{MAXVAL}")
    return _write(path, b"P6", values.astype(np.uint8))
