"""Grayscale PFM and 8-bit PNG input/output."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from nrhdr.core import HdrImage


class PfmError(ValueError):
    pass


class UnsupportedFormatError(PfmError):
    pass


_TOKEN = re.compile(rb"\S+")


def _header_tokens(buf: bytes, count: int):
    """First ``count`` whitespace-separated tokens and the payload offset."""
    tokens, pos = [], 0
    while len(tokens) < count:
        m = _TOKEN.search(buf, pos)
        if m is None:
            raise PfmError("truncated PFM header")
        tokens.append(m.group())
        pos = m.end()
    # exactly one whitespace byte separates the scale from the raster
    if pos >= len(buf) or buf[pos:pos + 1] not in b" \t\r\n":
        raise PfmError("malformed PFM header: missing separator after scale")
    return tokens, pos + 1


def read_pfm(path) -> HdrImage:
    """Read a grayscale (``Pf``) PFM file.

    Rows are stored bottom to top; a negative scale marks little-endian data.
    """
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic == b"PF":
        raise UnsupportedFormatError(
            f"{path}: colour PFM (PF) is not supported; convert it to a single-channel "
            "grayscale (Pf) PFM first")
    if magic != b"Pf":
        raise PfmError(f"{path}: not a PFM file (magic {magic!r})")
    (_, w, h, scale), offset = _header_tokens(buf, 4)
    try:
        width, height, scale = int(w), int(h), float(scale)
    except ValueError as exc:
        raise PfmError(f"{path}: malformed PFM header") from exc
    if width < 1 or height < 1 or scale == 0.0:
        raise PfmError(f"{path}: invalid PFM dimensions or scale")
    dtype = np.dtype("<f4" if scale < 0 else ">f4")
    n = width * height
    if len(buf) - offset < n * 4:
        raise PfmError(f"{path}: truncated payload ({len(buf) - offset} of {n * 4} bytes)")
    data = np.frombuffer(buf, dtype=dtype, count=n, offset=offset).reshape(height, width)
    return HdrImage(np.flipud(data).astype(np.float64))


def write_pfm(image, path, little_endian: bool = True) -> None:
    """Write a grayscale PFM.

    Samples are stored as float32, so only float32-representable values
    round-trip bit-exactly.
    """
    data = image.data if isinstance(image, HdrImage) else np.asarray(image, dtype=np.float64)
    if data.ndim != 2:
        raise PfmError("PFM output needs a 2D raster")
    dtype = np.dtype("<f4" if little_endian else ">f4")
    header = f"Pf\n{data.shape[1]} {data.shape[0]}\n{-1.0 if little_endian else 1.0}\n".encode("ascii")
    Path(path).write_bytes(header + np.flipud(data).astype(dtype).tobytes())


def to_bytes(raster) -> np.ndarray:
    """Quantize values in [0, 1] to uint8 with round-half-up."""
    v = np.clip(np.asarray(raster, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def write_png(raster, path) -> None:
    """Write a (H, W) grayscale or (H, W, 3) RGB raster in [0, 1] as 8-bit PNG."""
    a = np.asarray(raster)
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise ValueError(f"expected (H, W) or (H, W, 3), got {a.shape}")
    Image.fromarray(to_bytes(a)).save(path, format="PNG")
