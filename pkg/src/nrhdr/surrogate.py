"""Surrogate natural-image corpus built from scikit-image's bundled photographs.

No HDR dataset ships with the package. These stand-ins undo the sRGB
transfer curve of 8-bit photographs to get linear relative radiance, so the
sensor simulation sees natural image statistics. Their dynamic range is far
below real HDR captures; treat results on them as a direction check only.

Requires the optional ``scikit-image`` dependency (``pip install .[corpus]``).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from nrhdr.core import HdrImage
from nrhdr.io import write_pfm

NAMES = ("astronaut", "brick", "camera", "chelsea", "coffee", "coins", "grass", "gravel",
         "hubble_deep_field", "immunohistochemistry", "moon", "retina", "rocket")


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def _luminance(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.dtype.kind in "ui" or img.max() > 1.0:
        img = img / 255.0
    lin = srgb_to_linear(img)
    if lin.ndim == 3:
        lin = lin[..., :3] @ np.array([0.2126, 0.7152, 0.0722])
    return lin


def surrogate_image(name: str, size: int = 128) -> HdrImage:
    """Center crop (after 2x box downsampling when large enough) of one photograph."""
    from skimage import data

    lum = _luminance(getattr(data, name)())
    h, w = lum.shape
    if min(h, w) >= 4 * size:
        lum = lum[: h // 2 * 2, : w // 2 * 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
        h, w = lum.shape
    if min(h, w) < size:
        raise ValueError(f"{name} is smaller than {size}x{size}")
    r0, c0 = (h - size) // 2, (w - size) // 2
    return HdrImage(lum[r0:r0 + size, c0:c0 + size])


def write_corpus(directory, size: int = 128, names=NAMES) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in names:
        p = out / f"{name}.pfm"
        write_pfm(surrogate_image(name, size), p)
        paths.append(p)
    return paths
