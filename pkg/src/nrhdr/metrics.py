"""Image quality metrics, tone mapping and clipping-mask rendering."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from nrhdr.core import CORNER_OFFSETS, DimensionError, HdrImage
from nrhdr.sensor import SampledFrame, exposure_states

DEFAULT_PU21_VARIANT = "banding_glare"

# clipping-mask palette (RGB in [0, 1])
MASK_NEUTRAL = (0.5, 0.5, 0.5)
MASK_SMALL_OVER = (1.0, 0.0, 0.0)
MASK_SMALL_UNDER = (0.0, 1.0, 0.0)
MASK_LARGE_OVER = (1.0, 1.0, 0.0)
MASK_LARGE_UNDER = (0.0, 0.0, 1.0)


def _pixels(image) -> np.ndarray:
    return image.data if isinstance(image, HdrImage) else np.asarray(image, dtype=np.float64)


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def psnr(reference, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` when the images are identical."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = _mse(_pixels(reference), _pixels(test))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class DisplayModel:
    """Maps relative radiance v to absolute luminance black + v * (peak - black)."""

    peak_cd_m2: float = 1e4
    black_cd_m2: float = 0.005

    def __post_init__(self):
        if not 0 <= self.black_cd_m2 < self.peak_cd_m2:
            raise ValueError("display needs 0 <= black < peak")

    def luminance(self, relative) -> np.ndarray:
        return self.black_cd_m2 + _pixels(relative) * (self.peak_cd_m2 - self.black_cd_m2)


class CoefficientError(ValueError):
    """PU21 coefficient data is missing or malformed."""


@dataclass(frozen=True)
class Pu21Coefficients:
    variant: str
    p: tuple[float, ...]
    l_min: float
    l_max: float
    v_min: float


def load_pu21(variant: str = DEFAULT_PU21_VARIANT, path=None) -> Pu21Coefficients:
    """Read one coefficient set from an INI file (the packaged table by default)."""
    ini = configparser.ConfigParser()
    try:
        if path is None:
            text = resources.files("nrhdr").joinpath("data/pu21.ini").read_text(encoding="utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        ini.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise CoefficientError(f"cannot read PU21 coefficients: {exc}") from exc
    if variant not in ini:
        raise CoefficientError(f"no PU21 variant {variant!r}; available: {', '.join(ini.sections())}")
    sec = ini[variant]
    try:
        p = tuple(float(x) for x in sec["p"].split(","))
        l_min, l_max, v_min = float(sec["l_min"]), float(sec["l_max"]), float(sec["v_min"])
    except (KeyError, ValueError) as exc:
        raise CoefficientError(f"malformed PU21 section {variant!r}: {exc}") from exc
    if len(p) != 7 or not 0 < l_min < l_max:
        raise CoefficientError(f"PU21 section {variant!r} needs 7 coefficients and 0 < l_min < l_max")
    return Pu21Coefficients(variant, p, l_min, l_max, v_min)


def pu21_encode(luminance, coeffs: Pu21Coefficients | None = None) -> np.ndarray:
    """PU21 encoding of absolute luminance (cd/m^2), clamped to the valid range."""
    c = coeffs or load_pu21()
    p = c.p
    y = np.clip(np.asarray(luminance, dtype=np.float64), c.l_min, c.l_max)
    yp = y ** p[3]
    return p[6] * (((p[0] + p[1] * yp) / (1.0 + p[2] * yp)) ** p[4] - p[5])


def pu21_psnr(reference, test, display: DisplayModel | None = None,
              coeffs: Pu21Coefficients | None = None) -> float:
    display = display or DisplayModel()
    c = coeffs or load_pu21()
    a = pu21_encode(display.luminance(reference), c)
    b = pu21_encode(display.luminance(test), c)
    peak = float(pu21_encode(display.peak_cd_m2, c) - pu21_encode(display.black_cd_m2, c))
    mse = _mse(a, b)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class QualityReport:
    image_id: str
    layout: str
    psnr_db: float
    pu21_psnr_db: float
    pu21_variant: str = DEFAULT_PU21_VARIANT
    wall_time: float = 0.0
    scale: float = 1.0

    @staticmethod
    def format_db(value: float) -> str:
        return "inf" if value == math.inf else f"{value:.6f}"


def reinhard_tonemap(image, key: float = 0.18, eps: float = 1e-6) -> np.ndarray:
    """Global Reinhard operator L' / (1 + L') with L' = key * L / L_avg.

    ``L_avg`` is the log-average of ``max(L, eps)``, so a constant image above
    ``eps`` maps exactly to ``key / (1 + key)``.
    """
    lum = _pixels(image)
    l_avg = math.exp(float(np.mean(np.log(np.maximum(lum, eps)))))
    scaled = key * lum / l_avg
    return np.clip(scaled / (1.0 + scaled), 0.0, 1.0)


def clipping_mask(frame: SampledFrame) -> np.ndarray:
    """RGB raster (H, W, 3) colouring over- and under-exposed readings per cell."""
    s_state, l_state = exposure_states(frame)
    h, w = frame.height, frame.width
    rgb = np.empty((h // 2, w // 2, 4, 3))
    rgb[...] = MASK_NEUTRAL
    is_small = np.stack([frame.layout.corner == q for q in range(4)], axis=-1)
    for state, over, under, sel in ((l_state, MASK_LARGE_OVER, MASK_LARGE_UNDER, ~is_small),
                                    (s_state, MASK_SMALL_OVER, MASK_SMALL_UNDER, is_small)):
        rgb[sel & (state == 1)[..., None]] = over
        rgb[sel & (state == -1)[..., None]] = under
    out = np.empty((h, w, 3))
    for q, (dy, dx) in enumerate(CORNER_OFFSETS):
        out[dy::2, dx::2] = rgb[:, :, q]
    return out
