"""Synthetic test signals and spectral aliasing analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nrhdr.core import DimensionError, HdrImage


@dataclass(frozen=True)
class ZoneplateSpec:
    """Radial chirp under a horizontal multiplicative ramp.

    ``g_lo == g_hi`` switches the ramp off (a constant gain), which is how the
    radially symmetric pattern is obtained.
    """

    size: int = 512
    lum_max: float = 1.0
    g_lo: float = 0.01
    g_hi: float = 1.0
    chirp_rate: float = 1.0

    def __post_init__(self):
        if self.size < 2 or self.size % 2:
            raise DimensionError(f"zoneplate size must be even and >= 2, got {self.size}")
        if self.lum_max <= 0:
            raise ValueError("lum_max must be positive")
        if not 0 <= self.g_lo <= self.g_hi or self.g_hi <= 0:
            raise ValueError("gradient needs 0 <= g_lo <= g_hi and g_hi > 0")
        if not 0 < self.chirp_rate <= 1:
            raise ValueError("chirp_rate must lie in (0, 1]")

    @property
    def center(self) -> float:
        return self.size / 2

    @property
    def alpha(self) -> float:
        """Phase curvature; the local frequency alpha*r/pi hits the target at the corner."""
        r_corner = self.center * np.sqrt(2.0)
        return self.chirp_rate * 0.5 * np.pi / r_corner

    def ramp(self) -> np.ndarray:
        x = np.arange(self.size)
        return self.g_lo + (self.g_hi - self.g_lo) * x / (self.size - 1)

    def local_frequency(self, r) -> np.ndarray:
        """Instantaneous radial frequency in cycles per pixel at radius ``r``."""
        return self.alpha * np.asarray(r, dtype=np.float64) / np.pi


def zoneplate(spec: ZoneplateSpec | None = None) -> HdrImage:
    spec = spec or ZoneplateSpec()
    y, x = np.mgrid[0:spec.size, 0:spec.size].astype(np.float64)
    r2 = (x - spec.center) ** 2 + (y - spec.center) ** 2
    chirp = 0.5 * (1.0 + np.cos(spec.alpha * r2))
    return HdrImage(spec.ramp()[None, :] * spec.lum_max * chirp)


def stripes(size: int, period: int, orientation: str = "vertical",
            low: float = 0.1, high: float = 0.5) -> HdrImage:
    """Square wave: the first half of each period is ``low``, the second ``high``.

    Vertical stripes vary along x (columns alternate for period 2).
    """
    if period < 2:
        raise ValueError("period must be >= 2")
    if size < 1 or size % period:
        raise DimensionError(f"size {size} is not a multiple of period {period}")
    if orientation not in ("vertical", "horizontal"):
        raise ValueError(f"orientation must be 'vertical' or 'horizontal', got {orientation!r}")
    phase = np.arange(size) % period
    row = np.where(phase < period / 2, low, high)
    img = np.broadcast_to(row[None, :], (size, size))
    return HdrImage(img if orientation == "vertical" else img.T)


@dataclass(frozen=True)
class CoherenceReport:
    peak_at_true: float
    max_spurious: float
    noise_floor: float
    max_spurious_freq: tuple[int, int] | None

    @property
    def spurious_ratio(self) -> float:
        return self.max_spurious / self.peak_at_true if self.peak_at_true > 0 else float("inf")


def _box3(a: np.ndarray) -> np.ndarray:
    """Cyclic 3x3 box sum."""
    s = a + np.roll(a, 1, 0) + np.roll(a, -1, 0)
    return s + np.roll(s, 1, 1) + np.roll(s, -1, 1)


def _neighbourhood(n: int, f) -> np.ndarray:
    m = np.zeros((n, n), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            m[(f[0] + dy) % n, (f[1] + dx) % n] = True
    return m


def coherence_report(image, true_freq) -> CoherenceReport:
    """Spectral energy at a known signal line versus the strongest other peak.

    ``true_freq`` is a (row, col) DFT index, e.g. ``(0, n // 2)`` for period-2
    vertical stripes. Energies are |DFT|^2 summed over 3x3 neighbourhoods; the
    signal neighbourhood includes the conjugate line, spurious peaks exclude
    the signal and DC neighbourhoods entirely.
    """
    a = image.data if isinstance(image, HdrImage) else np.asarray(image, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise DimensionError("coherence analysis needs a square image")
    f = (int(true_freq[0]) % n, int(true_freq[1]) % n)
    signed = [v if v <= n // 2 else v - n for v in f]
    if any(abs(v) > n // 2 for v in signed):
        raise ValueError("true_freq lies beyond Nyquist")

    spec = np.fft.fft2(a)
    power = spec.real ** 2 + spec.imag ** 2
    spatial = float(np.sum(a * a))
    parseval = float(power.sum()) / (n * n)
    if abs(parseval - spatial) > 1e-9 * max(spatial, 1e-300):
        raise ArithmeticError("Parseval check failed")

    conj = ((-f[0]) % n, (-f[1]) % n)
    sig = _neighbourhood(n, f) | _neighbourhood(n, conj)
    dc = _neighbourhood(n, (0, 0))
    # energy at the true line counted once even when f is its own conjugate
    peak = float(power[sig].sum())

    # spurious candidates: 3x3 windows that do not touch the signal or DC
    box = _box3(power)
    touches = _box3((sig | dc).astype(np.float64)) > 0
    cand = np.where(touches, -1.0, box)
    idx = np.unravel_index(int(np.argmax(cand)), cand.shape)
    max_sp = float(max(cand[idx], 0.0))
    rest = power[~(sig | dc)]
    return CoherenceReport(peak, max_sp, float(np.median(rest)) if rest.size else 0.0,
                           (int(idx[0]), int(idx[1])) if cand[idx] >= 0 else None)
