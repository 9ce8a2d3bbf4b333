"""Photometric measurement through the two prototype pixels.

Pipeline: :func:`sample` (ideal point sample + 3-cell binning) ->
:func:`apply_camera` (shot noise, read noise, saturation clip) ->
:func:`classify` (validity per reading, fallback retention) ->
:func:`expand_to_grid` (linear constraints on the HR grid).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from nrhdr.core import CORNER_OFFSETS, DimensionError, HdrImage, SensorLayout, block_view


@dataclass(frozen=True)
class CameraModel:
    """Saturation/noise thresholds and noise generation parameters.

    All quantities are relative to the normalized full-scale radiance 1.0.
    ``photon_scale`` is the expected photon count for a reading of 1.0.
    """

    sat_rel: float = 0.97
    noise_floor_rel: float = 0.005
    photon_scale: float = 10000.0
    read_sigma_rel: float = 0.002
    enable_noise: bool = True

    def __post_init__(self):
        if not 0 < self.noise_floor_rel < self.sat_rel <= 1:
            raise ValueError("need 0 < noise_floor_rel < sat_rel <= 1")
        if not self.photon_scale > 0:
            raise ValueError("photon_scale must be positive")
        if not self.read_sigma_rel >= 0:
            raise ValueError("read_sigma_rel must be non-negative")

    def noiseless(self) -> CameraModel:
        return replace(self, enable_noise=False)


@dataclass(frozen=True, eq=False)
class RawMeasurements:
    """Per-block readings; ``large`` is the sum over the three L cells."""

    layout: SensorLayout
    small: np.ndarray
    large: np.ndarray

    def __post_init__(self):
        shape = self.layout.corner.shape
        for name in ("small", "large"):
            a = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if a.shape != shape:
                raise DimensionError(f"{name} has shape {a.shape}, layout has {shape} blocks")
            a.setflags(write=False)
            object.__setattr__(self, name, a)


class Validity(enum.IntEnum):
    VALID = 0
    DISCARDED_OVEREXPOSED = 1
    DISCARDED_UNDEREXPOSED = 2
    KEPT_DESPITE_CLIP = 3
    KEPT_DESPITE_NOISE = 4

    @property
    def retained(self) -> bool:
        return self in (Validity.VALID, Validity.KEPT_DESPITE_CLIP, Validity.KEPT_DESPITE_NOISE)


_RETAINED = np.array([v.retained for v in Validity])
_KEPT = np.array([v in (Validity.KEPT_DESPITE_CLIP, Validity.KEPT_DESPITE_NOISE) for v in Validity])


@dataclass(frozen=True, eq=False)
class SampledFrame:
    """Camera-processed readings with a validity code per reading.

    The thresholds used for classification travel with the frame so exposure
    states (e.g. for the clipping mask) can be recovered later.
    """

    layout: SensorLayout
    small: np.ndarray
    large: np.ndarray
    small_validity: np.ndarray
    large_validity: np.ndarray
    sat_rel: float = 0.97
    noise_floor_rel: float = 0.005
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        shape = self.layout.corner.shape
        for name, dtype in (("small", np.float64), ("large", np.float64),
                            ("small_validity", np.uint8), ("large_validity", np.uint8)):
            a = np.array(getattr(self, name), dtype=dtype, copy=True)
            if a.shape != shape:
                raise DimensionError(f"{name} has shape {a.shape}, layout has {shape} blocks")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.small_validity > 4) or np.any(self.large_validity > 4):
            raise ValueError("unknown validity code")
        if not np.all(self.small_retained | self.large_retained):
            raise ValueError("every block must retain at least one reading")

    @property
    def small_retained(self) -> np.ndarray:
        return _RETAINED[self.small_validity]

    @property
    def large_retained(self) -> np.ndarray:
        return _RETAINED[self.large_validity]

    @property
    def small_kept(self) -> np.ndarray:
        return _KEPT[self.small_validity]

    @property
    def large_kept(self) -> np.ndarray:
        return _KEPT[self.large_validity]

    @property
    def width(self) -> int:
        return self.layout.width

    @property
    def height(self) -> int:
        return self.layout.height

    def fill_factor(self) -> np.ndarray:
        """Local fill factor per block: area share of retained readings."""
        return 0.25 * self.small_retained + 0.75 * self.large_retained

    def same_as(self, other: SampledFrame) -> bool:
        """Bit-identical comparison of layout, readings and validity codes."""
        return (self.layout == other.layout
                and all(np.array_equal(getattr(self, n), getattr(other, n))
                        for n in ("small", "large", "small_validity", "large_validity"))
                and self.sat_rel == other.sat_rel
                and self.noise_floor_rel == other.noise_floor_rel)


def sample(image: HdrImage, layout: SensorLayout) -> RawMeasurements:
    """Ideal noiseless, unclipped readings of both prototype pixels per block."""
    if image.shape != (layout.height, layout.width):
        raise DimensionError(f"image is {image.width}x{image.height}, "
                             f"layout covers {layout.width}x{layout.height}")
    cells = block_view(image.data)
    small = np.take_along_axis(cells, layout.corner[..., None].astype(np.intp), axis=2)[..., 0]
    return RawMeasurements(layout, small, _l_sum(cells, layout.corner))


def _l_sum(cells: np.ndarray, corner: np.ndarray) -> np.ndarray:
    out = np.zeros(corner.shape)
    for q in range(4):
        others = [i for i in range(4) if i != q]
        s = cells[..., others[0]] + cells[..., others[1]] + cells[..., others[2]]
        out = np.where(corner == q, s, out)
    return out


def apply_camera(meas: RawMeasurements, cam: CameraModel, noise_seed: int = 0) -> RawMeasurements:
    """Shot noise, additive Gaussian noise and saturation clipping.

    With noise enabled each reading ``r`` becomes
    ``clip(Poisson(r * F) / F + N(0, sigma), 0, sat_rel)``. All draws come from
    one PCG64 stream seeded by ``noise_seed``: Poisson for the small then the
    large readings, then Gaussian in the same order.
    """
    small, large = meas.small, meas.large
    if cam.enable_noise:
        rng = np.random.default_rng(int(noise_seed) % 2**64)
        f = cam.photon_scale
        noisy = []
        for r in (small, large):
            shot = rng.poisson(np.maximum(r, 0.0) * f) / f
            noisy.append(shot)
        for i in range(2):
            if cam.read_sigma_rel > 0:
                noisy[i] = noisy[i] + rng.normal(0.0, cam.read_sigma_rel, size=noisy[i].shape)
        small, large = noisy
    return RawMeasurements(meas.layout,
                           np.clip(small, 0.0, cam.sat_rel),
                           np.clip(large, 0.0, cam.sat_rel))


def classify(meas: RawMeasurements, cam: CameraModel) -> SampledFrame:
    """Assign a validity code to every reading.

    A reading is valid when ``noise_floor_rel <= r < sat_rel``. When both
    readings of a block are invalid one is kept anyway: the large one under
    joint under-exposure, the small one under joint over-exposure, and the
    under-exposed one when the two fail on opposite sides.
    """
    V = Validity
    lo, hi = cam.noise_floor_rel, cam.sat_rel
    codes = []
    for r in (meas.small, meas.large):
        c = np.full(r.shape, V.VALID, dtype=np.uint8)
        c[r >= hi] = V.DISCARDED_OVEREXPOSED
        c[r < lo] = V.DISCARDED_UNDEREXPOSED
        codes.append(c)
    sv, lv = codes
    both_under = (sv == V.DISCARDED_UNDEREXPOSED) & (lv == V.DISCARDED_UNDEREXPOSED)
    both_over = (sv == V.DISCARDED_OVEREXPOSED) & (lv == V.DISCARDED_OVEREXPOSED)
    small_under_large_over = (sv == V.DISCARDED_UNDEREXPOSED) & (lv == V.DISCARDED_OVEREXPOSED)
    small_over_large_under = (sv == V.DISCARDED_OVEREXPOSED) & (lv == V.DISCARDED_UNDEREXPOSED)
    lv[both_under | small_over_large_under] = V.KEPT_DESPITE_NOISE
    sv[both_over] = V.KEPT_DESPITE_CLIP
    sv[small_under_large_over] = V.KEPT_DESPITE_NOISE
    return SampledFrame(meas.layout, meas.small, meas.large, sv, lv, hi, lo)


def simulate(image: HdrImage, layout: SensorLayout, cam: CameraModel, noise_seed: int = 0) -> SampledFrame:
    """Convenience chain sample -> apply_camera -> classify."""
    return classify(apply_camera(sample(image, layout), cam, noise_seed), cam)


def all_valid_frame(meas: RawMeasurements) -> SampledFrame:
    """Frame that retains every reading as valid, bypassing the camera model.

    Used for consistency experiments on unclipped synthetic signals.
    """
    zeros = np.zeros(meas.layout.corner.shape, dtype=np.uint8)
    sat = max(1.0, float(np.max(meas.small, initial=0.0)), float(np.max(meas.large, initial=0.0)))
    return SampledFrame(meas.layout, meas.small, meas.large, zeros, zeros,
                        sat_rel=np.nextafter(sat, np.inf), noise_floor_rel=0.0)


@dataclass(frozen=True, eq=False)
class Constraints:
    """Linear observations of the HR grid.

    Row ``i`` states ``sum(image.flat[cells[i, :count[i]]]) == values[i]``.
    ``block`` is the row-major block id, ``is_large`` marks binned readings and
    ``validity`` carries the reading's code so consumers can down-weight
    fallback readings.
    """

    width: int
    height: int
    cells: np.ndarray
    count: np.ndarray
    values: np.ndarray
    block: np.ndarray
    is_large: np.ndarray
    validity: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def covered_cells(self) -> np.ndarray:
        c = self.cells[self.cells >= 0]
        return np.unique(c)

    def apply(self, image: np.ndarray) -> np.ndarray:
        """Evaluate every constraint's left-hand side on an (H, W) raster."""
        flat = np.asarray(image, dtype=np.float64).ravel()
        vals = np.where(self.cells >= 0, flat[np.maximum(self.cells, 0)], 0.0)
        return vals.sum(axis=1)


def expand_to_grid(frame: SampledFrame) -> Constraints:
    """Turn every retained reading into one linear constraint on the HR grid.

    Constraints are ordered by block id; within a block the small reading
    precedes the large one.
    """
    rows, cols = frame.layout.block_rows, frame.layout.block_cols
    w = frame.width
    br, bc = np.divmod(np.arange(rows * cols), cols)
    corner = frame.layout.corner.ravel().astype(np.intp)
    offs = np.array(CORNER_OFFSETS)
    cell_of = lambda q: (2 * br + offs[q, 0]) * w + 2 * bc + offs[q, 1]
    all_cells = np.stack([cell_of(q) for q in range(4)], axis=1)  # (nblocks, 4)

    small_cells = np.full((rows * cols, 3), -1, dtype=np.int64)
    small_cells[:, 0] = all_cells[np.arange(rows * cols), corner]
    keep = np.ones((rows * cols, 4), dtype=bool)
    keep[np.arange(rows * cols), corner] = False
    large_cells = all_cells[keep].reshape(rows * cols, 3)

    s_ok = frame.small_retained.ravel()
    l_ok = frame.large_retained.ravel()
    cells = np.stack([small_cells, large_cells], axis=1)  # (nblocks, 2, 3)
    count = np.stack([np.full(rows * cols, 1), np.full(rows * cols, 3)], axis=1)
    values = np.stack([frame.small.ravel(), frame.large.ravel()], axis=1)
    validity = np.stack([frame.small_validity.ravel(), frame.large_validity.ravel()], axis=1)
    is_large = np.zeros((rows * cols, 2), dtype=bool)
    is_large[:, 1] = True
    block = np.repeat(np.arange(rows * cols)[:, None], 2, axis=1)
    sel = np.stack([s_ok, l_ok], axis=1)
    return Constraints(w, frame.height, cells[sel], count[sel].astype(np.int64), values[sel],
                       block[sel].astype(np.int64), is_large[sel], validity[sel])


def exposure_states(frame: SampledFrame) -> tuple[np.ndarray, np.ndarray]:
    """Per-block exposure state of each reading: -1 under, 0 proper, +1 over."""
    out = []
    for r in (frame.small, frame.large):
        s = np.zeros(r.shape, dtype=np.int8)
        s[r >= frame.sat_rel] = 1
        s[r < frame.noise_floor_rel] = -1
        out.append(s)
    return out[0], out[1]


def sampled_image(frame: SampledFrame, mode: str = "zero_fill") -> np.ndarray:
    """Spatial picture of the sampled signal on the HR grid.

    ``zero_fill``: retained small readings at their cells, zeros elsewhere,
    i.e. the reference multiplied by the small-pixel sampling pattern.
    ``spread``: additionally paints each retained large reading divided by
    three over its L cells.
    """
    if mode not in ("zero_fill", "spread"):
        raise ValueError(f"unknown mode {mode!r}")
    h, w = frame.height, frame.width
    cells = np.zeros((h // 2, w // 2, 4))
    corner = frame.layout.corner.astype(np.intp)[..., None]
    s_val = np.where(frame.small_retained, frame.small, 0.0)
    if mode == "spread":
        l_val = np.where(frame.large_retained, frame.large / 3.0, 0.0)
        cells[...] = l_val[..., None]
    np.put_along_axis(cells, corner, s_val[..., None], axis=2)
    return block_view_inverse(cells, h, w)


def block_view_inverse(cells: np.ndarray, h: int, w: int) -> np.ndarray:
    return cells.reshape(h // 2, w // 2, 2, 2).transpose(0, 2, 1, 3).reshape(h, w)
