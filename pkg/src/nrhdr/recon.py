"""Block-wise sparse Fourier reconstruction from point and binned observations.

Each ``B x B`` model block is fitted inside a ``T x T`` support window that
reaches ``border`` cells beyond the block. Inside the window every retained
reading is a linear observation of the model ``g = sum_k c_k phi_k``: small
pixels sample one cell, large pixels sum their three L cells. Observations
are weighted by ``rho ** distance`` to the model block, a greedy pursuit adds
DFT basis functions (pushed through the same sampling/binning operator) one
conjugate pair at a time, and the block's ``B x B`` part of ``g`` is kept.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from nrhdr import kernels
from nrhdr.core import CORNER_OFFSETS, DimensionError, HdrImage
from nrhdr.sensor import Constraints, SampledFrame, Validity, expand_to_grid

log = logging.getLogger(__name__)


class ReconstructionError(RuntimeError):
    pass


class DegenerateSystemError(ReconstructionError):
    """The dense least-squares system is rank deficient."""

    def __init__(self, deficiency: int, n_params: int, n_constraints: int):
        self.deficiency = deficiency
        super().__init__(f"degenerate system: rank deficiency {deficiency} "
                         f"({n_params} unknowns, {n_constraints} constraints)")


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


@dataclass(frozen=True)
class ReconstructionConfig:
    model_block: int = 4
    border: int = 14
    fft_size: int | None = None
    max_iterations: int = 200
    gamma: float = 0.5
    rho: float = 0.7
    min_residual_gain: float = 1e-6
    fallback_weight: float = 0.25
    frequency_prior: float = 0.0
    use_reconstructed_context: bool = False
    context_weight: float = 0.5
    workers: int = 1
    backend: str | None = None

    def __post_init__(self):
        b = self.model_block
        if b < 2 or b % 2:
            raise ValueError("model_block must be an even integer >= 2")
        if self.border < 0:
            raise ValueError("border must be non-negative")
        if self.fft_size is not None and self.fft_size < b + 2 * self.border:
            raise ValueError("fft_size must be >= model_block + 2 * border")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.min_residual_gain < 0:
            raise ValueError("min_residual_gain must be >= 0")
        if not 0 <= self.fallback_weight <= 1:
            raise ValueError("fallback_weight must lie in [0, 1]")
        if self.frequency_prior < 0:
            raise ValueError("frequency_prior must be >= 0")
        if not 0 < self.context_weight <= 1:
            raise ValueError("context_weight must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.backend not in (None, "cython", "python"):
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def transform_size(self) -> int:
        if self.fft_size is not None:
            return int(self.fft_size)
        return _next_pow2(self.model_block + 2 * self.border)


@dataclass(frozen=True, eq=False)
class BlockModel:
    """Selected DFT indices and their expansion coefficients for one window."""

    size: int
    selected: np.ndarray  # (n, 2) int, FFT index order
    coeffs: np.ndarray  # (n,) complex
    energy: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_coefficients(cls, C: np.ndarray, energy=None) -> BlockModel:
        nz = np.argwhere(C != 0)
        return cls(C.shape[0], nz, C[nz[:, 0], nz[:, 1]], energy)

    @property
    def n_terms(self) -> int:
        """Selected basis functions, a conjugate pair counting once."""
        t = self.size
        k = [tuple(v) for v in self.selected]
        return len({min((a, b), ((-a) % t, (-b) % t)) for a, b in k})

    def coefficient_grid(self) -> np.ndarray:
        C = np.zeros((self.size, self.size), dtype=np.complex128)
        C[self.selected[:, 0], self.selected[:, 1]] = self.coeffs
        return C

    def synthesize_complex(self) -> np.ndarray:
        t = self.size
        return np.fft.ifft2(self.coefficient_grid()) * (t * t)

    def synthesize(self) -> np.ndarray:
        return self.synthesize_complex().real

    def is_conjugate_symmetric(self) -> bool:
        C = self.coefficient_grid()
        t = self.size
        mirror = C[(-np.arange(t)) % t][:, (-np.arange(t)) % t]
        return bool(np.allclose(C, np.conj(mirror), rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())))


def l_kernel_response(t: int) -> np.ndarray:
    """H[q, k1, k2]: DFT response of the 3-cell L (corner q missing) at origin."""
    e = np.exp(2j * np.pi * np.arange(t) / t)
    e1, e2 = e[:, None], e[None, :]
    cell = [np.ones((t, t)), np.broadcast_to(e2, (t, t)), np.broadcast_to(e1, (t, t)), e1 * e2]
    full = cell[0] + cell[1] + cell[2] + cell[3]
    return np.stack([full - cell[q] for q in range(4)])


def selection_prior(cfg: ReconstructionConfig) -> np.ndarray | None:
    """Score multiplier ``(1 - |k| / |k_max|) ** p`` favouring low frequencies.

    ``|k|`` is the signed index magnitude and ``|k_max| = T / sqrt(2)``. With
    the default ``p = 0`` no prior is applied and selection follows the energy
    decrease alone.
    """
    if cfg.frequency_prior == 0:
        return None
    t = cfg.transform_size
    k = np.fft.fftfreq(t, 1.0 / t)
    r = np.hypot(k[:, None], k[None, :]) / (t / np.sqrt(2.0))
    return (1.0 - r) ** cfg.frequency_prior


def spatial_weights(cfg: ReconstructionConfig) -> tuple[np.ndarray, np.ndarray]:
    """Point weight window and per-orientation binned weight windows.

    The point weight is ``rho ** d`` with ``d`` the Euclidean distance to the
    nearest model-block cell. A binned observation with its origin at (m, n)
    gets the mean of its member cells' point weights, or zero if any member
    cell falls outside the window.
    """
    t, b, d = cfg.transform_size, cfg.model_block, cfg.border
    m = np.arange(t)
    gap = np.maximum(0, np.maximum(d - m, m - (d + b - 1)))
    win = cfg.rho ** np.hypot(gap[:, None], gap[None, :])
    wq = np.zeros((4, t, t))
    for q, corner in enumerate(CORNER_OFFSETS):
        for dy in (0, 1):
            for dx in (0, 1):
                if (dy, dx) != corner:
                    wq[q, :t - 1, :t - 1] += win[dy:t - 1 + dy, dx:t - 1 + dx]
    return win, wq / 3.0


@dataclass
class _ObservationMaps:
    """Observation values and reliability multipliers on a padded HR grid."""

    point_val: np.ndarray
    point_mult: np.ndarray
    bin_val: np.ndarray
    bin_mult: np.ndarray  # (4, H, W), nonzero only at L origins


def _observation_maps(frame: SampledFrame, cons: Constraints, cfg: ReconstructionConfig) -> _ObservationMaps:
    h, w = frame.height, frame.width
    t, b, d = cfg.transform_size, cfg.model_block, cfg.border
    kept = (cons.validity == Validity.KEPT_DESPITE_CLIP) | (cons.validity == Validity.KEPT_DESPITE_NOISE)
    mult = np.where(kept, cfg.fallback_weight, 1.0)

    point_val = np.zeros(h * w)
    point_mult = np.zeros(h * w)
    pts = ~cons.is_large
    point_val[cons.cells[pts, 0]] = cons.values[pts]
    point_mult[cons.cells[pts, 0]] = mult[pts]

    bin_val = np.zeros(h * w)
    bin_mult = np.zeros((4, h * w))
    lg = cons.is_large
    blk = cons.block[lg]
    br, bc = np.divmod(blk, frame.layout.block_cols)
    origin = 2 * br * w + 2 * bc
    q = frame.layout.corner.ravel()[blk].astype(np.intp)
    bin_val[origin] = cons.values[lg]
    bin_mult[q, origin] = mult[lg]

    pad = ((d, t - b - d), (d, t - b - d))
    return _ObservationMaps(
        np.pad(point_val.reshape(h, w), pad),
        np.pad(point_mult.reshape(h, w), pad),
        np.pad(bin_val.reshape(h, w), pad),
        np.pad(bin_mult.reshape(4, h, w), ((0, 0),) + pad),
    )


def _prepare_windows(maps: _ObservationMaps, win, wq, origins, t):
    """Stack support windows at padded origins [(r, c), ...] and transform them."""
    rs = np.array([o[0] for o in origins])
    cs = np.array([o[1] for o in origins])
    pv = sliding_window_view(maps.point_val, (t, t))[rs, cs]
    pm = sliding_window_view(maps.point_mult, (t, t))[rs, cs]
    bv = sliding_window_view(maps.bin_val, (t, t))[rs, cs]
    bm = sliding_window_view(maps.bin_mult, (t, t), axis=(1, 2))[:, rs, cs].transpose(1, 0, 2, 3)

    wpt = win * pm
    wbin = wq[None] * bm
    back = wpt * pv
    e0 = np.sum(wpt * pv * pv, axis=(1, 2)) + np.sum(wbin * (bv * bv)[:, None], axis=(1, 2, 3))
    for q, corner in enumerate(CORNER_OFFSETS):
        tq = wbin[:, q] * bv
        for dy in (0, 1):
            for dx in (0, 1):
                if (dy, dx) != corner:
                    back[:, dy:, dx:] += tq[:, :t - dy, :t - dx]
    return np.fft.fft2(back), np.fft.fft2(wpt), np.fft.fft2(wbin), e0


def _check_energy(energy: np.ndarray, where: str) -> None:
    rise = np.diff(energy, axis=1)
    tol = 1e-9 * np.maximum(energy[:, :1], 1e-300)
    if np.any(rise > tol):
        raise ReconstructionError(f"weighted residual energy increased ({where})")


def _validate(frame: SampledFrame, cfg: ReconstructionConfig) -> None:
    b = cfg.model_block
    if frame.height % b or frame.width % b:
        raise DimensionError(f"image {frame.width}x{frame.height} is not divisible "
                             f"into {b}x{b} model blocks")


class _Solver:
    """Observation maps and kernel inputs shared by every window of one frame."""

    def __init__(self, frame: SampledFrame, cfg: ReconstructionConfig):
        _validate(frame, cfg)
        self.cfg = cfg
        self.pursue = kernels.get_pursue(cfg.backend)
        self.maps = _observation_maps(frame, expand_to_grid(frame), cfg)
        self.win, self.wq = spatial_weights(cfg)
        self.H = l_kernel_response(cfg.transform_size)
        self.prior = selection_prior(cfg)

    def coefficients(self, origins):
        cfg, t = self.cfg, self.cfg.transform_size
        N0, wph, wqh, e0 = _prepare_windows(self.maps, self.win, self.wq, origins, t)
        C, n_it, energy = self.pursue(N0, wph, wqh, self.H, e0, cfg.max_iterations,
                                      cfg.gamma, cfg.min_residual_gain, self.prior)
        _check_energy(energy, f"windows at {origins[0]}")
        return C, n_it, energy

    def run(self, origins):
        """Model blocks at padded origins, their iteration counts and imag ratio."""
        t, b, d = self.cfg.transform_size, self.cfg.model_block, self.cfg.border
        C, n_it, _ = self.coefficients(origins)
        g = np.fft.ifft2(C) * (t * t)
        mag = np.abs(g.real).max(axis=(1, 2))
        ratio = np.abs(g.imag).max(axis=(1, 2)) / np.maximum(mag, 1e-300)
        return g.real[:, d:d + b, d:d + b], n_it, float(ratio.max(initial=0.0))


def reconstruct(frame: SampledFrame, cfg: ReconstructionConfig | None = None,
                diagnostics: dict | None = None) -> HdrImage:
    """Reconstruct the full-resolution image from a sampled frame.

    Blocks are independent unless ``cfg.use_reconstructed_context`` is set, in
    which case they run in raster order and already reconstructed cells that
    carry no small-pixel reading join later windows as point observations
    weighted by ``cfg.context_weight``.

    ``diagnostics``, when given, receives per-block iteration counts, the
    largest imaginary/real magnitude ratio of the synthesized models and the
    kernel backend used.
    """
    cfg = cfg or ReconstructionConfig()
    solver = _Solver(frame, cfg)
    b, d = cfg.model_block, cfg.border
    h, w = frame.height, frame.width
    nby, nbx = h // b, w // b
    out = np.zeros((h, w))
    iters = np.zeros((nby, nbx), dtype=np.int64)
    imag_ratio = np.zeros(nby)

    if cfg.use_reconstructed_context:
        maps = solver.maps
        free = maps.point_mult == 0
        for by in range(nby):
            for bx in range(nbx):
                blk, n_it, ratio = solver.run([(by * b, bx * b)])
                out[by * b:(by + 1) * b, bx * b:(bx + 1) * b] = blk[0]
                iters[by, bx] = n_it[0]
                imag_ratio[by] = max(imag_ratio[by], ratio)
                rows = slice(by * b + d, (by + 1) * b + d)
                cols = slice(bx * b + d, (bx + 1) * b + d)
                sel = free[rows, cols]
                maps.point_val[rows, cols][sel] = np.maximum(blk[0][sel], 0.0)
                maps.point_mult[rows, cols][sel] = cfg.context_weight
    else:
        def row_job(by):
            return by, solver.run([(by * b, bx * b) for bx in range(nbx)])

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(row_job, range(nby)))
        else:
            results = [row_job(by) for by in range(nby)]
        for by, (blocks, n_it, ratio) in results:
            out[by * b:(by + 1) * b] = blocks.transpose(1, 0, 2).reshape(b, w)
            iters[by] = n_it
            imag_ratio[by] = ratio

    if diagnostics is not None:
        diagnostics["iterations"] = iters
        diagnostics["max_imag_ratio"] = float(imag_ratio.max(initial=0.0))
        diagnostics["backend"] = cfg.backend or kernels.BACKEND
        diagnostics["unfloored_min"] = float(out.min())
    return HdrImage(np.maximum(out, 0.0))


def reconstruct_region(frame: SampledFrame, region: tuple[int, int, int, int],
                       cfg: ReconstructionConfig | None = None) -> np.ndarray:
    """Reconstruct only the blocks overlapping ``region`` = (row, col, height, width).

    Identical to cropping :func:`reconstruct` (independent blocks), without
    fitting the rest of the frame.
    """
    cfg = cfg or ReconstructionConfig()
    if cfg.use_reconstructed_context:
        raise ValueError("region reconstruction needs independent blocks")
    r0, c0, rh, rw = region
    if rh < 1 or rw < 1 or r0 < 0 or c0 < 0 or r0 + rh > frame.height or c0 + rw > frame.width:
        raise DimensionError("region exceeds the frame")
    solver = _Solver(frame, cfg)
    b = cfg.model_block
    brs = range(r0 // b, (r0 + rh - 1) // b + 1)
    bcs = range(c0 // b, (c0 + rw - 1) // b + 1)
    blocks, _, _ = solver.run([(br * b, bc * b) for br in brs for bc in bcs])
    tile = blocks.reshape(len(brs), len(bcs), b, b).transpose(0, 2, 1, 3).reshape(len(brs) * b, len(bcs) * b)
    oy, ox = r0 - brs[0] * b, c0 - bcs[0] * b
    return np.maximum(tile[oy:oy + rh, ox:ox + rw], 0.0)


def fit_block(frame: SampledFrame, block_row: int, block_col: int,
              cfg: ReconstructionConfig | None = None) -> BlockModel:
    """Fit the model of a single block and return it with its energy trace.

    The model lives in window coordinates: window cell (m, n) is HR cell
    (block_row * B - border + m, block_col * B - border + n).
    """
    cfg = cfg or ReconstructionConfig()
    b = cfg.model_block
    solver = _Solver(frame, cfg)
    if not (0 <= block_row < frame.height // b and 0 <= block_col < frame.width // b):
        raise IndexError(f"block ({block_row}, {block_col}) outside the frame")
    C, n_it, energy = solver.coefficients([(block_row * b, block_col * b)])
    return BlockModel.from_coefficients(C[0], energy[0, :n_it[0] + 1])


def _real_dft_columns(h: int, w: int, k_limit: float):
    """Real DFT basis over an h x w patch restricted to |k| <= k_limit."""
    m, n = np.mgrid[0:h, 0:w]
    cols, labels = [], []
    for k1 in range(-(h // 2), (h + 1) // 2):
        for k2 in range(-(w // 2), (w + 1) // 2):
            if k1 * k1 + k2 * k2 > k_limit * k_limit:
                continue
            if k1 < 0 or (k1 == 0 and k2 < 0):
                continue
            theta = 2 * np.pi * (k1 * m / h + k2 * n / w)
            cols.append(np.cos(theta).ravel())
            labels.append((k1, k2, "cos"))
            s = np.sin(theta)
            if np.abs(s).max() > 1e-12:
                cols.append(s.ravel())
                labels.append((k1, k2, "sin"))
    return np.array(cols).T, labels


def oracle_least_squares(frame: SampledFrame, region: tuple[int, int, int, int], k_limit: float = 2,
                         fallback_weight: float = 0.25) -> np.ndarray:
    """Dense weighted least-squares fit on a small region.

    ``region`` is (row, col, height, width) in HR cells, at most 16 x 16. Only
    constraints whose cells all lie inside the region take part. The model is
    the real span of the region-sized DFT basis with ``|k| <= k_limit``; the
    normal equations are solved directly.
    """
    r0, c0, rh, rw = region
    if rh < 1 or rw < 1 or rh > 16 or rw > 16:
        raise ValueError("oracle regions must be between 1x1 and 16x16")
    if r0 < 0 or c0 < 0 or r0 + rh > frame.height or c0 + rw > frame.width:
        raise DimensionError("region exceeds the frame")
    cons = expand_to_grid(frame)
    cr, cc = np.divmod(cons.cells, frame.width)
    valid_cell = cons.cells >= 0
    inside = (cr >= r0) & (cr < r0 + rh) & (cc >= c0) & (cc < c0 + rw)
    use = np.all(inside | ~valid_cell, axis=1)

    basis, _ = _real_dft_columns(rh, rw, k_limit)
    local = np.where(valid_cell[use], (cr[use] - r0) * rw + (cc[use] - c0), -1)
    A = np.where(local[..., None] >= 0, basis[np.maximum(local, 0)], 0.0).sum(axis=1)
    y = cons.values[use]
    kept = np.isin(cons.validity[use], (Validity.KEPT_DESPITE_CLIP, Validity.KEPT_DESPITE_NOISE))
    wts = np.where(kept, fallback_weight, 1.0)

    n_params = basis.shape[1]
    sw = np.sqrt(wts)[:, None]
    rank = np.linalg.matrix_rank(A * sw) if len(y) else 0
    if rank < n_params:
        raise DegenerateSystemError(n_params - rank, n_params, len(y))
    AtW = A.T * wts
    coef = np.linalg.solve(AtW @ A, AtW @ y)
    return (basis @ coef).reshape(rh, rw)
