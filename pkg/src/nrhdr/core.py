"""Domain types, sensor layouts and per-cell pixel classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# corner index -> (row, col) offset of the small pixel inside its 2x2 block
CORNER_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))

LAYOUT_MAGIC = "NRHDR-LAYOUT"
LAYOUT_VERSION = "v1"


class DimensionError(ValueError):
    """Image or layout dimensions are unusable or do not match."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HdrImage:
    """Single-channel linear radiance raster in relative units.

    ``data`` is stored as a read-only float64 array of shape (height, width).
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise DimensionError(f"expected a non-empty 2D raster, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("radiance must be finite")
        if np.any(a < 0):
            raise ValueError("radiance must be non-negative")
        object.__setattr__(self, "data", _frozen(a))

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> HdrImage:
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise DimensionError(f"{values.size} values for a {width}x{height} image")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, HdrImage):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


class LayoutKind(enum.Enum):
    REGULAR = "regular"
    NONREGULAR = "nonregular"

    @classmethod
    def parse(cls, value) -> LayoutKind:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown layout kind {value!r}")


@dataclass(frozen=True, eq=False)
class SensorLayout:
    """Per-block orientation map of the two prototype pixels.

    ``corner[r, c]`` is the HR position of the small pixel inside block
    (r, c): 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right. The other
    three cells form the L-shaped large pixel.
    """

    kind: LayoutKind
    corner: np.ndarray
    seed: int = 0
    regular_corner: int = field(default=1, repr=False)

    def __post_init__(self):
        c = np.array(self.corner, dtype=np.uint8, copy=True)
        if c.ndim != 2 or c.size == 0:
            raise DimensionError("corner map must be a non-empty 2D array")
        if np.any(c > 3):
            raise ValueError("corner indices must lie in {0, 1, 2, 3}")
        if self.kind is LayoutKind.REGULAR and np.any(c != c.flat[0]):
            raise ValueError("a regular layout uses one corner for every block")
        object.__setattr__(self, "corner", _frozen(c))

    @property
    def block_rows(self) -> int:
        return self.corner.shape[0]

    @property
    def block_cols(self) -> int:
        return self.corner.shape[1]

    @property
    def width(self) -> int:
        return 2 * self.block_cols

    @property
    def height(self) -> int:
        return 2 * self.block_rows

    @property
    def n_blocks(self) -> int:
        return self.corner.size

    def small_mask(self) -> np.ndarray:
        """Boolean HR map, True where a small pixel sits."""
        mask = np.zeros((self.height, self.width), dtype=bool)
        for q, (dy, dx) in enumerate(CORNER_OFFSETS):
            mask[dy::2, dx::2] = self.corner == q
        return mask

    def __eq__(self, other):
        if not isinstance(other, SensorLayout):
            return NotImplemented
        return (self.kind is other.kind and self.seed == other.seed
                and np.array_equal(self.corner, other.corner))

    __hash__ = None

    def to_text(self) -> str:
        lines = [f"{LAYOUT_MAGIC} {LAYOUT_VERSION} {self.kind.value} "
                 f"{self.block_cols} {self.block_rows} {self.seed}"]
        lines.extend("".join(str(int(v)) for v in row) for row in self.corner)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SensorLayout:
        lines = [ln.strip() for ln in text.strip().splitlines()]
        head = lines[0].split() if lines else []
        if len(head) != 6 or head[0] != LAYOUT_MAGIC or head[1] != LAYOUT_VERSION:
            raise ValueError(f"not a {LAYOUT_MAGIC} {LAYOUT_VERSION} header: {lines[:1]}")
        kind = LayoutKind.parse(head[2])
        cols, rows, seed = int(head[3]), int(head[4]), int(head[5])
        body = lines[1:]
        if len(body) != rows or any(len(r) != cols for r in body):
            raise DimensionError(f"layout body does not match {cols}x{rows} blocks")
        try:
            corner = np.array([[int(ch) for ch in r] for r in body], dtype=np.uint8)
        except ValueError as exc:
            raise ValueError("layout body must contain corner digits only") from exc
        regular_corner = int(corner.flat[0]) if kind is LayoutKind.REGULAR else 1
        return cls(kind, corner, seed, regular_corner)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def load(cls, path) -> SensorLayout:
        return cls.from_text(Path(path).read_text(encoding="ascii"))


def make_layout(kind, width: int, height: int, seed: int = 0, regular_corner: int = 1) -> SensorLayout:
    """Build a regular or non-regular layout covering a width x height HR grid.

    Non-regular corners are drawn i.i.d. uniform from {0, 1, 2, 3} with
    ``numpy.random.default_rng(seed)`` (PCG64), row-major over blocks.
    """
    kind = LayoutKind.parse(kind)
    if width < 2 or height < 2 or width % 2 or height % 2:
        raise DimensionError(f"layouts need even dimensions >= 2, got {width}x{height}")
    if regular_corner not in (0, 1, 2, 3):
        raise ValueError(f"regular_corner must be in 0..3, got {regular_corner}")
    rows, cols = height // 2, width // 2
    if kind is LayoutKind.REGULAR:
        corner = np.full((rows, cols), regular_corner, dtype=np.uint8)
    else:
        rng = np.random.default_rng(int(seed) % 2**64)
        corner = rng.integers(0, 4, size=(rows, cols), dtype=np.uint8)
    return SensorLayout(kind, corner, int(seed), regular_corner)


SMALL = -1


def classify_pixels(layout: SensorLayout) -> np.ndarray:
    """Per-cell pixel class map.

    Returns an int64 raster: ``SMALL`` (-1) on small-pixel cells, otherwise the
    row-major block id of the large pixel the cell belongs to.
    """
    rows, cols = layout.block_rows, layout.block_cols
    block_id = np.arange(rows * cols, dtype=np.int64).reshape(rows, cols)
    grid = np.repeat(np.repeat(block_id, 2, axis=0), 2, axis=1)
    grid[layout.small_mask()] = SMALL
    return grid


def block_view(a: np.ndarray) -> np.ndarray:
    """Reshape an (H, W) raster into (H/2, W/2, 4) with cells ordered by corner index."""
    h, w = a.shape
    return a.reshape(h // 2, 2, w // 2, 2).transpose(0, 2, 1, 3).reshape(h // 2, w // 2, 4)
