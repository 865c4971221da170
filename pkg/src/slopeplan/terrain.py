"""2.5D elevation grids: synthesis, block-mean downscaling, sampling and text I/O."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Z_MAX = 2.0
SPIKE_LIMIT = 0.5


class DemFormatError(ValueError):
    """Raised when a DEM file cannot be parsed."""


class DimensionError(ValueError):
    """Raised when grid dimensions are incompatible with an operation."""


@dataclass(frozen=True, eq=False)
class DemGrid:
    """Rectangular elevation grid.

    ``elevations[y, x]`` holds the altitude of cell ``(x, y)`` in map units;
    one cell is one horizontal map unit and ``world_scale_m`` converts map
    units to meters.
    """

    elevations: np.ndarray
    world_scale_m: float = 100.0

    def __post_init__(self):
        z = np.array(self.elevations, dtype=np.float64, copy=True)
        if z.ndim != 2:
            raise DimensionError(f"elevations must be 2-D, got shape {z.shape}")
        if z.shape[0] < 2 or z.shape[1] < 2:
            raise DimensionError(f"grid must be at least 2x2, got {z.shape[1]}x{z.shape[0]}")
        if not np.all(np.isfinite(z)):
            raise ValueError("elevations must be finite")
        if not (self.world_scale_m > 0 and math.isfinite(self.world_scale_m)):
            raise ValueError("world_scale_m must be positive")
        z.setflags(write=False)
        object.__setattr__(self, "elevations", z)
        object.__setattr__(self, "world_scale_m", float(self.world_scale_m))

    @property
    def width(self) -> int:
        return self.elevations.shape[1]

    @property
    def height(self) -> int:
        return self.elevations.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.width, self.height

    def __eq__(self, other):
        if not isinstance(other, DemGrid):
            return NotImplemented
        return (
            self.world_scale_m == other.world_scale_m
            and self.elevations.shape == other.elevations.shape
            and bool(np.array_equal(self.elevations, other.elevations))
        )

    __hash__ = None

    def z(self, x: int, y: int) -> float:
        return float(self.elevations[y, x])

    def in_bounds(self, x, y) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def digest(self) -> str:
        """SHA-256 over shape, scale and raw elevation bytes."""
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}@{self.world_scale_m!r}".encode())
        h.update(np.ascontiguousarray(self.elevations, dtype="<f8").tobytes())
        return h.hexdigest()


def _diamond_square(n_levels: int, roughness: float, rng: np.random.Generator) -> np.ndarray:
    size = 2**n_levels + 1
    h = np.zeros((size, size))
    h[0, 0], h[0, -1], h[-1, 0], h[-1, -1] = rng.uniform(-1.0, 1.0, 4)
    step = size - 1
    amp = 1.0
    while step > 1:
        half = step // 2
        # diamond step: centers of squares
        centers = (
            h[0:-1:step, 0:-1:step] + h[0:-1:step, step::step]
            + h[step::step, 0:-1:step] + h[step::step, step::step]
        ) / 4.0
        h[half::step, half::step] = centers + rng.uniform(-amp, amp, centers.shape)
        # square step: edge midpoints, averaging the in-bounds neighbours
        for y in range(0, size, half):
            x0 = half if (y // half) % 2 == 0 else 0
            for x in range(x0, size, step):
                acc = 0.0
                n = 0
                for dx, dy in ((-half, 0), (half, 0), (0, -half), (0, half)):
                    xx, yy = x + dx, y + dy
                    if 0 <= xx < size and 0 <= yy < size:
                        acc += h[yy, xx]
                        n += 1
                h[y, x] = acc / n + rng.uniform(-amp, amp)
        step = half
        amp *= roughness
    return h


def _max_spike(z: np.ndarray) -> float:
    p = np.pad(z, 1, mode="constant", constant_values=np.nan)
    stack = np.stack([p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]])
    mean = np.nanmean(stack, axis=0)
    return float(np.max(np.abs(z - mean)))


def _rescale(z: np.ndarray) -> np.ndarray:
    lo, hi = z.min(), z.max()
    if hi - lo <= 0:
        return np.zeros_like(z)
    out = (z - lo) * (Z_MAX / (hi - lo))
    # pin the extremes exactly
    out[z == lo] = 0.0
    out[z == hi] = Z_MAX
    return out


def _box_blur(z: np.ndarray) -> np.ndarray:
    p = np.pad(z, 1, mode="edge")
    k = np.array([1.0, 2.0, 1.0])
    rows = k[0] * p[:, :-2] + k[1] * p[:, 1:-1] + k[2] * p[:, 2:]
    return (k[0] * rows[:-2] + k[1] * rows[1:-1] + k[2] * rows[2:]) / 16.0


def generate(seed: int, width: int, height: int, roughness: float = 0.5,
             world_scale_m: float = 100.0) -> DemGrid:
    """Seeded rolling-hill terrain rescaled to ``[0, 2]`` map units.

    Midpoint displacement on the smallest ``2**k + 1`` square covering the
    requested size, cropped, then blurred until no cell deviates from its
    4-neighbour mean by more than 0.5 after rescaling.
    """
    if width < 2 or height < 2:
        raise DimensionError(f"width and height must be >= 2, got {width}x{height}")
    if not (0.0 < roughness <= 1.0):
        raise ValueError(f"roughness must lie in (0, 1], got {roughness}")
    rng = np.random.default_rng(seed)
    levels = max(1, math.ceil(math.log2(max(width, height) - 1))) if max(width, height) > 2 else 1
    z = _diamond_square(levels, roughness, rng)[:height, :width]
    z = _rescale(z)
    for _ in range(64):
        if _max_spike(z) <= SPIKE_LIMIT:
            break
        z = _rescale(_box_blur(z))
    return DemGrid(z, world_scale_m)


def downscale(dem: DemGrid, factor: int) -> DemGrid:
    """Block-mean pooling by an integer ``factor``; the cell size grows by ``factor``."""
    if int(factor) != factor or factor < 2:
        raise ValueError(f"factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    if dem.width % factor or dem.height % factor:
        raise DimensionError(
            f"{dem.width}x{dem.height} grid is not divisible by factor {factor}")
    z = dem.elevations.reshape(dem.height // factor, factor, dem.width // factor, factor)
    return DemGrid(z.mean(axis=(1, 3)), dem.world_scale_m * factor)


def elevation_at(dem: DemGrid, x: float, y: float) -> float:
    """Bilinear interpolation of the elevation at fractional map coordinates."""
    if not (0.0 <= x <= dem.width - 1 and 0.0 <= y <= dem.height - 1):
        raise ValueError(f"({x}, {y}) lies outside the {dem.width}x{dem.height} grid")
    x0 = min(int(math.floor(x)), dem.width - 2)
    y0 = min(int(math.floor(y)), dem.height - 2)
    fx = x - x0
    fy = y - y0
    z = dem.elevations
    if fx == 0.0 and fy == 0.0:
        return float(z[y0, x0])
    top = z[y0, x0] * (1.0 - fx) + z[y0, x0 + 1] * fx
    bottom = z[y0 + 1, x0] * (1.0 - fx) + z[y0 + 1, x0 + 1] * fx
    return float(top * (1.0 - fy) + bottom * fy)


def elevations_at(dem: DemGrid, xs, ys) -> np.ndarray:
    """Vectorised :func:`elevation_at`."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if np.any((xs < 0) | (xs > dem.width - 1) | (ys < 0) | (ys > dem.height - 1)):
        raise ValueError("coordinates outside the grid")
    x0 = np.minimum(np.floor(xs).astype(np.intp), dem.width - 2)
    y0 = np.minimum(np.floor(ys).astype(np.intp), dem.height - 2)
    fx = xs - x0
    fy = ys - y0
    z = dem.elevations
    top = z[y0, x0] * (1.0 - fx) + z[y0, x0 + 1] * fx
    bottom = z[y0 + 1, x0] * (1.0 - fx) + z[y0 + 1, x0 + 1] * fx
    out = top * (1.0 - fy) + bottom * fy
    # exact node values where both fractions vanish
    node = (fx == 0.0) & (fy == 0.0)
    out[node] = z[y0[node], x0[node]]
    return out


def save(dem: DemGrid, path) -> None:
    lines = [f"DEM2 {dem.width} {dem.height} {dem.world_scale_m!r}"]
    for row in dem.elevations:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> DemGrid:
    text = Path(path).read_text()
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise DemFormatError(f"{path}: empty file")
    header = rows[0].split()
    if len(header) != 4 or header[0] != "DEM2":
        raise DemFormatError(f"{path}: malformed header {rows[0]!r}")
    try:
        width, height = int(header[1]), int(header[2])
        scale = float(header[3])
    except ValueError as exc:
        raise DemFormatError(f"{path}: malformed header {rows[0]!r}") from exc
    if len(rows) - 1 != height:
        raise DemFormatError(f"{path}: header declares {height} rows, found {len(rows) - 1}")
    z = np.empty((height, width))
    for i, line in enumerate(rows[1:]):
        cells = line.split()
        if len(cells) != width:
            raise DemFormatError(f"{path}: row {i} has {len(cells)} values, expected {width}")
        try:
            z[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise DemFormatError(f"{path}: non-numeric value in row {i}") from exc
    try:
        return DemGrid(z, scale)
    except ValueError as exc:
        raise DemFormatError(f"{path}: {exc}") from exc
