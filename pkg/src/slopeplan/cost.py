"""Distance, slope and energy models for point pairs and whole paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .terrain import DemGrid, elevations_at

QUARTER_PI = math.pi / 4.0


@dataclass(frozen=True)
class CostModel:
    """Slope-dependent energy parameters.

    ``eta_us``/``eta_ds`` are the up/down-slope energy per meter at the
    normalisation slope of 45 degrees; ``energy_weight`` scales energy against
    distance in the combined objective.
    """

    eta_us: float = 25.0
    eta_ds: float = 0.25
    energy_weight: float = 1.0

    def __post_init__(self):
        if not self.eta_us > 0:
            raise ValueError("eta_us must be > 0")
        if not 0 <= self.eta_ds < 1:
            raise ValueError("eta_ds must lie in [0, 1)")
        if not self.energy_weight >= 0:
            raise ValueError("energy_weight must be >= 0")

    def with_weight(self, w: float) -> CostModel:
        return CostModel(self.eta_us, self.eta_ds, w)


DEFAULT_MODEL = CostModel()


def point_distance(p, q, world_scale_m: float = 1.0) -> float:
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    dz = p[2] - q[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz) * world_scale_m


def slope_angle(p, q) -> float:
    """Non-negative slope angle in radians; pi/2 for a purely vertical pair."""
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    dz = p[2] - q[2]
    if dx == 0 and dy == 0 and dz == 0:
        raise ValueError("slope is undefined for identical points")
    return math.atan2(abs(dz), math.sqrt(dx * dx + dy * dy))


def step_energy(p, q, model: CostModel = DEFAULT_MODEL, world_scale_m: float = 1.0) -> float:
    """Energy to travel from ``p`` to ``q``.

    Climbing costs ``D * (beta / (pi/4)) * eta_us``; level or descending
    travel costs ``D * (1 - (beta / (pi/4)) * eta_ds)``.
    """
    beta = slope_angle(p, q)
    d = point_distance(p, q, world_scale_m)
    if q[2] > p[2]:
        return d * (beta / QUARTER_PI * model.eta_us)
    return d * (1.0 - beta / QUARTER_PI * model.eta_ds)


def step_cost(p, q, model: CostModel = DEFAULT_MODEL, world_scale_m: float = 1.0) -> float:
    """Graph edge weight: distance plus weighted energy."""
    return point_distance(p, q, world_scale_m) + model.energy_weight * step_energy(
        p, q, model, world_scale_m)


class PathError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridPath:
    """Ordered ``(x, y, z)`` points in map units.

    Metrics are cached on first use per ``(model, scale)``.
    """

    points: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if len(pts) < 1:
            raise PathError("a path needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise PathError("path coordinates must be finite")
        if len(pts) > 1 and np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise PathError("consecutive path points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def on_surface(cls, dem: DemGrid, xy) -> GridPath:
        """Build a path whose z values are sampled from ``dem``."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        z = elevations_at(dem, xy[:, 0], xy[:, 1])
        return cls(np.column_stack([xy, z]))

    def check_surface(self, dem: DemGrid) -> None:
        z = elevations_at(dem, self.points[:, 0], self.points[:, 1])
        if not np.array_equal(z, self.points[:, 2]):
            raise PathError("path z values do not lie on the terrain surface")

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, GridPath):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points))

    __hash__ = None

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def start(self) -> tuple:
        return tuple(self.points[0])

    @property
    def end(self) -> tuple:
        return tuple(self.points[-1])

    def cells(self) -> list[tuple[int, int]]:
        return [(int(x), int(y)) for x, y in self.points[:, :2]]

    def reversed(self) -> GridPath:
        return GridPath(self.points[::-1])

    def metrics(self, model: CostModel = DEFAULT_MODEL, world_scale_m: float = 1.0):
        """``(distance_m, energy_u, objective)`` for this path."""
        key = (model, world_scale_m)
        if key not in self._cache:
            d = path_distance(self, world_scale_m)
            e = path_energy(self, model, world_scale_m)
            self._cache[key] = (d, e, d + model.energy_weight * e)
        return self._cache[key]


def _points(path) -> Sequence:
    if isinstance(path, GridPath):
        return path.points.tolist()
    return path


def path_distance(path, world_scale_m: float = 1.0) -> float:
    pts = _points(path)
    total = 0.0
    for i in range(len(pts) - 1):
        total += point_distance(pts[i], pts[i + 1], world_scale_m)
    return total


def path_energy(path, model: CostModel = DEFAULT_MODEL, world_scale_m: float = 1.0) -> float:
    pts = _points(path)
    total = 0.0
    for i in range(len(pts) - 1):
        total += step_energy(pts[i], pts[i + 1], model, world_scale_m)
    return total


def path_objective(path, model: CostModel = DEFAULT_MODEL, world_scale_m: float = 1.0) -> float:
    """Distance plus ``energy_weight`` times energy."""
    return path_distance(path, world_scale_m) + model.energy_weight * path_energy(
        path, model, world_scale_m)
