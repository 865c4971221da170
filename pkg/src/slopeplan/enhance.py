"""Lift a coarse-grid path onto a finer map and smooth it with cubic splines."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from .cost import GridPath, PathError
from .terrain import DemGrid, elevations_at

DEFAULT_SAMPLES = 8


def upscale_path(path: GridPath, factor: int, highres: DemGrid) -> GridPath:
    """Scale x and y by ``factor`` and resample z from ``highres``."""
    if factor < 1 or int(factor) != factor:
        raise ValueError("factor must be a positive integer")
    return GridPath.on_surface(highres, path.xy * factor)


def _direction_changes(d0: np.ndarray, d1: np.ndarray) -> bool:
    cross = d0[0] * d1[1] - d0[1] * d1[0]
    dot = d0[0] * d1[0] + d0[1] * d1[1]
    scale = np.hypot(*d0) * np.hypot(*d1)
    return abs(cross) > 1e-12 * scale or dot <= 0


def extract_turning_points(path: GridPath) -> np.ndarray:
    """Endpoints plus every vertex where the 2D heading or the sign of dz changes.

    Returns an ``(n, 3)`` array of knots.
    """
    pts = path.points
    if len(pts) <= 2:
        return pts.copy()
    seg = np.diff(pts, axis=0)
    dz_sign = np.sign(seg[:, 2])
    keep = [0]
    for i in range(1, len(pts) - 1):
        if dz_sign[i - 1] != dz_sign[i] or _direction_changes(seg[i - 1, :2], seg[i, :2]):
            keep.append(i)
    keep.append(len(pts) - 1)
    return pts[keep].copy()


def spline_through(points, samples_per_segment: int = DEFAULT_SAMPLES,
                   highres: DemGrid | None = None) -> GridPath:
    """Natural cubic spline through the knots' x/y, parameterised by chord length.

    Each knot interval is sampled ``samples_per_segment`` times; knots are
    reproduced exactly, samples are clamped to the map and z is taken from
    ``highres``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 2:
        raise PathError("spline interpolation needs at least 2 points")
    if highres is None:
        raise ValueError("a map is required to sample elevations")
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    xy = pts[:, :2]
    step = np.hypot(*np.diff(xy, axis=0).T)
    keep = np.concatenate([[True], step > 0])
    xy = xy[keep]
    if len(xy) < 2:
        raise PathError("spline knots collapse to a single point")
    t = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
    spline = CubicSpline(t, xy, axis=0, bc_type="natural")
    frac = np.arange(samples_per_segment) / samples_per_segment
    ts = (t[:-1, None] + frac[None, :] * np.diff(t)[:, None]).ravel()
    ts = np.append(ts, t[-1])
    out = spline(ts)
    out[::samples_per_segment] = xy
    np.clip(out[:, 0], 0.0, highres.width - 1, out=out[:, 0])
    np.clip(out[:, 1], 0.0, highres.height - 1, out=out[:, 1])
    distinct = np.concatenate([[True], np.any(out[1:] != out[:-1], axis=1)])
    out = out[distinct]
    z = elevations_at(highres, out[:, 0], out[:, 1])
    return GridPath(np.column_stack([out, z]))


def enhance_lifted(path: GridPath, highres: DemGrid,
                   samples_per_segment: int = DEFAULT_SAMPLES) -> GridPath:
    """Turning-point extraction and spline reconnection of an already lifted path."""
    if len(path) < 2:
        raise PathError("cannot enhance a path with fewer than 2 points")
    return spline_through(extract_turning_points(path), samples_per_segment, highres)


def enhance(path: GridPath, factor: int, highres: DemGrid,
            samples_per_segment: int = DEFAULT_SAMPLES) -> GridPath:
    """Upscale, extract turning points, reconnect with a cubic spline."""
    return enhance_lifted(upscale_path(path, factor, highres), highres, samples_per_segment)


def turn_angles(xy) -> np.ndarray:
    """Absolute heading change in radians at every interior vertex."""
    xy = np.asarray(xy, dtype=np.float64)
    if len(xy) < 3:
        return np.zeros(0)
    d = np.diff(xy, axis=0)
    h = np.arctan2(d[:, 1], d[:, 0])
    turn = np.diff(h)
    return np.abs((turn + np.pi) % (2 * np.pi) - np.pi)


def length_2d(xy) -> float:
    xy = np.asarray(xy, dtype=np.float64)
    return float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))
