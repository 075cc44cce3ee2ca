"""Reconstruction-quality and optimization-progress metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist


class EmptyCloudError(ValueError):
    """Raised when a metric receives an empty point cloud it cannot score."""


def _check_cloud(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1, 3)
    if a.shape[0] == 0:
        raise EmptyCloudError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return a


def chamfer_distance(a, b, squared: bool = False) -> float:
    """Symmetric chamfer distance: mean nearest-neighbor distance in both directions.

    Non-squared Euclidean by default; set squared=True for the squared variant.
    """
    a = _check_cloud(a, "cloud A")
    b = _check_cloud(b, "cloud B")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    if squared:
        d_ab = d_ab**2
        d_ba = d_ba**2
    return float(np.mean(d_ab) + np.mean(d_ba))


def chamfer_distance_bruteforce(a, b, squared: bool = False) -> float:
    """O(|A|*|B|) dense-distance-matrix reference; oracle for chamfer_distance."""
    a = _check_cloud(a, "cloud A")
    b = _check_cloud(b, "cloud B")
    d = cdist(a, b)
    if squared:
        d = d**2
    return float(np.mean(d.min(axis=1)) + np.mean(d.min(axis=0)))


@dataclass(frozen=True)
class DepthGridSpec:
    """Top-down orthographic height grid used to compare clouds as depth maps."""

    resolution: int = 64
    x_min: float = -2.0
    x_max: float = 2.0
    y_min: float = -2.0
    y_max: float = 2.0
    ground_height: float = 0.0

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("grid bounds are degenerate")


def rasterize_heights(cloud, grid: DepthGridSpec) -> np.ndarray:
    """Cell value = max point height in cell; empty cells = ground_height."""
    h = np.full((grid.resolution, grid.resolution), grid.ground_height)
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        return h
    ix = np.floor(
        (pts[:, 0] - grid.x_min) / (grid.x_max - grid.x_min) * grid.resolution
    ).astype(int)
    iy = np.floor(
        (pts[:, 1] - grid.y_min) / (grid.y_max - grid.y_min) * grid.resolution
    ).astype(int)
    inside = (ix >= 0) & (ix < grid.resolution) & (iy >= 0) & (iy < grid.resolution)
    np.maximum.at(h, (ix[inside], iy[inside]), pts[inside, 2])
    return h


def depth_mae(a, b, grid: DepthGridSpec) -> float:
    """Mean absolute difference between top-down height maps of two clouds."""
    return float(np.mean(np.abs(rasterize_heights(a, grid) - rasterize_heights(b, grid))))


def simple_regret_curve(y, r_star: float) -> np.ndarray:
    """SR(t) = r_star - max_{tau<=t} y_tau over observations in time order."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] == 0:
        raise ValueError("observation sequence is empty")
    if r_star < y.max():
        warnings.warn(
            f"r_star={r_star} is below the best observation {y.max()}; regret goes negative",
            stacklevel=2,
        )
    return r_star - np.maximum.accumulate(y)
