"""Static point map with voxel downsampling and radius neighbourhood statistics."""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError


class NeighborhoodStats(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    count: int


def neighborhood_stats(points) -> NeighborhoodStats:
    pts = np.atleast_2d(points)
    n = pts.shape[0]
    mean = pts.mean(axis=0)
    if n < 2:
        return NeighborhoodStats(mean, np.zeros((3, 3)), n)
    d = pts - mean
    cov = d.T @ d / (n - 1)
    return NeighborhoodStats(mean, 0.5 * (cov + cov.T), n)


class PointMap:
    """World-frame points, at most one per voxel (first inserted wins)."""

    def __init__(self, voxel_size: float = 0.5, radius: float = 1.0, min_neighbors: int = 5):
        if voxel_size <= 0 or radius <= 0:
            raise ConfigError("voxel_size and radius must be positive", "voxel_size")
        if min_neighbors < 1:
            raise ConfigError("min_neighbors must be >= 1", "min_neighbors")
        self.voxel_size = voxel_size
        self.radius = radius
        self.min_neighbors = min_neighbors
        self._voxels = {}
        self._points = []
        self._tree: Optional[cKDTree] = None
        self._array: Optional[np.ndarray] = None

    def __len__(self):
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        if self._array is None:
            self._array = np.array(self._points, dtype=float).reshape(-1, 3)
        return self._array

    def insert(self, points) -> int:
        """Add points; returns how many created new voxels."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("map points must be finite")
        added = 0
        for p, key in zip(pts, map(tuple, np.floor(pts / self.voxel_size).astype(np.int64))):
            if key not in self._voxels:
                self._voxels[key] = len(self._points)
                self._points.append(p)
                added += 1
        if added:
            self._tree = None
            self._array = None
        return added

    def rebuild(self):
        self._tree = cKDTree(self.points) if self._points else None

    def _index(self):
        if self._tree is None and self._points:
            self.rebuild()
        return self._tree

    def radius_search(self, query, radius: Optional[float] = None):
        """Indices of map points within ``radius`` of each query, sorted."""
        radius = self.radius if radius is None else radius
        if radius <= 0:
            raise ConfigError("radius must be positive", "radius")
        q = np.atleast_2d(query)
        tree = self._index()
        if tree is None:
            return [np.zeros(0, dtype=int) for _ in q]
        return [np.array(sorted(ix), dtype=int) for ix in tree.query_ball_point(q, radius)]

    def radius_neighbors(self, query, radius: Optional[float] = None,
                         min_neighbors: Optional[int] = None) -> Optional[NeighborhoodStats]:
        """Centroid and covariance of the neighbours of one query, or None if too few."""
        min_n = self.min_neighbors if min_neighbors is None else min_neighbors
        idx = self.radius_search(np.asarray(query, dtype=float)[None], radius)[0]
        if idx.size < min_n or idx.size == 0:
            return None
        return neighborhood_stats(self.points[idx])

    def export(self, path) -> None:
        np.savetxt(Path(path), self.points, fmt="%.6f")


def brute_force_radius(points, query, radius):
    pts = np.atleast_2d(points)
    return np.flatnonzero(np.linalg.norm(pts - np.asarray(query), axis=1) <= radius)
