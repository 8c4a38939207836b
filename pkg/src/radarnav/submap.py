"""Incrementally maintained global-frame point map with exact k-NN queries.

Internally a scipy cKDTree indexes the bulk of the points while recent
insertions sit in a linear pending buffer; queries merge both so results are
always exact. The tree is rebuilt once the buffer grows past a threshold and
whenever points are removed, which mirrors the rebuild-on-imbalance behavior
of incremental k-d trees without hand-rolling one.

A voxel occupancy grid caps density: a point is only admitted while its cell
holds fewer than `max_points_per_voxel` points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .manifold import RigidTransform
from .types import RadarScan


@dataclass
class MapPoint:
    position: np.ndarray  # (3,) m, global frame
    keyframe_id: int = -1


def local_covariance(points):
    """Sample mean and population covariance (normalizer N) of 3D points."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("local_covariance needs at least one point")
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / len(points)
    return mean, cov


class Submap:
    """Voxel-capped point map; single writer, exact nearest-neighbor reads."""

    def __init__(self, voxel_size: float = 0.4, max_points_per_voxel: int = 5,
                 pending_limit: int = 512):
        if voxel_size <= 0.0:
            raise ValueError("voxel_size must be > 0")
        self.voxel_size = float(voxel_size)
        self.max_points_per_voxel = int(max_points_per_voxel)
        self._pending_limit = int(pending_limit)
        self._points = np.zeros((0, 3))
        self._keyframe_ids = np.zeros(0, dtype=np.int64)
        self._voxel_counts: dict[tuple, int] = {}
        self._tree: cKDTree | None = None
        self._indexed = 0  # points [0:_indexed] live in the tree

    def __len__(self) -> int:
        return len(self._points)

    @property
    def positions(self) -> np.ndarray:
        return self._points

    @property
    def keyframe_ids(self) -> np.ndarray:
        return self._keyframe_ids

    # -- insertion ---------------------------------------------------------

    def insert_points(self, points_global, keyframe_id: int = -1) -> int:
        points_global = np.asarray(points_global, dtype=float).reshape(-1, 3)
        if len(points_global) == 0:
            return 0
        keys = np.floor(points_global / self.voxel_size).astype(np.int64)
        accepted = []
        for i, key in enumerate(map(tuple, keys)):
            count = self._voxel_counts.get(key, 0)
            if count < self.max_points_per_voxel:
                self._voxel_counts[key] = count + 1
                accepted.append(i)
        if not accepted:
            return 0
        new_points = points_global[accepted]
        self._points = np.vstack([self._points, new_points])
        self._keyframe_ids = np.concatenate([
            self._keyframe_ids,
            np.full(len(accepted), keyframe_id, dtype=np.int64),
        ])
        if len(self._points) - self._indexed > self._pending_limit:
            self._rebuild()
        return len(accepted)

    def insert_scan(self, scan: RadarScan, pose: RigidTransform,
                    keyframe_id: int = -1) -> int:
        """Transform a scan into the global frame and insert it."""
        return self.insert_points(pose.apply(scan.positions), keyframe_id)

    def _rebuild(self):
        self._tree = cKDTree(self._points) if len(self._points) else None
        self._indexed = len(self._points)

    # -- queries -----------------------------------------------------------

    def knn_batch(self, queries, k: int):
        """Exact k nearest neighbors for a batch of query points.

        Returns (distances, indices), each (q, m) with m = min(k, len(map)),
        sorted ascending per row. Indices address `positions`.
        """
        queries = np.asarray(queries, dtype=float).reshape(-1, 3)
        n = len(self._points)
        m = min(k, n)
        if m == 0 or len(queries) == 0:
            return (np.zeros((len(queries), 0)),
                    np.zeros((len(queries), 0), dtype=np.int64))

        parts_d, parts_i = [], []
        if self._tree is not None and self._indexed > 0:
            kt = min(k, self._indexed)
            d, i = self._tree.query(queries, k=kt)
            if kt == 1:
                d, i = d[:, None], i[:, None]
            parts_d.append(d)
            parts_i.append(i.astype(np.int64))
        pending = self._points[self._indexed:]
        if len(pending):
            d = cdist(queries, pending)
            i = np.broadcast_to(np.arange(self._indexed, n, dtype=np.int64),
                                d.shape)
            if d.shape[1] > m:  # keep only each row's top-m pending candidates
                part = np.argpartition(d, m - 1, axis=1)[:, :m]
                rows = np.arange(len(queries))[:, None]
                d, i = d[rows, part], i[rows, part]
            parts_d.append(d)
            parts_i.append(i)
        dists = np.hstack(parts_d)
        idx = np.hstack(parts_i)
        order = np.argsort(dists, axis=1, kind="stable")[:, :m]
        rows = np.arange(len(queries))[:, None]
        return dists[rows, order], idx[rows, order]

    def knn(self, query, k: int):
        """k exact nearest stored points, ascending; fewer if the map is smaller."""
        if k < 1:
            raise ValueError("k must be >= 1")
        dists, idx = self.knn_batch(np.asarray(query, dtype=float).reshape(1, 3), k)
        return [
            (MapPoint(self._points[j].copy(), int(self._keyframe_ids[j])), float(d))
            for d, j in zip(dists[0], idx[0])
        ]

    # -- maintenance -------------------------------------------------------

    def prune(self, center, radius: float) -> int:
        """Remove points farther than `radius` from `center`."""
        if radius <= 0.0:
            raise ValueError("radius must be > 0")
        if len(self._points) == 0:
            return 0
        center = np.asarray(center, dtype=float).reshape(3)
        keep = np.linalg.norm(self._points - center, axis=1) <= radius
        removed = int(np.count_nonzero(~keep))
        if removed == 0:
            return 0
        dropped = self._points[~keep]
        for key in map(tuple, np.floor(dropped / self.voxel_size).astype(np.int64)):
            count = self._voxel_counts.get(key, 0)
            if count <= 1:
                self._voxel_counts.pop(key, None)
            else:
                self._voxel_counts[key] = count - 1
        self._points = self._points[keep]
        self._keyframe_ids = self._keyframe_ids[keep]
        self._rebuild()
        return removed
