"""Relaxation filtering of raw radar scans.

Radar scans carry a sizable fraction of multipath/speckle returns. A point
survives only if, among its neighbors within `neighbor_radius`, (a) the
neighbor count exceeds `min_neighbors` and (b) the standard deviation of the
neighbor distances stays below `distance_std_max`. Both rules are evaluated
jointly on the original scan, so the result does not depend on point order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError
from .types import RadarScan


@dataclass
class RelaxationFilterParams:
    neighbor_radius: float = 1.0  # m
    min_neighbors: int = 2  # strict: count must exceed this
    distance_std_max: float = 0.5  # m

    def validate(self):
        if self.neighbor_radius <= 0.0:
            raise ConfigError("neighbor_radius must be > 0")
        if self.min_neighbors < 0:
            raise ConfigError("min_neighbors must be >= 0")
        if self.distance_std_max <= 0.0:
            raise ConfigError("distance_std_max must be > 0")


def relaxation_filter(scan: RadarScan, params: RelaxationFilterParams) -> RadarScan:
    """Drop noise points; keeps point order, never invents points."""
    params.validate()
    n = len(scan)
    if n == 0:
        return scan.subset(np.zeros(0, dtype=bool))

    radius = params.neighbor_radius
    tree = cKDTree(scan.positions)
    pairs = tree.sparse_distance_matrix(tree, radius, output_type="coo_matrix")
    # neighborhoods exclude the point itself; the radius test is strict
    mask = (pairs.row != pairs.col) & (pairs.data < radius)
    row = pairs.row[mask]
    dist = pairs.data[mask]

    counts = np.bincount(row, minlength=n)
    sums = np.bincount(row, weights=dist, minlength=n)
    sums_sq = np.bincount(row, weights=dist * dist, minlength=n)
    keep = counts > params.min_neighbors
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sums / counts
        variance = np.maximum(sums_sq / counts - mean * mean, 0.0)
    keep &= np.where(counts > 0, np.sqrt(variance) < params.distance_std_max,
                     False)
    return scan.subset(keep)
