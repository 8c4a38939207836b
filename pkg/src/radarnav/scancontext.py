"""Polar-grid place-recognition descriptors over radar keyframe scans.

A descriptor is an R x S matrix over (range ring, azimuth sector) bins in
the sensor's horizontal plane; each cell holds the maximum point height in
the bin (0 marks empty, heights below the sensor plane count as 0). The
per-ring occupancy ratio forms a compact ring key used to shortlist
candidates before the full, shift-searched column-cosine distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import RadarScan

DEFAULT_RINGS = 20
DEFAULT_SECTORS = 60


@dataclass
class ScanContextDescriptor:
    cells: np.ndarray  # (rings, sectors) max height per bin, 0 = empty
    ring_key: np.ndarray  # (rings,) occupied-sector fraction per ring

    @property
    def shape(self):
        return self.cells.shape


def make_descriptor(scan: RadarScan, max_range: float,
                    n_rings: int = DEFAULT_RINGS,
                    n_sectors: int = DEFAULT_SECTORS) -> ScanContextDescriptor:
    if len(scan) == 0:
        raise ValueError("cannot build a descriptor from an empty scan")
    xy = scan.positions[:, :2]
    ranges = np.linalg.norm(xy, axis=1)
    keep = (ranges > 1e-9) & (ranges < max_range)
    cells = np.zeros((n_rings, n_sectors))
    if np.any(keep):
        ranges = ranges[keep]
        azimuth = np.arctan2(xy[keep, 1], xy[keep, 0])  # [-pi, pi)
        heights = np.maximum(scan.positions[keep, 2], 0.0)
        ring = np.minimum((ranges / max_range * n_rings).astype(int), n_rings - 1)
        sector = ((azimuth + np.pi) / (2.0 * np.pi) * n_sectors).astype(int)
        sector = np.clip(sector, 0, n_sectors - 1)
        np.maximum.at(cells, (ring, sector), heights)
    ring_key = (cells > 0.0).mean(axis=1)
    return ScanContextDescriptor(cells, ring_key)


def descriptor_distance(a: ScanContextDescriptor, b: ScanContextDescriptor):
    """Minimum mean column-cosine distance over circular sector shifts.

    Columns occupied in only one of the two descriptors count as fully
    mismatched (distance 1); columns empty in both are skipped. Sparse radar
    descriptors otherwise produce spuriously small distances from a few
    accidentally overlapping columns.

    Returns (distance in [0, 1], minimizing shift). The shift is the number
    of sectors b must be rolled to best align with a, usable as a yaw prior.
    """
    if a.shape != b.shape:
        raise ValueError("descriptor dimensions differ")
    cells_a, cells_b = a.cells, b.cells
    n_sectors = cells_a.shape[1]
    norm_a = np.linalg.norm(cells_a, axis=0)
    norm_b = np.linalg.norm(cells_b, axis=0)

    best_dist, best_shift = 1.0, 0
    for shift in range(n_sectors):
        rolled = np.roll(cells_b, shift, axis=1)
        rolled_norm = np.roll(norm_b, shift)
        both = (norm_a > 0.0) & (rolled_norm > 0.0)
        either = (norm_a > 0.0) | (rolled_norm > 0.0)
        n_either = int(np.count_nonzero(either))
        if n_either == 0:
            continue
        cos = np.einsum("rs,rs->s", cells_a, rolled)[both]
        cos = cos / (norm_a[both] * rolled_norm[both])
        dist = float((np.sum(1.0 - cos)
                      + (n_either - int(np.count_nonzero(both)))) / n_either)
        if dist < best_dist:
            best_dist, best_shift = dist, shift
    return best_dist, best_shift


@dataclass
class KeyframeDescriptorDatabase:
    """Ring-key shortlist plus full-distance verification over keyframes."""

    threshold: float = 0.25
    min_gap: int = 20  # keyframe ids this close to the query are excluded
    shortlist: int = 10
    _ids: list = field(default_factory=list)
    _descriptors: list = field(default_factory=list)
    _ring_keys: list = field(default_factory=list)

    def add(self, keyframe_id: int, descriptor: ScanContextDescriptor):
        self._ids.append(keyframe_id)
        self._descriptors.append(descriptor)
        self._ring_keys.append(descriptor.ring_key)

    def __len__(self):
        return len(self._ids)

    def detect_loop(self, query: ScanContextDescriptor, query_id: int):
        """Best prior keyframe under the distance threshold, or None.

        Returns (keyframe id, yaw prior in radians) on success.
        """
        eligible = [i for i, kid in enumerate(self._ids)
                    if abs(query_id - kid) >= self.min_gap]
        if not eligible:
            return None
        keys = np.asarray([self._ring_keys[i] for i in eligible])
        ring_dist = np.linalg.norm(keys - query.ring_key, axis=1)
        order = np.argsort(ring_dist, kind="stable")[: self.shortlist]

        best = None
        for j in order:
            i = eligible[int(j)]
            dist, shift = descriptor_distance(query, self._descriptors[i])
            if dist < self.threshold and (best is None or dist < best[0]):
                best = (dist, self._ids[i], shift)
        if best is None:
            return None
        _, keyframe_id, shift = best
        n_sectors = query.shape[1]
        yaw = 2.0 * np.pi * shift / n_sectors
        if yaw > np.pi:
            yaw -= 2.0 * np.pi
        return keyframe_id, yaw
