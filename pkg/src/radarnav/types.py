"""Sensor sample containers used across modules.

Radar scans are stored as column arrays rather than per-point objects: the
estimator touches every point of every scan and object-per-point is far too
slow in Python.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RadarPoint:
    """Single detection: position in the radar frame, Doppler speed, intensity."""

    position: np.ndarray
    doppler: float
    intensity: float


@dataclass
class RadarScan:
    """One radar frame: n detections taken at a common timestamp."""

    timestamp: float
    positions: np.ndarray  # (n, 3) meters, radar frame
    doppler: np.ndarray  # (n,) m/s
    intensity: np.ndarray  # (n,) arbitrary units

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.doppler = np.asarray(self.doppler, dtype=float).reshape(-1)
        self.intensity = np.asarray(self.intensity, dtype=float).reshape(-1)
        n = len(self.positions)
        if len(self.doppler) != n or len(self.intensity) != n:
            raise ValueError("positions, doppler and intensity lengths differ")

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls, timestamp: float = 0.0) -> "RadarScan":
        return cls(timestamp, np.zeros((0, 3)), np.zeros(0), np.zeros(0))

    @classmethod
    def from_points(cls, timestamp: float, points) -> "RadarScan":
        points = list(points)
        if not points:
            return cls.empty(timestamp)
        return cls(
            timestamp,
            np.array([p.position for p in points], dtype=float),
            np.array([p.doppler for p in points], dtype=float),
            np.array([p.intensity for p in points], dtype=float),
        )

    def point(self, i: int) -> RadarPoint:
        return RadarPoint(self.positions[i].copy(), float(self.doppler[i]),
                          float(self.intensity[i]))

    def subset(self, mask) -> "RadarScan":
        mask = np.asarray(mask)
        return RadarScan(
            self.timestamp,
            self.positions[mask],
            self.doppler[mask],
            self.intensity[mask],
        )


@dataclass
class ImuSample:
    """One 6D inertial sample."""

    timestamp: float
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m/s^2
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))  # rad/s

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=float).reshape(3)
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(3)
