"""Single-scan ego-velocity estimation from Doppler measurements.

Each detection constrains the platform velocity along its bearing:
    doppler ~= bearing . velocity
Moving objects and multipath ghosts violate the model, so the weighted
least-squares fit is robustified by graduated non-convexity: starting from
an all-inlier fit, residual-based weights are annealed while the control
parameter mu shrinks by a fixed factor of 1.4 per round until mu < 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, InsufficientPoints
from .types import RadarScan

MU_DIVISOR = 1.4
MIN_NORMAL_EIGENVALUE = 1e-6
COVARIANCE_FLOOR = 1e-4  # m/s, 1-sigma floor on the velocity covariance


@dataclass
class GncParams:
    sigma_doppler: float = 0.05  # m/s, 1-sigma Doppler accuracy
    max_iterations: int = 100
    mu_divisor: float = MU_DIVISOR

    @property
    def inlier_cutoff(self) -> float:
        """Residual magnitude separating static from moving points (c-bar)."""
        return 2.0 * self.sigma_doppler


@dataclass
class EgoVelocityEstimate:
    velocity: np.ndarray  # (3,) m/s, radar frame
    covariance: np.ndarray  # (3, 3) (m/s)^2
    inlier_mask: np.ndarray  # (n,) bool, residual^2 < cutoff^2
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0


def predict_doppler(position, velocity) -> float:
    """Doppler reading of a static point at `position` for ego velocity `velocity`."""
    position = np.asarray(position, dtype=float)
    norm = np.linalg.norm(position)
    if norm <= 0.0:
        raise ValueError("point at the sensor origin has no bearing")
    return float(position @ np.asarray(velocity, dtype=float) / norm)


def _bearings(positions: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(positions, axis=1)
    if np.any(norms <= 0.0):
        raise ValueError("zero-range point in scan")
    return positions / norms[:, None]


def weighted_lsq_velocity(positions, doppler, weights):
    """Weighted linear fit of the ego velocity.

    Returns the minimizer of sum_i w_i (doppler_i - bearing_i . v)^2 together
    with the weighted normal matrix sum_i w_i bearing_i bearing_i^T.
    """
    bearings = _bearings(np.asarray(positions, dtype=float).reshape(-1, 3))
    doppler = np.asarray(doppler, dtype=float)
    weights = np.asarray(weights, dtype=float)
    wb = bearings * weights[:, None]
    normal = wb.T @ bearings
    if np.linalg.eigvalsh(normal)[0] < MIN_NORMAL_EIGENVALUE:
        raise DegenerateGeometry(
            "bearing directions are (near) coplanar; velocity unobservable"
        )
    velocity = np.linalg.solve(normal, wb.T @ doppler)
    return velocity, normal


def estimate_ego_velocity_gnc(scan: RadarScan, params: GncParams) -> EgoVelocityEstimate:
    """Robust ego-velocity via graduated non-convexity.

    Alternates (1) weighted least squares, (2) weight update
    w = (mu c^2 / (r^2 + mu c^2))^2, (3) mu <- mu / 1.4, from all-ones
    weights, until mu < 1 or the iteration budget runs out.
    """
    n = len(scan)
    if n < 3:
        raise InsufficientPoints(f"need >= 3 points for ego velocity, got {n}")
    positions = scan.positions
    doppler = scan.doppler
    bearings = _bearings(positions)
    cutoff_sq = params.inlier_cutoff ** 2

    weights = np.ones(n)
    velocity, normal = weighted_lsq_velocity(positions, doppler, weights)
    residuals = doppler - bearings @ velocity
    mu = 4.0 * float(np.max(residuals**2)) / cutoff_sq

    iterations = 0
    while mu >= 1.0 and iterations < params.max_iterations:
        weights = (mu * cutoff_sq / (residuals**2 + mu * cutoff_sq)) ** 2
        velocity, normal = weighted_lsq_velocity(positions, doppler, weights)
        residuals = doppler - bearings @ velocity
        mu /= params.mu_divisor
        iterations += 1

    covariance = params.sigma_doppler**2 * np.linalg.inv(normal)
    covariance = _floor_covariance(covariance)
    return EgoVelocityEstimate(
        velocity=velocity,
        covariance=covariance,
        inlier_mask=residuals**2 < cutoff_sq,
        weights=weights,
        iterations=iterations,
    )


def _floor_covariance(cov: np.ndarray) -> np.ndarray:
    """Clamp eigenvalues from below; guards against overconfident updates."""
    eigvals, eigvecs = np.linalg.eigh(0.5 * (cov + cov.T))
    eigvals = np.maximum(eigvals, COVARIANCE_FLOOR**2)
    return (eigvecs * eigvals) @ eigvecs.T
