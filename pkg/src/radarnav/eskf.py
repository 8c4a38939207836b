"""Error-state iterated EKF: IMU propagation, gated ego-velocity update and
the iterated scan-to-submap point update.

Conventions
-----------
* The 24-dim error state is ordered per `state`: position, velocity,
  attitude, accel bias, gyro bias, radar-IMU rotation, lever arm, gravity.
* Rotation errors are right-multiplicative (see `state.boxplus`), and every
  analytic Jacobian here is taken with respect to exactly that perturbation;
  the test suite pins each one against finite differences of the underlying
  map through boxplus/boxminus.
* States whose covariance rows are exactly zero (e.g. locked extrinsics)
  never receive corrections; propagation and both updates preserve the
  zeros, so locking by zero initial covariance is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .egovel import EgoVelocityEstimate
from .errors import ConfigError, SingularCovariance
from .manifold import batched_skew, skew, so3_exp, so3_right_jacobian
from .state import (ACC_BIAS, EXT_ROT, EXT_TRANS, GRAVITY, GYRO_BIAS, POS,
                    ROT, STATE_DIM, VEL, NavState, boxminus, boxplus)
from .types import ImuSample, RadarScan

# chi-square 3-dof quantile at 0.95; pinned against scipy.stats in the tests
CHI2_GATE_3DOF = 7.814727903251179

MAX_IMU_DT = 0.1
COMBINED_COV_FLOOR = 1e-6  # m^2, eigenvalue floor before inversion


@dataclass
class NoiseParams:
    """Continuous-time IMU noise densities."""

    accel_density: float = 5e-4  # m/s^2/sqrt(Hz)
    gyro_density: float = 5.3e-5  # rad/s/sqrt(Hz)
    accel_bias_walk: float = 7e-5  # m/s^3/sqrt(Hz)
    gyro_bias_walk: float = 1.5e-6  # rad/s^2/sqrt(Hz)

    def validate(self):
        for name in ("accel_density", "gyro_density", "accel_bias_walk",
                     "gyro_bias_walk"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be > 0")


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def propagate(state: NavState, cov: np.ndarray, imu: ImuSample, dt: float,
              noise: NoiseParams):
    """One discrete IMU step of the nominal state and its error covariance."""
    if not 0.0 < dt < MAX_IMU_DT:
        raise ValueError(f"dt={dt} outside (0, {MAX_IMU_DT})")
    accel_body = imu.accel - state.accel_bias
    omega = imu.gyro - state.gyro_bias
    accel_world = state.rot @ accel_body + state.gravity

    new_state = state.copy()
    new_state.pos = state.pos + state.vel * dt
    new_state.vel = state.vel + accel_world * dt
    new_state.rot = state.rot @ so3_exp(omega * dt)

    jac_r = so3_right_jacobian(omega * dt)
    F = np.eye(STATE_DIM)
    F[POS, VEL] = np.eye(3) * dt
    F[VEL, ROT] = -state.rot @ skew(accel_body) * dt
    F[VEL, ACC_BIAS] = -state.rot * dt
    F[VEL, GRAVITY] = np.eye(3) * dt
    F[ROT, ROT] = so3_exp(-omega * dt)
    F[ROT, GYRO_BIAS] = -jac_r * dt

    Fw = np.zeros((STATE_DIM, 12))
    Fw[VEL, 0:3] = -state.rot * dt
    Fw[ROT, 3:6] = -jac_r * dt
    Fw[ACC_BIAS, 6:9] = np.eye(3) * dt
    Fw[GYRO_BIAS, 9:12] = np.eye(3) * dt
    q = np.repeat(
        np.array([noise.accel_density, noise.gyro_density,
                  noise.accel_bias_walk, noise.gyro_bias_walk]) ** 2 / dt, 3)
    new_cov = symmetrize(F @ cov @ F.T + (Fw * q) @ Fw.T)
    return new_state, new_cov


def constant_velocity_predict(state: NavState, cov: np.ndarray, dt: float,
                              vel_noise: float, rot_noise: float):
    """IMU-free prediction: position integrates velocity, attitude holds."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    new_state = state.copy()
    new_state.pos = state.pos + state.vel * dt
    F = np.eye(STATE_DIM)
    F[POS, VEL] = np.eye(3) * dt
    new_cov = F @ cov @ F.T
    new_cov[VEL, VEL] += np.eye(3) * vel_noise**2 * dt
    new_cov[ROT, ROT] += np.eye(3) * rot_noise**2 * dt
    return new_state, symmetrize(new_cov)


# -- ego-velocity update ---------------------------------------------------

def predict_radar_velocity(state: NavState, omega_m) -> np.ndarray:
    """Radar-frame velocity implied by the state (lever arm included)."""
    omega = np.asarray(omega_m, dtype=float) - state.gyro_bias
    return state.ext_rot.T @ (state.rot.T @ state.vel
                              + np.cross(omega, state.ext_trans))


def velocity_jacobian(state: NavState, omega_m) -> np.ndarray:
    """Jacobian of the radar-velocity residual w.r.t. the 24-error state."""
    omega = np.asarray(omega_m, dtype=float) - state.gyro_bias
    ext_rot_t = state.ext_rot.T
    v_body = state.rot.T @ state.vel
    H = np.zeros((3, STATE_DIM))
    H[:, VEL] = ext_rot_t @ state.rot.T
    H[:, ROT] = ext_rot_t @ skew(v_body)
    H[:, GYRO_BIAS] = ext_rot_t @ skew(state.ext_trans)
    H[:, EXT_ROT] = skew(ext_rot_t @ (v_body + np.cross(omega, state.ext_trans)))
    H[:, EXT_TRANS] = ext_rot_t @ skew(omega)
    return H


def update_velocity(state: NavState, cov: np.ndarray,
                    estimate: EgoVelocityEstimate, omega_m):
    """Gated Kalman update with the single-scan ego-velocity measurement.

    Returns (state, cov, accepted); a gate rejection passes the state
    through untouched and is a normal outcome, not an error.
    """
    residual = predict_radar_velocity(state, omega_m) - estimate.velocity
    H = velocity_jacobian(state, omega_m)
    S = H @ cov @ H.T + estimate.covariance
    mahalanobis_sq = float(residual @ np.linalg.solve(S, residual))
    if mahalanobis_sq > CHI2_GATE_3DOF:
        return state, cov, False
    gain = cov @ H.T @ np.linalg.inv(S)
    new_state = boxplus(state, -gain @ residual)
    new_cov = symmetrize((np.eye(STATE_DIM) - gain @ H) @ cov)
    return new_state, new_cov, True


# -- scan-to-submap update -------------------------------------------------

@dataclass
class ScanMatchConfig:
    max_match_distance: float = 2.0  # m, centroid gate
    max_iterations: int = 5
    tol: float = 1e-4  # |dpos| + |drot| per iterate
    neighbor_count: int = 5  # N map neighbors per scan point
    scan_cov_neighbors: int = 5  # in-scan neighborhood for the point covariance
    range_sigma: float = 0.3  # m, fallback isotropic point std


@dataclass
class ScanMatchReport:
    status: str  # "updated" | "no_matches" | "empty_map"
    num_points: int = 0
    num_matches: int = 0
    iterations: int = 0
    increment_norm: float = 0.0
    converged: bool = False


def inv_sqrt_psd(mat: np.ndarray, floor: float = COMBINED_COV_FLOOR) -> np.ndarray:
    """Inverse matrix square root of a PSD matrix, eigenvalues floored."""
    if not np.all(np.isfinite(mat)):
        raise SingularCovariance("non-finite covariance")
    eigvals, eigvecs = np.linalg.eigh(symmetrize(mat))
    eigvals = np.maximum(eigvals, floor)
    return (eigvecs / np.sqrt(eigvals)) @ eigvecs.T


def point_residual(state: NavState, point_radar, scan_cov,
                   neighbor_positions, neighbor_covs):
    """Whitened distance between a scan point and its map neighborhood.

    Returns (residual, H, G) where G is the whitening matrix (inverse square
    root of the combined covariance) and H the 3x24 residual Jacobian.
    """
    point_radar = np.asarray(point_radar, dtype=float).reshape(3)
    neighbor_positions = np.asarray(neighbor_positions, dtype=float).reshape(-1, 3)
    neighbor_covs = np.asarray(neighbor_covs, dtype=float).reshape(-1, 3, 3)
    if len(neighbor_positions) == 0:
        raise ValueError("need at least one neighbor")

    rot_gr = state.rot @ state.ext_rot  # global-from-radar rotation
    centroid = neighbor_positions.mean(axis=0)
    mean_cov = neighbor_covs.mean(axis=0)
    combined = mean_cov + rot_gr @ np.asarray(scan_cov, dtype=float) @ rot_gr.T
    G = inv_sqrt_psd(combined)

    lever = state.ext_rot @ point_radar + state.ext_trans
    point_global = state.rot @ lever + state.pos
    residual = G @ (centroid - point_global)

    H = np.zeros((3, STATE_DIM))
    H[:, POS] = -G
    H[:, ROT] = G @ state.rot @ skew(lever)
    H[:, EXT_ROT] = G @ rot_gr @ skew(point_radar)
    H[:, EXT_TRANS] = -G @ state.rot
    return residual, H, G


def _scan_point_covariances(points: np.ndarray, k: int, range_sigma: float) -> np.ndarray:
    """Per-point spatial covariance from the k nearest in-scan points (self
    included); isotropic fallback when the scan is too small."""
    n = len(points)
    if n < k:
        return np.broadcast_to(np.eye(3) * range_sigma**2, (n, 3, 3)).copy()
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k)
    gathered = points[idx]  # (n, k, 3)
    centered = gathered - gathered.mean(axis=1, keepdims=True)
    return np.einsum("nki,nkj->nij", centered, centered) / k


def _map_point_covariances(submap, indices: np.ndarray, k: int) -> np.ndarray:
    """Covariance of each map point's own k-neighborhood, for the unique
    indices given; returns an (n_unique, 3, 3) array aligned with `indices`."""
    positions = submap.positions[indices]
    _, nn_idx = submap.knn_batch(positions, k)
    gathered = submap.positions[nn_idx]  # (u, m, 3)
    centered = gathered - gathered.mean(axis=1, keepdims=True)
    return np.einsum("uki,ukj->uij", centered, centered) / nn_idx.shape[1]


def _batched_inv_sqrt(mats: np.ndarray, floor: float = COMBINED_COV_FLOOR) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(mats)
    eigvals = np.maximum(eigvals, floor)
    return np.einsum("nij,nj,nkj->nik", eigvecs, 1.0 / np.sqrt(eigvals), eigvecs)


def _active_dims(cov: np.ndarray) -> np.ndarray:
    return cov.diagonal() > 0.0


def update_scan_to_submap(state: NavState, cov: np.ndarray, scan: RadarScan,
                          submap, config: ScanMatchConfig):
    """Iterated MAP update against the submap.

    Re-matches the scan each iterate, solves the prior-constrained linear
    problem in information form, and applies the manifold-aware increment
    until it falls below `config.tol` or the iteration budget runs out.
    Returns (state, cov, report); with no usable matches the inputs pass
    through unchanged.
    """
    num_points = len(scan)
    if len(submap) == 0 or num_points == 0:
        return state, cov, ScanMatchReport("empty_map", num_points=num_points)

    scan_covs = _scan_point_covariances(
        scan.positions, config.scan_cov_neighbors, config.range_sigma)

    prior_state = state
    prior_cov = cov
    active = _active_dims(prior_cov)
    n_active = int(np.count_nonzero(active))
    prior_info = np.linalg.inv(prior_cov[np.ix_(active, active)])

    current = state.copy()
    report = ScanMatchReport("no_matches", num_points=num_points)
    S = None
    # map points never move during one update: memoize their covariances
    cov_cache_idx = np.zeros(0, dtype=np.int64)
    cov_cache = np.zeros((0, 3, 3))

    for iteration in range(config.max_iterations):
        rot_gr = current.rot @ current.ext_rot
        lever = scan.positions @ current.ext_rot.T + current.ext_trans
        points_global = lever @ current.rot.T + current.pos

        dists, idx = submap.knn_batch(points_global, config.neighbor_count)
        neighbor_pts = submap.positions[idx]  # (n, m, 3)
        centroids = neighbor_pts.mean(axis=1)
        ok = np.linalg.norm(centroids - points_global, axis=1) <= config.max_match_distance
        if not np.any(ok):
            break

        unique_idx = np.unique(idx[ok])
        new_idx = np.setdiff1d(unique_idx, cov_cache_idx, assume_unique=True)
        if len(new_idx):
            new_covs = _map_point_covariances(submap, new_idx,
                                              config.neighbor_count)
            order = np.argsort(np.concatenate([cov_cache_idx, new_idx]))
            cov_cache_idx = np.concatenate([cov_cache_idx, new_idx])[order]
            cov_cache = np.concatenate([cov_cache, new_covs])[order]
        lookup = np.searchsorted(cov_cache_idx, idx[ok].reshape(-1))
        match_covs = cov_cache[lookup].reshape(
            -1, idx.shape[1], 3, 3).mean(axis=1)  # (n_ok, 3, 3)

        # combined covariance: map side + rotated scan-point covariance
        scan_side = np.einsum("ij,njk,lk->nil", rot_gr, scan_covs[ok], rot_gr)
        G = _batched_inv_sqrt(match_covs + scan_side)

        diff = centroids[ok] - points_global[ok]
        residuals = np.einsum("nij,nj->ni", G, diff).reshape(-1)

        n_ok = int(np.count_nonzero(ok))
        H = np.zeros((n_ok, 3, STATE_DIM))
        H[:, :, POS] = -G
        skew_lever = batched_skew(lever[ok])
        H[:, :, ROT] = np.einsum("nij,jk,nkl->nil", G,
                                 current.rot, skew_lever)
        skew_pts = batched_skew(scan.positions[ok])
        H[:, :, EXT_ROT] = np.einsum("nij,jk,nkl->nil", G, rot_gr, skew_pts)
        H[:, :, EXT_TRANS] = -np.einsum("nij,jk->nik", G, current.rot)
        H = H.reshape(-1, STATE_DIM)

        dx_prior = boxminus(current, prior_state)
        jac_rot = so3_right_jacobian(dx_prior[ROT])
        jac_ext = so3_right_jacobian(dx_prior[EXT_ROT])
        J_inv = np.eye(STATE_DIM)
        J_inv[ROT, ROT] = jac_rot
        J_inv[EXT_ROT, EXT_ROT] = jac_ext

        # info-form solve on the active dims; per-point noise is identity
        # because the residuals are already whitened by G
        Ha = H[:, active]
        Ji_a = J_inv[np.ix_(active, active)]
        info_prior = Ji_a.T @ prior_info @ Ji_a  # (J^-1 P J^-T)^-1
        S = Ha.T @ Ha + info_prior
        rhs = Ha.T @ residuals + info_prior @ (J_inv @ dx_prior)[active]
        delta_active = -np.linalg.solve(S, rhs)
        delta = np.zeros(STATE_DIM)
        delta[active] = delta_active

        current = boxplus(current, delta)
        increment = float(np.linalg.norm(delta[POS]) + np.linalg.norm(delta[ROT]))
        report = ScanMatchReport("updated", num_points, n_ok, iteration + 1,
                                 increment, increment < config.tol)
        if increment < config.tol:
            break

    if report.status != "updated":
        return state, cov, report

    new_cov = np.zeros((STATE_DIM, STATE_DIM))
    new_cov[np.ix_(active, active)] = symmetrize(np.linalg.inv(S))
    return current, new_cov, report
