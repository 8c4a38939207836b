"""Distribution-to-distribution ICP between two radar scans.

Per-point covariances come from each cloud's own 5-point neighborhoods
(eigenvalues regularized so flat neighborhoods stay invertible); Gauss-
Newton then minimizes the Mahalanobis distances of nearest-neighbor pairs
over SE(3). Used to compute loop-constraint transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import NotConverged
from .manifold import RigidTransform, batched_skew, se3_exp

COV_EIG_FLOOR_ABS = 1e-4  # m^2
COV_EIG_FLOOR_REL = 1e-3


@dataclass
class GicpConfig:
    max_iterations: int = 50
    tol: float = 1e-6  # increment norm
    neighbor_count: int = 5
    max_corr_dist: float = 3.0  # m, correspondence gate
    inlier_dist: float = 0.5  # m, fitness gate


@dataclass
class GicpResult:
    transform: RigidTransform  # maps source points onto the target cloud
    information: np.ndarray  # (6, 6) final Gauss-Newton Hessian
    fitness: float  # inlier fraction of source points
    iterations: int = 0
    converged: bool = False


def point_covariances(points: np.ndarray, k: int = 5) -> np.ndarray:
    """Per-point neighborhood covariances with eigenvalue regularization."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if n < k:
        return np.broadcast_to(np.eye(3) * COV_EIG_FLOOR_ABS, (n, 3, 3)).copy()
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k)
    gathered = points[idx]
    centered = gathered - gathered.mean(axis=1, keepdims=True)
    covs = np.einsum("nki,nkj->nij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(covs)
    floor = np.maximum(COV_EIG_FLOOR_ABS, COV_EIG_FLOOR_REL * eigvals[:, -1:])
    eigvals = np.maximum(eigvals, floor)
    return np.einsum("nij,nj,nkj->nik", eigvecs, eigvals, eigvecs)


def relative_pose_gicp(source: np.ndarray, target: np.ndarray,
                       init: RigidTransform, config: GicpConfig | None = None) -> GicpResult:
    """Estimate T with target ~= T @ source.

    Raises NotConverged (carrying the last iterate) when the iteration
    budget is exhausted before the increment drops below tol.
    """
    config = config or GicpConfig()
    source = np.asarray(source, dtype=float).reshape(-1, 3)
    target = np.asarray(target, dtype=float).reshape(-1, 3)
    if len(source) == 0 or len(target) == 0:
        raise ValueError("both clouds must be non-empty")

    cov_src = point_covariances(source, config.neighbor_count)
    cov_tgt = point_covariances(target, config.neighbor_count)
    tree = cKDTree(target)

    transform = init.copy()
    information = np.zeros((6, 6))
    result = GicpResult(transform, information, 0.0)

    for iteration in range(config.max_iterations):
        moved = transform.apply(source)
        dists, idx = tree.query(moved)
        ok = dists <= config.max_corr_dist
        if np.count_nonzero(ok) < 10:  # too few pairs to constrain SE(3)
            raise NotConverged("too few correspondences under the gate",
                               result)

        diff = target[idx[ok]] - moved[ok]
        rot = transform.rotation
        combined = cov_tgt[idx[ok]] + np.einsum(
            "ij,njk,lk->nil", rot, cov_src[ok], rot)
        weights = np.linalg.inv(combined)

        # residual r = b - (Exp(xi) T a); d r/d rho = -I, d r/d theta = [Ta]x
        jac = np.zeros((int(np.count_nonzero(ok)), 3, 6))
        jac[:, :, 0:3] = -np.eye(3)
        jac[:, :, 3:6] = batched_skew(moved[ok])

        wj = np.einsum("nij,njk->nik", weights, jac)
        hessian = np.einsum("nji,njk->ik", jac, wj)
        gradient = np.einsum("nji,nj->i", wj, diff)
        try:
            delta = -np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            raise NotConverged("degenerate correspondence geometry", result) \
                from None
        transform = se3_exp(delta) @ transform
        information = hessian

        step = float(np.linalg.norm(delta))
        moved = transform.apply(source)
        dists, _ = tree.query(moved)
        fitness = float(np.mean(dists < config.inlier_dist))
        result = GicpResult(transform, information, fitness, iteration + 1,
                            step < config.tol)
        if step < config.tol:
            return result

    raise NotConverged(
        f"ICP increment above tol after {config.max_iterations} iterations",
        result)
