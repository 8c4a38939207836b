"""Rotation and rigid-transform algebra shared by the estimator and backend.

Rotations are stored as 3x3 matrices everywhere inside the package;
quaternions appear only at I/O boundaries (trajectory files, calibration
files). All angles are radians, translations meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Small-angle thresholds below which Taylor expansions replace the closed
# forms (avoids catastrophic cancellation in the trig coefficients).
EXP_TAYLOR_EPS = 1e-7
JACOBIAN_TAYLOR_EPS = 1e-5

ROTATION_TOL = 1e-9


def skew(v) -> np.ndarray:
    """Cross-product (hat) matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def batched_skew(vecs) -> np.ndarray:
    """Cross-product matrices of an (n, 3) stack of vectors."""
    vecs = np.asarray(vecs, dtype=float).reshape(-1, 3)
    out = np.zeros((len(vecs), 3, 3))
    out[:, 0, 1] = -vecs[:, 2]
    out[:, 0, 2] = vecs[:, 1]
    out[:, 1, 0] = vecs[:, 2]
    out[:, 1, 2] = -vecs[:, 0]
    out[:, 2, 0] = -vecs[:, 1]
    out[:, 2, 1] = vecs[:, 0]
    return out


def so3_exp(phi) -> np.ndarray:
    """Rodrigues exponential of a rotation vector."""
    phi = np.asarray(phi, dtype=float)
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < EXP_TAYLOR_EPS:
        return np.eye(3) + K + 0.5 * (K @ K)
    s = np.sin(angle) / angle
    c = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + s * K + c * (K @ K)


def so3_log(rot) -> np.ndarray:
    """Principal logarithm of a rotation matrix (norm <= pi).

    Near pi the antisymmetric part degenerates, so the axis is recovered
    from the dominant eigenvector of the symmetric part instead.
    """
    rot = np.asarray(rot, dtype=float)
    cos_angle = np.clip(0.5 * (np.trace(rot) - 1.0), -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    anti = 0.5 * np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    if angle < 1e-7:
        return anti
    if np.pi - angle > 1e-6:
        return anti * (angle / np.sin(angle))
    # Near pi: arccos of the trace is ill-conditioned, so take the axis from
    # the dominant eigenvector of the symmetric part and the angle from the
    # antisymmetric part (|anti| = sin(angle), well conditioned here).
    sym = 0.5 * (rot + rot.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    axis = eigvecs[:, int(np.argmax(eigvals))]
    axis = axis / np.linalg.norm(axis)
    sin_angle = min(float(np.linalg.norm(anti)), 1.0)
    angle = np.pi - np.arcsin(sin_angle)
    if np.dot(axis, anti) < 0.0:
        axis = -axis
    elif np.linalg.norm(anti) < 1e-12:
        # exactly pi: sign is ambiguous, canonicalize on the largest component
        lead = axis[int(np.argmax(np.abs(axis)))]
        if lead < 0.0:
            axis = -axis
    return axis * angle


def so3_right_jacobian(phi) -> np.ndarray:
    """Right Jacobian of SO(3).

    Satisfies so3_log(so3_exp(phi).T @ so3_exp(phi + d)) ~= J(phi) @ d for
    small d. Closed form I - (1-cos a)/a^2 [phi]x + (a-sin a)/a^3 [phi]x^2.
    """
    phi = np.asarray(phi, dtype=float)
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < JACOBIAN_TAYLOR_EPS:
        return np.eye(3) - 0.5 * K + (K @ K) / 6.0
    a2 = angle * angle
    c1 = (1.0 - np.cos(angle)) / a2
    c2 = (angle - np.sin(angle)) / (a2 * angle)
    return np.eye(3) - c1 * K + c2 * (K @ K)


def is_rotation(rot, tol: float = ROTATION_TOL) -> bool:
    rot = np.asarray(rot)
    if rot.shape != (3, 3) or not np.all(np.isfinite(rot)):
        return False
    if np.linalg.norm(rot.T @ rot - np.eye(3)) > tol:
        return False
    return abs(np.linalg.det(rot) - 1.0) <= tol


@dataclass
class RigidTransform:
    """SE(3) element: x_out = rotation @ x_in + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, mat) -> "RigidTransform":
        mat = np.asarray(mat, dtype=float)
        return cls(mat[:3, :3].copy(), mat[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -rot_t @ self.translation)

    def apply(self, points) -> np.ndarray:
        """Transform one (3,) point or a stack of (n, 3) points."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return self.rotation @ points + self.translation
        return points @ self.rotation.T + self.translation

    def copy(self) -> "RigidTransform":
        return RigidTransform(self.rotation.copy(), self.translation.copy())

    def is_valid(self, tol: float = ROTATION_TOL) -> bool:
        return is_rotation(self.rotation, tol) and bool(
            np.all(np.isfinite(self.translation))
        )


def _so3_left_v(phi) -> np.ndarray:
    """V matrix of the SE(3) exponential (integrates translation)."""
    phi = np.asarray(phi, dtype=float)
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < JACOBIAN_TAYLOR_EPS:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    a2 = angle * angle
    c1 = (1.0 - np.cos(angle)) / a2
    c2 = (angle - np.sin(angle)) / (a2 * angle)
    return np.eye(3) + c1 * K + c2 * (K @ K)


def se3_exp(xi) -> RigidTransform:
    """SE(3) exponential of a twist [rho, phi] (translation part first)."""
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[:3], xi[3:]
    return RigidTransform(so3_exp(phi), _so3_left_v(phi) @ rho)


def se3_log(transform: RigidTransform) -> np.ndarray:
    """Inverse of se3_exp; returns [rho, phi]."""
    phi = so3_log(transform.rotation)
    rho = np.linalg.solve(_so3_left_v(phi), transform.translation)
    return np.concatenate([rho, phi])


def se3_adjoint(transform: RigidTransform) -> np.ndarray:
    """Adjoint of SE(3) acting on twists ordered [rho, phi]."""
    adj = np.zeros((6, 6))
    adj[:3, :3] = transform.rotation
    adj[3:, 3:] = transform.rotation
    adj[:3, 3:] = skew(transform.translation) @ transform.rotation
    return adj


def rotation_angle(rot) -> float:
    """Geodesic angle of a rotation matrix, in radians."""
    cos_angle = np.clip(0.5 * (np.trace(np.asarray(rot)) - 1.0), -1.0, 1.0)
    return float(np.arccos(cos_angle))


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
