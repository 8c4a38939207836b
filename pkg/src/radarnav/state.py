"""Estimator state and its 24-DOF error-state plus/minus operators.

The error vector is ordered
    [position, velocity, attitude, accel bias, gyro bias,
     radar-IMU rotation, radar-IMU lever arm, gravity]
with rotation blocks living in the tangent space of their matrices.

Both rotation blocks use right-multiplicative increments, so that
boxminus(boxplus(x, dx), x) == dx holds exactly for rotation increments
below pi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifold import RigidTransform, so3_exp, so3_log

STATE_DIM = 24

POS = slice(0, 3)
VEL = slice(3, 6)
ROT = slice(6, 9)
ACC_BIAS = slice(9, 12)
GYRO_BIAS = slice(12, 15)
EXT_ROT = slice(15, 18)
EXT_TRANS = slice(18, 21)
GRAVITY = slice(21, 24)


def _vec3(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(3).copy()


@dataclass
class NavState:
    """Nominal navigation state (IMU-centric, global frame at startup)."""

    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ext_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    ext_trans: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        self.pos = _vec3(self.pos)
        self.vel = _vec3(self.vel)
        self.rot = np.asarray(self.rot, dtype=float).copy()
        self.accel_bias = _vec3(self.accel_bias)
        self.gyro_bias = _vec3(self.gyro_bias)
        self.ext_rot = np.asarray(self.ext_rot, dtype=float).copy()
        self.ext_trans = _vec3(self.ext_trans)
        self.gravity = _vec3(self.gravity)

    def copy(self) -> "NavState":
        return NavState(self.pos, self.vel, self.rot, self.accel_bias,
                        self.gyro_bias, self.ext_rot, self.ext_trans,
                        self.gravity)

    def imu_pose(self) -> RigidTransform:
        return RigidTransform(self.rot.copy(), self.pos.copy())

    def extrinsics(self) -> RigidTransform:
        return RigidTransform(self.ext_rot.copy(), self.ext_trans.copy())

    def radar_pose(self) -> RigidTransform:
        """Global-from-radar transform (IMU pose composed with extrinsics)."""
        return self.imu_pose() @ self.extrinsics()


def boxplus(state: NavState, delta) -> NavState:
    """Apply a 24-vector error to a state; rotations via R @ exp(dtheta)."""
    delta = np.asarray(delta, dtype=float).reshape(STATE_DIM)
    return NavState(
        pos=state.pos + delta[POS],
        vel=state.vel + delta[VEL],
        rot=state.rot @ so3_exp(delta[ROT]),
        accel_bias=state.accel_bias + delta[ACC_BIAS],
        gyro_bias=state.gyro_bias + delta[GYRO_BIAS],
        ext_rot=state.ext_rot @ so3_exp(delta[EXT_ROT]),
        ext_trans=state.ext_trans + delta[EXT_TRANS],
        gravity=state.gravity + delta[GRAVITY],
    )


def boxminus(state_a: NavState, state_b: NavState) -> np.ndarray:
    """24-vector difference a (-) b; inverse of boxplus in its first argument."""
    delta = np.zeros(STATE_DIM)
    delta[POS] = state_a.pos - state_b.pos
    delta[VEL] = state_a.vel - state_b.vel
    delta[ROT] = so3_log(state_b.rot.T @ state_a.rot)
    delta[ACC_BIAS] = state_a.accel_bias - state_b.accel_bias
    delta[GYRO_BIAS] = state_a.gyro_bias - state_b.gyro_bias
    delta[EXT_ROT] = so3_log(state_b.ext_rot.T @ state_a.ext_rot)
    delta[EXT_TRANS] = state_a.ext_trans - state_b.ext_trans
    delta[GRAVITY] = state_a.gravity - state_b.gravity
    return delta
