"""Trajectory evaluation: absolute/relative pose error and closure error.

APE aligns the estimate to the reference with a closed-form rigid fit
(no scale) before computing RMS errors; RPE measures drift over 1 m
reference segments, translation as a percentage of segment length and
rotation in degrees per meter.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .dataset import Trajectory
from .errors import NoOverlap
from .manifold import rotation_angle

ASSOCIATION_TOL = 0.05  # s
RPE_SEGMENT_LENGTH = 1.0  # m


@dataclass
class EvaluationResult:
    ape_trans_rmse_m: float
    ape_rot_rmse_deg: float
    rpe_trans_percent: float
    rpe_rot_deg_per_m: float
    closure_horizontal_m: float
    closure_vertical_m: float
    closure_valid: bool
    n_associated: int

    def to_dict(self) -> dict:
        return asdict(self)


def associate(est: Trajectory, ref: Trajectory, tol: float = ASSOCIATION_TOL):
    """Pair estimate poses with the nearest-in-time reference poses."""
    if len(est) == 0 or len(ref) == 0:
        raise NoOverlap("empty trajectory")
    ref_times = ref.timestamps
    idx = np.searchsorted(ref_times, est.timestamps)
    pairs = []
    for i, t in enumerate(est.timestamps):
        candidates = [j for j in (idx[i] - 1, idx[i]) if 0 <= j < len(ref_times)]
        if not candidates:
            continue
        j = min(candidates, key=lambda j: abs(ref_times[j] - t))
        if abs(ref_times[j] - t) <= tol:
            pairs.append((i, j))
    if not pairs:
        raise NoOverlap("no timestamps associate within tolerance")
    return pairs


def rigid_align(src: np.ndarray, dst: np.ndarray):
    """Closed-form rigid fit (rotation + translation, no scale) of src onto dst."""
    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    H = (src - mu_src).T @ (dst - mu_dst)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    rot = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    trans = mu_dst - rot @ mu_src
    return rot, trans


def closure_error(traj: Trajectory):
    """First-to-last position difference, split horizontal / vertical."""
    if len(traj) == 0:
        return 0.0, 0.0
    delta = traj.poses[-1].translation - traj.poses[0].translation
    return float(np.linalg.norm(delta[:2])), float(abs(delta[2]))


def evaluate(est: Trajectory, ref: Trajectory,
             closed_loop: bool = False) -> EvaluationResult:
    pairs = associate(est, ref)
    est_pos = np.array([est.poses[i].translation for i, _ in pairs])
    ref_pos = np.array([ref.poses[j].translation for _, j in pairs])

    rot_a, trans_a = rigid_align(est_pos, ref_pos)
    aligned_pos = est_pos @ rot_a.T + trans_a
    ape_trans = float(np.sqrt(np.mean(np.sum((aligned_pos - ref_pos) ** 2,
                                             axis=1))))

    rot_errors = []
    for i, j in pairs:
        rot_est = rot_a @ est.poses[i].rotation
        rot_errors.append(rotation_angle(ref.poses[j].rotation.T @ rot_est))
    ape_rot = float(np.rad2deg(np.sqrt(np.mean(np.square(rot_errors)))))

    rpe_trans, rpe_rot = _relative_errors(est, ref, pairs)
    hor, ver = closure_error(est)

    return EvaluationResult(
        ape_trans_rmse_m=ape_trans,
        ape_rot_rmse_deg=ape_rot,
        rpe_trans_percent=rpe_trans,
        rpe_rot_deg_per_m=rpe_rot,
        closure_horizontal_m=hor,
        closure_vertical_m=ver,
        closure_valid=closed_loop,
        n_associated=len(pairs),
    )


def _relative_errors(est: Trajectory, ref: Trajectory, pairs,
                     segment: float = RPE_SEGMENT_LENGTH):
    ref_pos = np.array([ref.poses[j].translation for _, j in pairs])
    if len(ref_pos) < 2:
        return 0.0, 0.0
    steps = np.linalg.norm(np.diff(ref_pos, axis=0), axis=1)
    arclen = np.concatenate([[0.0], np.cumsum(steps)])

    trans_sq, rot_sq = [], []
    end = 0
    for start in range(len(pairs)):
        target = arclen[start] + segment
        while end < len(pairs) and arclen[end] < target:
            end += 1
        if end >= len(pairs):
            break
        seg_len = arclen[end] - arclen[start]
        if seg_len <= 1e-9:
            continue
        i0, j0 = pairs[start]
        i1, j1 = pairs[end]
        rel_ref = ref.poses[j0].inverse() @ ref.poses[j1]
        rel_est = est.poses[i0].inverse() @ est.poses[i1]
        err = rel_ref.inverse() @ rel_est
        trans_sq.append((np.linalg.norm(err.translation) / seg_len * 100.0) ** 2)
        rot_sq.append((np.rad2deg(rotation_angle(err.rotation)) / seg_len) ** 2)
    if not trans_sq:
        return 0.0, 0.0
    return (float(np.sqrt(np.mean(trans_sq))),
            float(np.sqrt(np.mean(rot_sq))))
