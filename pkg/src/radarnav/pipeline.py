"""End-to-end odometry / SLAM orchestration over a dataset.

The frontend is strictly sequential: per radar scan it propagates through
the IMU stream (or a constant-velocity model), filters the scan, estimates
ego velocity, applies the gated velocity update and the iterated
scan-to-submap update, then inserts the static points into the map.
Keyframes feed the loop backend, whose corrections are applied only when
the trajectory is published. Everything is deterministic for a fixed
dataset + config.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import PipelineConfig
from .dataset import Dataset, Trajectory
from .egovel import estimate_ego_velocity_gnc
from .errors import DegenerateGeometry, InsufficientPoints
from .eskf import (NoiseParams, constant_velocity_predict, propagate,
                   update_scan_to_submap, update_velocity)
from .loop_backend import Keyframe, LoopBackend
from .manifold import RigidTransform, rotation_angle
from .preprocess import relaxation_filter
from .state import (ACC_BIAS, EXT_ROT, EXT_TRANS, GRAVITY, GYRO_BIAS, POS,
                    ROT, STATE_DIM, VEL, NavState)
from .submap import Submap
from .types import ImuSample

log = logging.getLogger(__name__)

_TIME_EPS = 1e-9


@dataclass
class StageTimings:
    """Per-scan wall-clock samples for the pipeline stages, seconds."""

    predict: list = field(default_factory=list)
    egovel: list = field(default_factory=list)
    scan_update: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {}
        for name in ("predict", "egovel", "scan_update", "total"):
            values = getattr(self, name)
            if values:
                arr = np.asarray(values)
                out[name] = {
                    "mean_ms": float(arr.mean() * 1e3),
                    "max_ms": float(arr.max() * 1e3),
                    "min_ms": float(arr.min() * 1e3),
                }
            else:
                out[name] = {"mean_ms": 0.0, "max_ms": 0.0, "min_ms": 0.0}
        return out

    def format_table(self) -> str:
        summary = self.summary()
        header = (f"{'stage':>16} {'mean ms':>10} {'max ms':>10} {'min ms':>10}")
        rows = [header]
        labels = {
            "predict": "IMU predict",
            "egovel": "ego-vel update",
            "scan_update": "scan-to-submap",
            "total": "total",
        }
        for key, label in labels.items():
            s = summary[key]
            rows.append(f"{label:>16} {s['mean_ms']:>10.2f} "
                        f"{s['max_ms']:>10.2f} {s['min_ms']:>10.2f}")
        return "\n".join(rows)


@dataclass
class RunStats:
    scans_total: int = 0
    scans_processed: int = 0
    scans_skipped_init: int = 0
    gnc_failures: int = 0
    velocity_accepted: int = 0
    velocity_rejected: int = 0
    scan_updates: int = 0
    scan_no_matches: int = 0
    keyframes: int = 0
    loops_accepted: int = 0


@dataclass
class OdometryResult:
    trajectory: Trajectory
    submap: Submap
    timings: StageTimings
    stats: RunStats
    final_state: NavState | None = None


@dataclass
class SlamResult:
    trajectory: Trajectory  # loop-corrected
    odometry_trajectory: Trajectory
    global_map: np.ndarray  # (n, 3)
    submap: Submap
    timings: StageTimings
    stats: RunStats
    loops: list = field(default_factory=list)


class _LastScansMap:
    """Transient match target over the last k scans' global-frame points."""

    def __init__(self, k: int):
        self._window = deque(maxlen=k)
        self._points = np.zeros((0, 3))
        self._tree = None

    def push(self, points_global: np.ndarray):
        if len(points_global):
            self._window.append(np.asarray(points_global, dtype=float))
        if self._window:
            self._points = np.vstack(list(self._window))
            self._tree = cKDTree(self._points)
        else:
            self._points = np.zeros((0, 3))
            self._tree = None

    def __len__(self):
        return len(self._points)

    @property
    def positions(self):
        return self._points

    def knn_batch(self, queries, k: int):
        queries = np.asarray(queries, dtype=float).reshape(-1, 3)
        m = min(k, len(self._points))
        if m == 0 or len(queries) == 0:
            return (np.zeros((len(queries), 0)),
                    np.zeros((len(queries), 0), dtype=np.int64))
        d, i = self._tree.query(queries, k=m)
        if m == 1:
            d, i = d[:, None], i[:, None]
        return d, i.astype(np.int64)


def _initial_covariance(config: PipelineConfig) -> np.ndarray:
    sig = config.filter.initial_sigma
    cov = np.zeros((STATE_DIM, STATE_DIM))
    for block, value in ((POS, sig.pos), (VEL, sig.vel), (ROT, sig.rot),
                         (ACC_BIAS, sig.accel_bias),
                         (GYRO_BIAS, sig.gyro_bias), (EXT_ROT, sig.ext_rot),
                         (EXT_TRANS, sig.ext_trans), (GRAVITY, sig.gravity)):
        cov[block, block] = np.eye(3) * value**2
    return cov


def _static_initialize(imu: list, config: PipelineConfig,
                       extrinsics: RigidTransform):
    """Static-window init: gyro bias from the mean rate, gravity from the
    mean specific force scaled to the configured magnitude."""
    t0 = imu[0].timestamp
    init_end = t0 + config.filter.init_seconds
    window = [s for s in imu if s.timestamp <= init_end + _TIME_EPS]
    if len(window) < 2:
        window = imu[:2]
    gyro_bias = np.mean([s.gyro for s in window], axis=0)
    mean_accel = np.mean([s.accel for s in window], axis=0)
    norm = float(np.linalg.norm(mean_accel))
    if norm < 1e-6:
        gravity = np.array([0.0, 0.0, -config.filter.gravity_magnitude])
    else:
        gravity = -mean_accel / norm * config.filter.gravity_magnitude
    if not 9.5 <= norm <= 10.1:
        log.warning("static-init specific force %.2f m/s^2 is far from "
                    "gravity; initialization may be poor", norm)
    state = NavState(gyro_bias=gyro_bias, gravity=gravity,
                     ext_rot=extrinsics.rotation,
                     ext_trans=extrinsics.translation)
    return state, init_end


class _ImuPropagator:
    """Zero-order-hold propagation through the sample stream, with a
    linearly interpolated partial step to land exactly on radar times."""

    def __init__(self, imu: list, noise: NoiseParams, start_time: float):
        self.imu = imu
        self.noise = noise
        self.clock = start_time
        self.index = 0
        self.last_gyro = imu[0].gyro if imu else np.zeros(3)
        while (self.index + 1 < len(imu)
               and imu[self.index + 1].timestamp <= start_time + _TIME_EPS):
            self.index += 1

    def advance(self, state, cov, target: float):
        imu = self.imu
        while self.clock < target - _TIME_EPS and self.index < len(imu):
            sample = imu[self.index]
            next_t = (imu[self.index + 1].timestamp
                      if self.index + 1 < len(imu) else target)
            seg_end = min(next_t, target)
            dt = seg_end - self.clock
            if dt > _TIME_EPS:
                if seg_end < next_t - _TIME_EPS and self.index + 1 < len(imu):
                    # partial step: interpolate the bracketing samples
                    frac = (seg_end - sample.timestamp) / max(
                        next_t - sample.timestamp, _TIME_EPS)
                    accel = sample.accel * (1 - frac) + imu[self.index + 1].accel * frac
                    gyro = sample.gyro * (1 - frac) + imu[self.index + 1].gyro * frac
                    u = ImuSample(self.clock, accel, gyro)
                else:
                    u = sample
                state, cov = propagate(state, cov, u, dt, self.noise)
                self.last_gyro = u.gyro
            self.clock = seg_end
            if self.index + 1 < len(imu) and next_t <= target + _TIME_EPS:
                self.index += 1
        self.clock = max(self.clock, target)
        return state, cov


def run_odometry(dataset: Dataset, config: PipelineConfig,
                 _backend_hook=None) -> OdometryResult:
    """Full odometry pass over a dataset; returns trajectory, map, timing."""
    config.validate()
    mode = config.mode
    extrinsics = (config.extrinsics.transform() or dataset.extrinsics
                  or RigidTransform())

    timings = StageTimings()
    stats = RunStats(scans_total=len(dataset.scans))
    submap = Submap(config.submap.voxel_size,
                    config.submap.max_points_per_voxel)
    trajectory_times: list = []
    trajectory_poses: list = []

    if not dataset.scans:
        return OdometryResult(Trajectory(np.zeros(0), []), submap, timings,
                              stats)

    if mode.use_imu:
        if not dataset.imu:
            raise InsufficientPoints("IMU mode requires IMU samples")
        state, start_time = _static_initialize(dataset.imu, config, extrinsics)
        propagator = _ImuPropagator(dataset.imu, config.noise, start_time)
    else:
        state = NavState(
            ext_rot=extrinsics.rotation, ext_trans=extrinsics.translation,
            gravity=np.array([0.0, 0.0, -config.filter.gravity_magnitude]))
        start_time = dataset.scans[0].timestamp
        propagator = None
    cov = _initial_covariance(config)
    clock = start_time

    last_k_map = _LastScansMap(mode.last_k) if (
        mode.scan_match_mode == "last_k_scans") else None
    last_keyframe_pose: RigidTransform | None = None
    keyframe_count = 0

    for scan in dataset.scans:
        t_scan = scan.timestamp
        if t_scan < start_time - _TIME_EPS:
            stats.scans_skipped_init += 1
            continue
        t_begin = time.perf_counter()

        # predict
        if mode.use_imu:
            state, cov = propagator.advance(state, cov, t_scan)
            omega_m = propagator.last_gyro
        else:
            dt = t_scan - clock
            if dt > _TIME_EPS:
                state, cov = constant_velocity_predict(
                    state, cov, dt, config.filter.cvm_vel_noise,
                    config.filter.cvm_rot_noise)
            omega_m = np.zeros(3)
        clock = t_scan
        t_predict = time.perf_counter()

        # ego velocity (includes preprocessing the scan)
        filtered = relaxation_filter(scan, config.preprocess)
        estimate = None
        try:
            estimate = estimate_ego_velocity_gnc(filtered, config.gnc)
        except (InsufficientPoints, DegenerateGeometry) as exc:
            stats.gnc_failures += 1
            log.debug("scan at %.3f: ego velocity failed (%s)", t_scan, exc)
        if estimate is not None and mode.use_velocity_update:
            state, cov, accepted = update_velocity(state, cov, estimate,
                                                   omega_m)
            if accepted:
                stats.velocity_accepted += 1
            else:
                stats.velocity_rejected += 1
        t_egovel = time.perf_counter()

        # scan-to-submap (or scan-to-last-k) update, then map maintenance
        static_scan = (filtered.subset(estimate.inlier_mask)
                       if estimate is not None else None)
        if (mode.use_scan_update and static_scan is not None
                and len(static_scan) > 0):
            target = last_k_map if last_k_map is not None else submap
            state, cov, report = update_scan_to_submap(
                state, cov, static_scan, target, config.scan_match)
            if report.status == "updated":
                stats.scan_updates += 1
            else:
                stats.scan_no_matches += 1
        if static_scan is not None and len(static_scan) > 0:
            radar_pose = state.radar_pose()
            points_global = radar_pose.apply(static_scan.positions)
            submap.insert_points(points_global, keyframe_count)
            if last_k_map is not None:
                last_k_map.push(points_global)
        t_scan_update = time.perf_counter()

        stats.scans_processed += 1
        if (config.submap.prune_every_scans > 0
                and stats.scans_processed % config.submap.prune_every_scans == 0):
            submap.prune(state.pos, config.submap.prune_radius)

        pose = state.imu_pose()
        trajectory_times.append(t_scan)
        trajectory_poses.append(pose)

        # keyframing for the loop backend
        if _backend_hook is not None and static_scan is not None \
                and len(static_scan) > 0:
            is_keyframe = last_keyframe_pose is None
            if not is_keyframe:
                rel = last_keyframe_pose.inverse() @ pose
                is_keyframe = (
                    np.linalg.norm(rel.translation) >= config.keyframe.min_translation
                    or np.rad2deg(rotation_angle(rel.rotation))
                    >= config.keyframe.min_rotation_deg)
            if is_keyframe:
                _backend_hook(Keyframe(keyframe_count, t_scan, pose,
                                       static_scan.positions.copy()),
                              static_scan)
                keyframe_count += 1
                last_keyframe_pose = pose
                stats.keyframes = keyframe_count

        t_end = time.perf_counter()
        timings.predict.append(t_predict - t_begin)
        timings.egovel.append(t_egovel - t_predict)
        timings.scan_update.append(t_scan_update - t_egovel)
        timings.total.append(t_end - t_begin)

    trajectory = Trajectory(np.asarray(trajectory_times), trajectory_poses)
    return OdometryResult(trajectory, submap, timings, stats, state)


def run_slam(dataset: Dataset, config: PipelineConfig) -> SlamResult:
    """Odometry plus loop detection and pose-graph correction."""
    config.validate()
    if not config.mode.use_loop_closure:
        from .errors import ConfigError

        raise ConfigError("run_slam requires mode.use_loop_closure: true")
    extrinsics = (config.extrinsics.transform() or dataset.extrinsics
                  or RigidTransform())
    backend = LoopBackend(config.loop, config.gicp, extrinsics)

    def hook(keyframe, scan):
        try:
            backend.add_keyframe(keyframe, scan)
        except Exception:  # backend failures degrade to odometry
            log.exception("loop backend failed on keyframe %d; continuing",
                          keyframe.keyframe_id)

    odo = run_odometry(dataset, config, _backend_hook=hook)
    odo.stats.loops_accepted = len(backend.loops)

    if backend.has_corrections():
        corrected_poses = backend.correct_trajectory(
            odo.trajectory.timestamps, odo.trajectory.poses)
        trajectory = Trajectory(odo.trajectory.timestamps.copy(),
                                corrected_poses)
        global_map = backend.rebuild_global_map(
            config.submap.voxel_size, config.submap.max_points_per_voxel)
    else:
        trajectory = odo.trajectory
        global_map = odo.submap.positions.copy()

    return SlamResult(trajectory, odo.trajectory, global_map, odo.submap,
                      odo.timings, odo.stats, backend.loops)
