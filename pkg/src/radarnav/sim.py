"""Synthetic scenario generator: ground-truth trajectories, IMU streams and
radar scans with Doppler, movers and multipath ghosts.

The trajectory is a smooth path parametrized by s in [0, 1] composed with a
time warp s(t) that holds the platform static at both ends (so the filter's
static initialization window is exact) and is C2 in between.

IMU samples are generated to be consistent with the discrete propagation
model: the emitted rates/accelerations are the finite differences of the
true poses, so feeding them back through the filter's zero-noise
propagation reproduces the true positions to machine precision.

Doppler sign convention: a static point's Doppler equals the projection of
the radar's own velocity (radar frame, lever arm included) onto the point
bearing. The ego-velocity estimator and the filter's velocity residual use
the same convention, pinned by round-trip tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .errors import ConfigError
from .manifold import RigidTransform, rot_z, so3_log
from .types import ImuSample, RadarScan

LABEL_STATIC = 0
LABEL_MOVER = 1
LABEL_GHOST = 2


# -- paths (functions of the arc parameter s) --------------------------------

class StaticPath:
    def eval(self, s):
        return np.zeros(3), np.zeros(3), np.zeros(3), 0.0, 0.0


class LinePath:
    def __init__(self, length: float = 20.0, direction=(1.0, 0.0, 0.0)):
        self.delta = np.asarray(direction, dtype=float)
        self.delta = self.delta / np.linalg.norm(self.delta) * length
        self.yaw = math.atan2(self.delta[1], self.delta[0])

    def eval(self, s):
        return self.delta * s, self.delta.copy(), np.zeros(3), self.yaw, 0.0


class CirclePath:
    def __init__(self, radius: float = 20.0, laps: float = 1.0,
                 z_amplitude: float = 0.0):
        self.radius = float(radius)
        self.laps = float(laps)
        self.z_amplitude = float(z_amplitude)

    def eval(self, s):
        w = 2.0 * math.pi * self.laps
        a = w * s
        r = self.radius
        pos = np.array([r * math.cos(a) - r, r * math.sin(a),
                        self.z_amplitude * math.sin(2.0 * math.pi * s)])
        d1 = np.array([-r * w * math.sin(a), r * w * math.cos(a),
                       self.z_amplitude * 2.0 * math.pi
                       * math.cos(2.0 * math.pi * s)])
        d2 = np.array([-r * w * w * math.cos(a), -r * w * w * math.sin(a),
                       -self.z_amplitude * (2.0 * math.pi) ** 2
                       * math.sin(2.0 * math.pi * s)])
        yaw = a + 0.5 * math.pi
        return pos, d1, d2, yaw, w


class Figure8Path:
    """Lissajous eight: x = A sin(2 pi s), y = B sin(4 pi s)."""

    def __init__(self, size_x: float = 20.0, size_y: float = 10.0,
                 z_amplitude: float = 0.0):
        self.ax = float(size_x)
        self.ay = float(size_y)
        self.z_amplitude = float(z_amplitude)

    def eval(self, s):
        w = 2.0 * math.pi
        pos = np.array([self.ax * math.sin(w * s),
                        self.ay * math.sin(2.0 * w * s),
                        self.z_amplitude * math.sin(w * s)])
        d1 = np.array([self.ax * w * math.cos(w * s),
                       self.ay * 2.0 * w * math.cos(2.0 * w * s),
                       self.z_amplitude * w * math.cos(w * s)])
        d2 = np.array([-self.ax * w * w * math.sin(w * s),
                       -self.ay * 4.0 * w * w * math.sin(2.0 * w * s),
                       -self.z_amplitude * w * w * math.sin(w * s)])
        dx, dy = d1[0], d1[1]
        yaw = math.atan2(dy, dx)
        denom = dx * dx + dy * dy
        yaw_ds = (dx * d2[1] - dy * d2[0]) / denom if denom > 1e-12 else 0.0
        return pos, d1, d2, yaw, yaw_ds


_PATH_KINDS = {
    "static": StaticPath,
    "line": LinePath,
    "circle": CirclePath,
    "figure8": Figure8Path,
}


@dataclass
class TrajectorySpec:
    kind: str = "figure8"
    params: dict = field(default_factory=dict)
    warp: str = "smooth"  # "smooth" holds both ends static, "linear" does not
    hold_seconds: float = 2.0

    def build(self):
        if self.kind not in _PATH_KINDS:
            raise ConfigError(f"unknown trajectory kind {self.kind!r}")
        return _PATH_KINDS[self.kind](**self.params)


def _time_warp(spec: TrajectorySpec, duration: float, t: float):
    """Arc parameter s(t) with first and second time derivatives."""
    if spec.warp == "linear":
        return t / duration, 1.0 / duration, 0.0
    hold = spec.hold_seconds
    span = duration - 2.0 * hold
    if span <= 0.0:
        raise ConfigError("duration too short for the static holds")
    u = (t - hold) / span
    if u <= 0.0:
        return 0.0, 0.0, 0.0
    if u >= 1.0:
        return 1.0, 0.0, 0.0
    s = u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
    ds = (30.0 * u * u - 60.0 * u**3 + 30.0 * u**4) / span
    dds = (60.0 * u - 180.0 * u * u + 120.0 * u**3) / span**2
    return s, ds, dds


# -- scenario ---------------------------------------------------------------

@dataclass
class SensorFov:
    azimuth_deg: float = 60.0
    elevation_deg: float = 20.0
    max_range: float = 100.0
    min_range: float = 0.5


@dataclass
class SimNoise:
    sigma_doppler: float = 0.0  # m/s
    sigma_range: float = 0.0  # m
    accel_density: float = 0.0  # m/s^2/sqrt(Hz)
    gyro_density: float = 0.0  # rad/s/sqrt(Hz)
    accel_bias_walk: float = 0.0
    gyro_bias_walk: float = 0.0
    init_accel_bias: tuple = (0.0, 0.0, 0.0)
    init_gyro_bias: tuple = (0.0, 0.0, 0.0)


@dataclass
class OutlierSpec:
    mover_count: int = 0
    mover_speed: float = 2.0  # m/s
    ghost_fraction: float = 0.0


@dataclass
class WorldSpec:
    extent: float = 50.0  # placement radius, m
    cluster_count: int = 40
    cluster_points: int = 40
    cluster_spread: float = 1.0
    wall_count: int = 8
    wall_length: float = 15.0
    wall_height: float = 4.0
    wall_point_spacing: float = 0.5
    ground_extent: float = 0.0  # 0 disables the ground grid
    ground_spacing: float = 2.0
    # feature-free wedge (degrees, centered on +x): makes part of a course
    # feature-poor so scan matching weakens there, like sparse passages
    gap_sector_deg: float = 0.0
    gap_sector_center_deg: float = 0.0


@dataclass
class Scenario:
    name: str = "scenario"
    duration: float = 30.0
    imu_rate: float = 200.0
    radar_rate: float = 10.0
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    world: WorldSpec = field(default_factory=WorldSpec)
    fov: SensorFov = field(default_factory=SensorFov)
    noise: SimNoise = field(default_factory=SimNoise)
    outliers: OutlierSpec = field(default_factory=OutlierSpec)
    extrinsic_rotation_rpy_deg: tuple = (0.0, 0.0, 0.0)
    extrinsic_translation: tuple = (0.1, 0.0, 0.05)
    gravity: tuple = (0.0, 0.0, -9.81)
    closed_loop: bool = False
    seed: int = 1

    def __post_init__(self):
        if self.imu_rate <= 0 or self.radar_rate <= 0:
            raise ConfigError("rates must be > 0")
        if self.duration <= 0:
            raise ConfigError("duration must be > 0")
        self._path = self.trajectory.build()

    def extrinsics(self) -> RigidTransform:
        roll, pitch, yaw = np.deg2rad(self.extrinsic_rotation_rpy_deg)
        cr, sr = math.cos(roll), math.sin(roll)
        cp, sp = math.cos(pitch), math.sin(pitch)
        rot_x = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        rot_y = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        rot = rot_z(yaw) @ rot_y @ rot_x
        return RigidTransform(rot, np.asarray(self.extrinsic_translation, float))

    def to_dict(self) -> dict:
        return asdict(self)


def scenario_from_dict(data: dict) -> Scenario:
    data = dict(data)
    for key, cls in (("trajectory", TrajectorySpec), ("world", WorldSpec),
                     ("fov", SensorFov), ("noise", SimNoise),
                     ("outliers", OutlierSpec)):
        if key in data and isinstance(data[key], dict):
            try:
                data[key] = cls(**data[key])
            except TypeError as exc:
                raise ConfigError(f"bad {key} block: {exc}") from exc
    try:
        return Scenario(**data)
    except TypeError as exc:
        raise ConfigError(f"bad scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"scenario file {path} is not a mapping")
    return scenario_from_dict(data)


# -- ground truth -----------------------------------------------------------

def _truth(scenario: Scenario, t: float):
    s, ds, dds = _time_warp(scenario.trajectory, scenario.duration, t)
    pos, d1, d2, yaw, yaw_ds = scenario._path.eval(s)
    vel = d1 * ds
    accel = d2 * ds * ds + d1 * dds
    omega = np.array([0.0, 0.0, yaw_ds * ds])
    return RigidTransform(rot_z(yaw), pos), vel, accel, omega


def truth_pose(scenario: Scenario, t: float):
    """Pose of the IMU body in the world frame plus velocity, acceleration
    and body angular rate, all evaluated analytically."""
    if t < 0.0 or t > scenario.duration:
        raise ValueError(f"t={t} outside [0, {scenario.duration}]")
    return _truth(scenario, t)


# -- IMU stream -------------------------------------------------------------

def sample_imu(scenario: Scenario) -> list[ImuSample]:
    """IMU samples consistent with the filter's discrete propagation model."""
    rate = scenario.imu_rate
    dt = 1.0 / rate
    count = int(round(scenario.duration * rate))
    times = np.arange(count + 2) * dt
    times = np.minimum(times, scenario.duration)

    positions = np.empty((count + 2, 3))
    rotations = np.empty((count + 1, 3, 3))
    for j, tj in enumerate(times):
        pose, _, _, _ = _truth(scenario, float(tj))
        positions[j] = pose.translation
        if j <= count:
            rotations[j] = pose.rotation

    vel_fd = (positions[1:] - positions[:-1]) * rate  # (count+1, 3)
    gravity = np.asarray(scenario.gravity, dtype=float)
    rng = np.random.default_rng([scenario.seed, 1])
    noise = scenario.noise
    accel_bias = np.asarray(noise.init_accel_bias, dtype=float).copy()
    gyro_bias = np.asarray(noise.init_gyro_bias, dtype=float).copy()
    sqrt_dt = math.sqrt(dt)

    samples = []
    for i in range(count):
        accel_true = rotations[i].T @ ((vel_fd[i + 1] - vel_fd[i]) * rate - gravity)
        gyro_true = so3_log(rotations[i].T @ rotations[i + 1]) * rate
        accel_m = (accel_true + accel_bias
                   + noise.accel_density / sqrt_dt * rng.standard_normal(3))
        gyro_m = (gyro_true + gyro_bias
                  + noise.gyro_density / sqrt_dt * rng.standard_normal(3))
        samples.append(ImuSample(i * dt, accel_m, gyro_m))
        accel_bias = accel_bias + noise.accel_bias_walk * sqrt_dt * rng.standard_normal(3)
        gyro_bias = gyro_bias + noise.gyro_bias_walk * sqrt_dt * rng.standard_normal(3)
    return samples


# -- world ------------------------------------------------------------------

def _in_gap(angle, spec: WorldSpec) -> bool:
    if spec.gap_sector_deg <= 0.0:
        return False
    half = 0.5 * math.radians(spec.gap_sector_deg)
    center = math.radians(spec.gap_sector_center_deg)
    delta = (angle - center + math.pi) % (2.0 * math.pi) - math.pi
    return abs(delta) < half


def build_world(scenario: Scenario) -> np.ndarray:
    """Static world points (n, 3); deterministic in the scenario seed."""
    spec = scenario.world
    rng = np.random.default_rng([scenario.seed, 0])
    chunks = []

    if spec.cluster_count > 0:
        angles = rng.uniform(0.0, 2.0 * np.pi, spec.cluster_count)
        radii = rng.uniform(0.35 * spec.extent, spec.extent, spec.cluster_count)
        heights = rng.uniform(0.5, 4.0, spec.cluster_count)
        centers = np.stack([radii * np.cos(angles), radii * np.sin(angles),
                            heights], axis=1)
        offsets = rng.normal(0.0, spec.cluster_spread,
                             (spec.cluster_count, spec.cluster_points, 3))
        pts = (centers[:, None, :] + offsets).reshape(-1, 3)
        keep = np.array([not _in_gap(a, spec)
                         for a in np.repeat(angles, spec.cluster_points)])
        chunks.append(pts[keep])

    if spec.wall_count > 0:
        wall_r = 0.75 * spec.extent
        n_len = max(2, int(spec.wall_length / spec.wall_point_spacing))
        n_h = max(2, int(spec.wall_height / spec.wall_point_spacing))
        for k in range(spec.wall_count):
            angle = 2.0 * np.pi * k / spec.wall_count
            if _in_gap(angle, spec):
                continue
            center = np.array([wall_r * np.cos(angle), wall_r * np.sin(angle), 0.0])
            tangent = np.array([-np.sin(angle), np.cos(angle), 0.0])
            along = np.linspace(-0.5, 0.5, n_len) * spec.wall_length
            up = np.linspace(0.0, spec.wall_height, n_h)
            grid = (center[None, None, :]
                    + along[:, None, None] * tangent[None, None, :]
                    + up[None, :, None] * np.array([0.0, 0.0, 1.0]))
            jitter = rng.normal(0.0, 0.02, grid.shape)
            chunks.append((grid + jitter).reshape(-1, 3))

    if spec.ground_extent > 0.0:
        # ground is never gapped: it anchors height but slides freely in the
        # plane, so the gap still starves horizontal constraints
        ticks = np.arange(-spec.ground_extent, spec.ground_extent + 1e-9,
                          spec.ground_spacing)
        gx, gy = np.meshgrid(ticks, ticks)
        ground = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
        ground += rng.normal(0.0, 0.05, ground.shape)
        chunks.append(ground)

    if not chunks:
        return np.zeros((0, 3))
    return np.vstack(chunks)


def build_movers(scenario: Scenario):
    """Initial positions (m, 3) and constant world velocities (m, 3)."""
    spec = scenario.outliers
    if spec.mover_count == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    rng = np.random.default_rng([scenario.seed, 2])
    angles = rng.uniform(0.0, 2.0 * np.pi, spec.mover_count)
    radii = rng.uniform(5.0, 0.6 * scenario.world.extent, spec.mover_count)
    pos = np.stack([radii * np.cos(angles), radii * np.sin(angles),
                    rng.uniform(0.3, 2.0, spec.mover_count)], axis=1)
    dirs = rng.uniform(0.0, 2.0 * np.pi, spec.mover_count)
    vel = spec.mover_speed * np.stack(
        [np.cos(dirs), np.sin(dirs), np.zeros(spec.mover_count)], axis=1)
    return pos, vel


# -- radar rendering --------------------------------------------------------

def radar_velocity_truth(scenario: Scenario, t: float) -> np.ndarray:
    """True velocity of the radar origin expressed in the radar frame."""
    pose, vel, _, omega = _truth(scenario, t)
    ext = scenario.extrinsics()
    return ext.rotation.T @ (pose.rotation.T @ vel
                             + np.cross(omega, ext.translation))


def _discrete_body_motion(scenario: Scenario, t: float):
    """Velocity and body rate consistent with the IMU stream's discrete
    model (forward differences at the IMU interval); at zero noise the
    filter state matches these exactly, so rendered Doppler satisfies the
    velocity measurement equation without discretization residue."""
    dt = 1.0 / scenario.imu_rate
    pose0, _, _, _ = _truth(scenario, t)
    pose1, _, _, _ = _truth(scenario, min(t + dt, scenario.duration))
    if t + dt > scenario.duration:
        _, vel, _, omega = _truth(scenario, t)
        return pose0, vel, omega
    vel = (pose1.translation - pose0.translation) / dt
    omega = so3_log(pose0.rotation.T @ pose1.rotation) / dt
    return pose0, vel, omega


def radar_velocity_discrete(scenario: Scenario, t: float) -> np.ndarray:
    """Radar-frame velocity under the discrete IMU model (what a zero-noise
    filter run predicts at time t)."""
    pose, vel, omega = _discrete_body_motion(scenario, t)
    ext = scenario.extrinsics()
    return ext.rotation.T @ (pose.rotation.T @ vel
                             + np.cross(omega, ext.translation))


def render_scan(scenario: Scenario, t: float, world: np.ndarray | None = None,
                scan_index: int | None = None):
    """RadarScan at time t plus per-point labels (static/mover/ghost).

    Deterministic: randomness is drawn from (seed, scan index).
    """
    if world is None:
        world = build_world(scenario)
    if scan_index is None:
        scan_index = int(round(t * scenario.radar_rate))
    rng = np.random.default_rng([scenario.seed, 3, scan_index])

    pose, vel, omega = _discrete_body_motion(scenario, t)
    ext = scenario.extrinsics()
    radar_pose = pose @ ext
    inv = radar_pose.inverse()
    v_radar = ext.rotation.T @ (pose.rotation.T @ vel
                                + np.cross(omega, ext.translation))

    mover_pos0, mover_vel = build_movers(scenario)
    mover_pos = mover_pos0 + mover_vel * t

    pts = np.vstack([world, mover_pos]) if len(mover_pos) else world
    labels = np.concatenate([
        np.full(len(world), LABEL_STATIC, dtype=np.int64),
        np.full(len(mover_pos), LABEL_MOVER, dtype=np.int64),
    ])

    local = inv.apply(pts)
    ranges = np.linalg.norm(local, axis=1)
    fov = scenario.fov
    with np.errstate(invalid="ignore", divide="ignore"):
        azimuth = np.arctan2(local[:, 1], local[:, 0])
        elevation = np.arctan2(local[:, 2], np.hypot(local[:, 0], local[:, 1]))
    visible = ((ranges >= fov.min_range) & (ranges <= fov.max_range)
               & (np.abs(azimuth) <= np.deg2rad(fov.azimuth_deg))
               & (np.abs(elevation) <= np.deg2rad(fov.elevation_deg)))
    local = local[visible]
    labels = labels[visible].copy()
    ranges = ranges[visible]

    n = len(local)
    bearings = local / ranges[:, None]
    doppler = bearings @ v_radar
    if np.any(labels == LABEL_MOVER):
        idx = np.nonzero(labels == LABEL_MOVER)[0]
        world_idx = np.nonzero(visible)[0][idx] - len(world)
        w_in_radar = mover_vel[world_idx] @ radar_pose.rotation
        doppler[idx] = np.einsum("ij,ij->i", bearings[idx],
                                 v_radar[None, :] - w_in_radar)

    # multipath ghosts: same bearing, mirrored (roughly doubled) range,
    # uninformative Doppler
    ghost_draw = rng.uniform(0.0, 1.0, n)
    ghost = (ghost_draw < scenario.outliers.ghost_fraction) & (labels == LABEL_STATIC)
    if np.any(ghost):
        factor = rng.uniform(1.8, 2.2, int(np.count_nonzero(ghost)))
        local = local.copy()
        local[ghost] *= factor[:, None]
        doppler[ghost] = rng.uniform(-3.0, 3.0, int(np.count_nonzero(ghost)))
        labels[ghost] = LABEL_GHOST

    range_noise = rng.standard_normal(n) * scenario.noise.sigma_range
    doppler_noise = rng.standard_normal(n) * scenario.noise.sigma_doppler
    positions = local + bearings * range_noise[:, None]
    doppler = doppler + doppler_noise
    intensity = rng.uniform(1.0, 100.0, n)

    scan = RadarScan(t, positions, doppler, intensity)
    return scan, labels


@dataclass
class SimDataset:
    """In-memory dataset produced by the simulator."""

    imu: list
    scans: list
    labels: list
    truth_times: np.ndarray
    truth_poses: list
    extrinsics: RigidTransform
    closed_loop: bool
    scenario: Scenario


def simulate_dataset(scenario: Scenario) -> SimDataset:
    """Full deterministic dataset: IMU stream, radar scans and ground truth."""
    world = build_world(scenario)
    imu = sample_imu(scenario)
    n_scans = int(math.floor(scenario.duration * scenario.radar_rate)) + 1
    scans, labels, poses, times = [], [], [], []
    for k in range(n_scans):
        t = k / scenario.radar_rate
        if t > scenario.duration:
            break
        scan, lab = render_scan(scenario, t, world, scan_index=k)
        scans.append(scan)
        labels.append(lab)
        pose, _, _, _ = _truth(scenario, t)
        poses.append(pose)
        times.append(t)
    return SimDataset(imu, scans, labels, np.asarray(times), poses,
                      scenario.extrinsics(), scenario.closed_loop, scenario)
