"""Dataset read/write: the native recording format, a ColoRadar-layout
reader, and trajectory / point-cloud file helpers.

Native layout (one directory per recording):
    meta.yaml      format tag, closed-loop flag, extrinsics (quaternion)
    imu.txt        rows: timestamp ax ay az gx gy gz
    index.txt      rows: timestamp <relative scan path>
    scans/*.bin    little-endian: uint32 point count, then per point
                   float32 x y z doppler intensity

Floats in the text files are written with repr() so a write/read round trip
is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from .errors import DataFormatError
from .manifold import RigidTransform
from .types import ImuSample, RadarScan

NATIVE_FORMAT_TAG = "radar-imu-native-v1"


@dataclass
class Dataset:
    """Time-sorted sensor streams plus recording metadata."""

    imu: list = field(default_factory=list)
    scans: list = field(default_factory=list)
    extrinsics: RigidTransform | None = None
    closed_loop: bool = False
    ground_truth: "Trajectory | None" = None
    name: str = "dataset"


@dataclass
class Trajectory:
    """Timestamped SE(3) poses; used for estimates and references."""

    timestamps: np.ndarray
    poses: list  # list[RigidTransform]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamps and poses lengths differ")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)


# -- quaternion helpers (I/O boundary only) ----------------------------------

def _quat_to_rot(qx, qy, qz, qw) -> np.ndarray:
    return Rotation.from_quat([qx, qy, qz, qw]).as_matrix()


def _rot_to_quat(rot) -> np.ndarray:
    quat = Rotation.from_matrix(rot).as_quat()  # x, y, z, w
    if quat[3] < 0.0:
        quat = -quat
    return quat


# -- native format -----------------------------------------------------------

def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    (path / "scans").mkdir(parents=True, exist_ok=True)

    meta = {
        "format": NATIVE_FORMAT_TAG,
        "name": dataset.name,
        "closed_loop": bool(dataset.closed_loop),
    }
    if dataset.extrinsics is not None:
        quat = _rot_to_quat(dataset.extrinsics.rotation)
        meta["extrinsics"] = {
            "quaternion_xyzw": [float(v) for v in quat],
            "translation": [float(v) for v in dataset.extrinsics.translation],
        }
    with open(path / "meta.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)

    with open(path / "imu.txt", "w", encoding="utf-8") as fh:
        fh.write("# timestamp ax ay az gx gy gz\n")
        for s in dataset.imu:
            vals = [s.timestamp, *s.accel, *s.gyro]
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")

    index_lines = []
    for i, scan in enumerate(dataset.scans):
        rel = f"scans/scan_{i:06d}.bin"
        index_lines.append(f"{repr(float(scan.timestamp))} {rel}")
        payload = np.empty((len(scan), 5), dtype="<f4")
        payload[:, 0:3] = scan.positions
        payload[:, 3] = scan.doppler
        payload[:, 4] = scan.intensity
        with open(path / rel, "wb") as fh:
            fh.write(struct.pack("<I", len(scan)))
            fh.write(payload.tobytes())
    with open(path / "index.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(index_lines) + ("\n" if index_lines else ""))

    if dataset.ground_truth is not None:
        write_trajectory(dataset.ground_truth, path / "groundtruth.txt")


def _read_scan_blob(path: Path, scan_index: int, timestamp: float) -> RadarScan:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise DataFormatError("scan blob shorter than its header",
                              path=str(path), byte_offset=0,
                              scan_index=scan_index)
    (count,) = struct.unpack_from("<I", raw, 0)
    expected = 4 + count * 20
    if len(raw) != expected:
        raise DataFormatError(
            f"scan blob truncated: expected {expected} bytes, got {len(raw)}",
            path=str(path), byte_offset=min(len(raw), expected),
            scan_index=scan_index)
    data = np.frombuffer(raw, dtype="<f4", count=count * 5, offset=4)
    data = data.reshape(count, 5).astype(float)
    return RadarScan(timestamp, data[:, 0:3], data[:, 3], data[:, 4])


def _read_native(path: Path) -> Dataset:
    meta_path = path / "meta.yaml"
    meta = {}
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = yaml.safe_load(fh) or {}

    extrinsics = None
    if "extrinsics" in meta:
        ext = meta["extrinsics"]
        extrinsics = RigidTransform(
            _quat_to_rot(*ext["quaternion_xyzw"]),
            np.asarray(ext["translation"], dtype=float))

    imu = []
    imu_path = path / "imu.txt"
    if not imu_path.exists():
        raise DataFormatError("missing imu.txt", path=str(imu_path))
    for lineno, line in enumerate(imu_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise DataFormatError(f"imu.txt line {lineno}: expected 7 fields",
                                  path=str(imu_path))
        vals = [float(v) for v in parts]
        imu.append(ImuSample(vals[0], vals[1:4], vals[4:7]))
    _check_sorted([s.timestamp for s in imu], imu_path)

    scans = []
    index_path = path / "index.txt"
    if not index_path.exists():
        raise DataFormatError("missing index.txt", path=str(index_path))
    for lineno, line in enumerate(index_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataFormatError(
                f"index.txt line {lineno}: expected 'timestamp path'",
                path=str(index_path))
        timestamp = float(parts[0])
        scans.append(_read_scan_blob(path / parts[1], len(scans), timestamp))
    _check_sorted([s.timestamp for s in scans], index_path)

    gt = None
    gt_path = path / "groundtruth.txt"
    if gt_path.exists():
        gt = read_trajectory(gt_path)

    return Dataset(imu, scans, extrinsics, bool(meta.get("closed_loop", False)),
                   gt, str(meta.get("name", path.name)))


def _check_sorted(times, path):
    arr = np.asarray(times)
    if len(arr) > 1 and np.any(np.diff(arr) < 0.0):
        bad = int(np.argmax(np.diff(arr) < 0.0)) + 1
        raise DataFormatError(f"timestamps out of order at record {bad}",
                              path=str(path))


# -- ColoRadar layout ---------------------------------------------------------

def _read_timestamps(path: Path) -> list:
    if not path.exists():
        raise DataFormatError("missing timestamps file", path=str(path))
    return [float(line.strip()) for line in path.read_text().splitlines()
            if line.strip()]


def _read_coloradar_transform(path: Path) -> RigidTransform:
    """Calibration file: translation then quaternion (x y z w), possibly on
    labeled lines; all numeric tokens are collected in order."""
    tokens = []
    for line in path.read_text().splitlines():
        for tok in line.replace(":", " ").split():
            try:
                tokens.append(float(tok))
            except ValueError:
                continue
    if len(tokens) != 7:
        raise DataFormatError(
            f"expected 7 numbers (t, quat) in transform file, got {len(tokens)}",
            path=str(path))
    return RigidTransform(_quat_to_rot(*tokens[3:7]),
                          np.asarray(tokens[0:3]))


def _read_coloradar(path: Path) -> Dataset:
    """Reads one ColoRadar sequence directory (single-chip point clouds).

    Radar blobs are flat float32 arrays of [x y z intensity doppler] per
    point; IMU rows are 'ax ay az gx gy gz' with timestamps in a sibling
    file. Extrinsics come from the calib/transforms directory, searched in
    the sequence directory and its parents.
    """
    pc_dir = path / "single_chip" / "pointclouds"
    data_dir = pc_dir / "data" if (pc_dir / "data").is_dir() else pc_dir
    times = _read_timestamps(pc_dir / "timestamps.txt")

    scans = []
    for i, t in enumerate(times):
        blob = data_dir / f"radar_pointcloud_{i}.bin"
        if not blob.exists():
            raise DataFormatError("missing radar blob", path=str(blob),
                                  scan_index=i)
        raw = blob.read_bytes()
        if len(raw) % 20 != 0:
            raise DataFormatError(
                "radar blob size not a multiple of 5 float32 fields",
                path=str(blob), byte_offset=len(raw) - len(raw) % 20,
                scan_index=i)
        data = np.frombuffer(raw, dtype="<f4").reshape(-1, 5).astype(float)
        scans.append(RadarScan(t, data[:, 0:3], data[:, 4], data[:, 3]))

    imu_dir = path / "imu"
    imu_times = _read_timestamps(imu_dir / "timestamps.txt")
    imu_path = imu_dir / "imu_data.txt"
    if not imu_path.exists():
        raise DataFormatError("missing imu_data.txt", path=str(imu_path))
    imu = []
    rows = [line.split() for line in imu_path.read_text().splitlines()
            if line.strip()]
    if len(rows) != len(imu_times):
        raise DataFormatError(
            f"imu rows ({len(rows)}) != imu timestamps ({len(imu_times)})",
            path=str(imu_path))
    for t, row in zip(imu_times, rows):
        if len(row) != 6:
            raise DataFormatError("imu row must have 6 fields",
                                  path=str(imu_path))
        vals = [float(v) for v in row]
        imu.append(ImuSample(t, vals[0:3], vals[3:6]))
    _check_sorted(imu_times, imu_path)
    _check_sorted(times, pc_dir / "timestamps.txt")

    extrinsics = None
    for base in (path, *path.parents):
        calib = base / "calib" / "transforms"
        if (calib / "base_to_single_chip.txt").exists():
            base_to_radar = _read_coloradar_transform(
                calib / "base_to_single_chip.txt")
            imu_file = calib / "base_to_imu.txt"
            base_to_imu = (_read_coloradar_transform(imu_file)
                           if imu_file.exists() else RigidTransform())
            extrinsics = base_to_imu.inverse() @ base_to_radar
            break

    return Dataset(imu, scans, extrinsics, False, None, path.name)


def read_dataset(path, fmt: str = "native") -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("dataset path does not exist", path=str(path))
    if fmt == "native":
        return _read_native(path)
    if fmt == "coloradar":
        return _read_coloradar(path)
    raise DataFormatError(f"unknown dataset format {fmt!r}")


# -- trajectory files ---------------------------------------------------------

def write_trajectory(traj: Trajectory, path) -> None:
    """Text rows: timestamp tx ty tz qx qy qz qw."""
    lines = []
    for t, pose in zip(traj.timestamps, traj.poses):
        quat = _rot_to_quat(pose.rotation)
        vals = [t, *pose.translation, *quat]
        lines.append(" ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("trajectory file does not exist", path=str(path))
    times, poses = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise DataFormatError(
                f"trajectory line {lineno}: expected 8 fields", path=str(path))
        vals = [float(v) for v in parts]
        times.append(vals[0])
        poses.append(RigidTransform(_quat_to_rot(*vals[4:8]),
                                    np.asarray(vals[1:4])))
    return Trajectory(np.asarray(times), poses)


# -- point-cloud export --------------------------------------------------------

def export_map(points, path) -> None:
    """Write map points as one 'x y z' text row per point (float32-exact)."""
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    lines = [" ".join(repr(float(v)) for v in row) for row in points]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def read_map(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("map file does not exist", path=str(path))
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(f"map line {lineno}: expected 3 fields",
                                  path=str(path))
        rows.append([float(v) for v in parts])
    return np.asarray(rows, dtype=np.float32).reshape(-1, 3)
