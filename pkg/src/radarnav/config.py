"""Pipeline configuration: one YAML file drives every module.

Every run embeds its full parameter dump in the output directory so results
stay reproducible from the artifacts alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .egovel import GncParams
from .errors import ConfigError
from .eskf import NoiseParams, ScanMatchConfig
from .gicp import GicpConfig
from .manifold import RigidTransform, so3_exp
from .preprocess import RelaxationFilterParams

SCAN_MATCH_MODES = ("submap", "last_k_scans")


@dataclass
class InitialUncertainty:
    """1-sigma values for the initial error covariance; zero locks a block."""

    pos: float = 0.0
    vel: float = 0.1
    rot: float = 0.02
    accel_bias: float = 0.02
    gyro_bias: float = 0.002
    ext_rot: float = 0.0  # extrinsics locked by default
    ext_trans: float = 0.0
    gravity: float = 0.05


@dataclass
class FilterConfig:
    init_seconds: float = 1.0
    gravity_magnitude: float = 9.81
    # constant-velocity mode only: must absorb unmodeled accelerations and
    # turn rates between scans, so these are large
    cvm_vel_noise: float = 2.0  # m/s/sqrt(s)
    cvm_rot_noise: float = 0.5  # rad/sqrt(s)
    initial_sigma: InitialUncertainty = field(default_factory=InitialUncertainty)


@dataclass
class SubmapConfig:
    voxel_size: float = 0.4
    max_points_per_voxel: int = 5
    prune_radius: float = 200.0
    prune_every_scans: int = 100


@dataclass
class KeyframeConfig:
    min_translation: float = 1.0  # m
    min_rotation_deg: float = 10.0


@dataclass
class LoopConfig:
    threshold: float = 0.25
    min_gap: int = 20  # keyframes
    shortlist: int = 10
    rings: int = 20
    sectors: int = 60
    max_range: float = 80.0
    min_fitness: float = 0.5
    max_translation_correction: float = 20.0
    # candidates farther apart than this in the odometry estimate are not
    # even registered (bounds wasted ICP work on places that merely look alike)
    max_odometry_displacement: float = 30.0
    aggregate_neighbors: int = 2  # keyframes on each side of the candidate
    odometry_sigma_trans: float = 0.1  # m, odometry edge weight
    odometry_sigma_rot_deg: float = 1.0


@dataclass
class ModeConfig:
    """Ablation switches."""

    use_imu: bool = True  # False: constant-velocity prediction
    use_velocity_update: bool = True
    use_scan_update: bool = True
    scan_match_mode: str = "submap"
    last_k: int = 5  # window for last_k_scans mode
    use_loop_closure: bool = False


@dataclass
class ExtrinsicsConfig:
    """Radar pose in the IMU frame; overrides the dataset's value if set."""

    rotation_rotvec: tuple | None = None  # rad
    translation: tuple | None = None  # m

    def transform(self) -> RigidTransform | None:
        if self.rotation_rotvec is None and self.translation is None:
            return None
        rot = so3_exp(self.rotation_rotvec or (0.0, 0.0, 0.0))
        trans = np.asarray(self.translation or (0.0, 0.0, 0.0), dtype=float)
        return RigidTransform(rot, trans)


@dataclass
class PipelineConfig:
    preprocess: RelaxationFilterParams = field(default_factory=RelaxationFilterParams)
    gnc: GncParams = field(default_factory=GncParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    filter: FilterConfig = field(default_factory=FilterConfig)
    scan_match: ScanMatchConfig = field(default_factory=ScanMatchConfig)
    submap: SubmapConfig = field(default_factory=SubmapConfig)
    keyframe: KeyframeConfig = field(default_factory=KeyframeConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    gicp: GicpConfig = field(default_factory=GicpConfig)
    mode: ModeConfig = field(default_factory=ModeConfig)
    extrinsics: ExtrinsicsConfig = field(default_factory=ExtrinsicsConfig)

    def validate(self):
        self.preprocess.validate()
        self.noise.validate()
        if not (self.mode.use_velocity_update or self.mode.use_scan_update):
            raise ConfigError(
                "at least one of use_velocity_update/use_scan_update required")
        if self.mode.scan_match_mode not in SCAN_MATCH_MODES:
            raise ConfigError(
                f"scan_match_mode must be one of {SCAN_MATCH_MODES}")
        if self.mode.last_k < 1:
            raise ConfigError("last_k must be >= 1")
        if self.gnc.sigma_doppler <= 0:
            raise ConfigError("sigma_doppler must be > 0")
        if self.filter.init_seconds < 0:
            raise ConfigError("init_seconds must be >= 0")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "preprocess": RelaxationFilterParams,
    "gnc": GncParams,
    "noise": NoiseParams,
    "filter": FilterConfig,
    "scan_match": ScanMatchConfig,
    "submap": SubmapConfig,
    "keyframe": KeyframeConfig,
    "loop": LoopConfig,
    "gicp": GicpConfig,
    "mode": ModeConfig,
    "extrinsics": ExtrinsicsConfig,
}


def config_from_dict(data: dict) -> PipelineConfig:
    data = dict(data or {})
    kwargs = {}
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for key, cls in _SECTIONS.items():
        block = data.get(key, {})
        if not isinstance(block, dict):
            raise ConfigError(f"config section {key!r} must be a mapping")
        try:
            if key == "filter" and "initial_sigma" in block:
                block = dict(block)
                block["initial_sigma"] = InitialUncertainty(**block["initial_sigma"])
            kwargs[key] = cls(**block)
        except TypeError as exc:
            raise ConfigError(f"bad {key} section: {exc}") from exc
    return PipelineConfig(**kwargs).validate()


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} is not a mapping")
    return config_from_dict(data)


def dump_config(config: PipelineConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
