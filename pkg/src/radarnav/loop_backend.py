"""Loop-closure backend: keyframe database, loop verification via ICP, and
pose-graph bookkeeping.

Keyframes arrive in odometry order; each new one is checked against the
descriptor database, verified geometrically, and on acceptance the pose
graph is re-optimized. The frontend is never corrected in place: optimized
poses are published as a per-keyframe correction applied when the
trajectory is exported.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import LoopConfig
from .errors import NotConverged
from .gicp import GicpConfig, relative_pose_gicp
from .manifold import RigidTransform, rot_z, se3_adjoint
from .posegraph import PoseGraph, PoseGraphEdge, optimize_pose_graph
from .scancontext import KeyframeDescriptorDatabase, make_descriptor
from .types import RadarScan

log = logging.getLogger(__name__)


@dataclass
class Keyframe:
    keyframe_id: int
    timestamp: float
    pose: RigidTransform  # odometry IMU pose
    points: np.ndarray  # (n, 3) static points, radar frame


@dataclass
class LoopMatch:
    query_id: int
    candidate_id: int
    transform: RigidTransform  # candidate_imu <- query_imu
    fitness: float
    information: np.ndarray = field(default_factory=lambda: np.eye(6))


@dataclass
class LoopBackend:
    loop_config: LoopConfig
    gicp_config: GicpConfig
    extrinsics: RigidTransform
    keyframes: list = field(default_factory=list)
    loops: list = field(default_factory=list)
    optimized_poses: dict = field(default_factory=dict)

    def __post_init__(self):
        self._db = KeyframeDescriptorDatabase(
            threshold=self.loop_config.threshold,
            min_gap=self.loop_config.min_gap,
            shortlist=self.loop_config.shortlist,
        )
        sig_t = self.loop_config.odometry_sigma_trans
        sig_r = np.deg2rad(self.loop_config.odometry_sigma_rot_deg)
        self._odom_information = np.diag(
            [1.0 / sig_t**2] * 3 + [1.0 / sig_r**2] * 3)
        self._loop_edges: list = []

    # -- keyframe ingestion --------------------------------------------------

    def add_keyframe(self, keyframe: Keyframe, scan: RadarScan) -> LoopMatch | None:
        """Register a keyframe; returns the accepted loop match, if any."""
        self.keyframes.append(keyframe)
        descriptor = make_descriptor(
            scan, self.loop_config.max_range,
            self.loop_config.rings, self.loop_config.sectors)
        hit = self._db.detect_loop(descriptor, keyframe.keyframe_id)
        self._db.add(keyframe.keyframe_id, descriptor)
        if hit is None:
            return None
        candidate_id, yaw_prior = hit
        match = self._verify_loop(keyframe, candidate_id, yaw_prior)
        if match is None:
            return None
        self.loops.append(match)
        self._loop_edges.append(match)
        self._optimize()
        return match

    def _aggregate_cloud(self, candidate_id: int) -> np.ndarray:
        """Candidate scan aggregated with its neighbor keyframes, expressed in
        the candidate's radar frame (motion-compensated by odometry)."""
        span = self.loop_config.aggregate_neighbors
        center = self.keyframes[candidate_id]
        center_radar = center.pose @ self.extrinsics
        chunks = []
        lo = max(0, candidate_id - span)
        hi = min(len(self.keyframes) - 1, candidate_id + span)
        for k in range(lo, hi + 1):
            kf = self.keyframes[k]
            rel = center_radar.inverse() @ (kf.pose @ self.extrinsics)
            chunks.append(rel.apply(kf.points))
        return np.vstack(chunks)

    def _verify_loop(self, query: Keyframe, candidate_id: int,
                     yaw_prior: float) -> LoopMatch | None:
        candidate = self.keyframes[candidate_id]
        odom_displacement = np.linalg.norm(
            (candidate.pose.inverse() @ query.pose).translation)
        if odom_displacement > self.loop_config.max_odometry_displacement:
            return None
        target = self._aggregate_cloud(candidate_id)
        if len(target) == 0 or len(query.points) == 0:
            return None
        init = RigidTransform(rot_z(-yaw_prior), np.zeros(3))
        try:
            result = relative_pose_gicp(query.points, target, init,
                                        self.gicp_config)
        except NotConverged:
            log.info("loop %d->%d rejected: ICP did not converge",
                     query.keyframe_id, candidate_id)
            return None
        if result.fitness < self.loop_config.min_fitness:
            log.info("loop %d->%d rejected: fitness %.2f",
                     query.keyframe_id, candidate_id, result.fitness)
            return None
        # radar-frame relative pose -> IMU-frame relative pose
        z_imu = self.extrinsics @ result.transform @ self.extrinsics.inverse()
        odom_rel = candidate.pose.inverse() @ query.pose
        correction = np.linalg.norm(z_imu.translation - odom_rel.translation)
        if correction > self.loop_config.max_translation_correction:
            log.info("loop %d->%d rejected: %.1f m correction",
                     query.keyframe_id, candidate_id, correction)
            return None
        # ICP information lives in radar-frame twists; map it to IMU twists
        adj = se3_adjoint(self.extrinsics.inverse())
        info_imu = adj.T @ result.information @ adj
        return LoopMatch(query.keyframe_id, candidate_id, z_imu,
                         result.fitness, info_imu)

    # -- pose graph ------------------------------------------------------------

    def _build_graph(self) -> PoseGraph:
        graph = PoseGraph()
        for kf in self.keyframes:
            pose = self.optimized_poses.get(kf.keyframe_id, kf.pose)
            graph.add_node(kf.keyframe_id, pose)
        for a, b in zip(self.keyframes[:-1], self.keyframes[1:]):
            rel = a.pose.inverse() @ b.pose
            graph.add_edge(PoseGraphEdge(a.keyframe_id, b.keyframe_id, rel,
                                         self._odom_information))
        for match in self._loop_edges:
            graph.add_edge(PoseGraphEdge(match.candidate_id, match.query_id,
                                         match.transform, match.information))
        return graph

    def _optimize(self):
        graph = self._build_graph()
        try:
            result = optimize_pose_graph(graph)
        except NotConverged as exc:
            log.warning("pose graph optimization did not converge; "
                        "keeping previous poses")
            result = exc.last_result
            if result is None:
                return
        self.optimized_poses = result.poses

    # -- publication -----------------------------------------------------------

    def has_corrections(self) -> bool:
        return bool(self.loops) and bool(self.optimized_poses)

    def correct_trajectory(self, timestamps, poses) -> list:
        """Apply the latest keyframe correction to each trajectory pose.

        Keyframes added after the last optimization inherit the previous
        keyframe's correction: their odometry is relative to it.
        """
        if not self.has_corrections():
            return list(poses)
        kf_times = [kf.timestamp for kf in self.keyframes]
        corrections = []
        last = RigidTransform()
        for kf in self.keyframes:
            opt = self.optimized_poses.get(kf.keyframe_id)
            if opt is not None:
                last = opt @ kf.pose.inverse()
            corrections.append(last)
        out = []
        idx = np.searchsorted(np.asarray(kf_times), np.asarray(timestamps),
                              side="right") - 1
        for i, pose in zip(idx, poses):
            if i < 0:
                out.append(pose)
            else:
                out.append(corrections[int(i)] @ pose)
        return out

    def rebuild_global_map(self, voxel_size: float,
                           max_points_per_voxel: int) -> np.ndarray:
        """Keyframe scans re-projected at optimized poses, voxel-thinned."""
        from .submap import Submap

        submap = Submap(voxel_size, max_points_per_voxel)
        last = RigidTransform()
        for kf in self.keyframes:
            opt = self.optimized_poses.get(kf.keyframe_id)
            if opt is not None:
                last = opt @ kf.pose.inverse()
                pose = opt
            else:
                pose = last @ kf.pose
            radar_pose = pose @ self.extrinsics
            submap.insert_points(radar_pose.apply(kf.points), kf.keyframe_id)
        return submap.positions.copy()
