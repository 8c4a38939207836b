"""SE(3) pose-graph optimization for the loop-closure backend.

Gauss-Newton with a Levenberg damping fallback: a step is only accepted if
it lowers the weighted residual cost, otherwise damping increases and the
step is retried, so the cost is non-increasing across accepted iterations.
The first (lowest-id) node is held fixed as the gauge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotConverged
from .manifold import (RigidTransform, se3_adjoint, se3_exp, se3_log, skew)


@dataclass
class PoseGraphEdge:
    """Relative-pose constraint: measured T_a^-1 @ T_b."""

    id_a: int
    id_b: int
    transform: RigidTransform
    information: np.ndarray  # (6, 6) symmetric PSD

    def __post_init__(self):
        self.information = np.asarray(self.information, dtype=float)


@dataclass
class PoseGraph:
    nodes: dict = field(default_factory=dict)  # id -> RigidTransform
    edges: list = field(default_factory=list)

    def add_node(self, node_id: int, pose: RigidTransform):
        self.nodes[node_id] = pose.copy()

    def add_edge(self, edge: PoseGraphEdge):
        self.edges.append(edge)


@dataclass
class PoseGraphResult:
    poses: dict
    converged: bool
    iterations: int
    initial_cost: float
    final_cost: float


def _ad_se3(xi: np.ndarray) -> np.ndarray:
    rho, phi = xi[:3], xi[3:]
    ad = np.zeros((6, 6))
    ad[:3, :3] = skew(phi)
    ad[:3, 3:] = skew(rho)
    ad[3:, 3:] = skew(phi)
    return ad


def _right_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    # series truncation; edge residuals are small once the graph is sane
    ad = _ad_se3(xi)
    return np.eye(6) + 0.5 * ad + (ad @ ad) / 12.0


def _edge_residual(edge: PoseGraphEdge, pose_a: RigidTransform,
                   pose_b: RigidTransform) -> np.ndarray:
    return se3_log(edge.transform.inverse() @ pose_a.inverse() @ pose_b)


def _cost(graph: PoseGraph, poses: dict) -> float:
    total = 0.0
    for edge in graph.edges:
        r = _edge_residual(edge, poses[edge.id_a], poses[edge.id_b])
        total += float(r @ edge.information @ r)
    return total


def optimize_pose_graph(graph: PoseGraph, max_iterations: int = 50,
                        tol: float = 1e-6) -> PoseGraphResult:
    """Optimize all node poses; raises NotConverged carrying the last iterate
    if the increment never drops below tol."""
    ids = sorted(graph.nodes)
    if not ids:
        return PoseGraphResult({}, True, 0, 0.0, 0.0)
    index = {nid: i for i, nid in enumerate(ids)}
    fixed = ids[0]
    poses = {nid: graph.nodes[nid].copy() for nid in ids}
    n = len(ids)
    dim = 6 * n

    initial_cost = _cost(graph, poses)
    cost = initial_cost
    if not graph.edges:
        return PoseGraphResult(poses, True, 0, initial_cost, cost)
    lam = 1e-8
    converged = False
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        hessian = np.zeros((dim, dim))
        gradient = np.zeros(dim)
        for edge in graph.edges:
            pa, pb = poses[edge.id_a], poses[edge.id_b]
            r = _edge_residual(edge, pa, pb)
            jr_inv = _right_jacobian_inv(r)
            jb = jr_inv
            ja = -jr_inv @ se3_adjoint(pb.inverse() @ pa)
            ia, ib = 6 * index[edge.id_a], 6 * index[edge.id_b]
            omega = edge.information
            hessian[ia:ia + 6, ia:ia + 6] += ja.T @ omega @ ja
            hessian[ib:ib + 6, ib:ib + 6] += jb.T @ omega @ jb
            hessian[ia:ia + 6, ib:ib + 6] += ja.T @ omega @ jb
            hessian[ib:ib + 6, ia:ia + 6] += jb.T @ omega @ ja
            gradient[ia:ia + 6] += ja.T @ omega @ r
            gradient[ib:ib + 6] += jb.T @ omega @ r

        # gauge: pin the first node
        k = 6 * index[fixed]
        hessian[k:k + 6, :] = 0.0
        hessian[:, k:k + 6] = 0.0
        hessian[k:k + 6, k:k + 6] = np.eye(6)
        gradient[k:k + 6] = 0.0

        accepted = False
        for _ in range(8):
            damped = hessian + lam * np.diag(np.maximum(hessian.diagonal(), 1e-12))
            try:
                delta = -np.linalg.solve(damped, gradient)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = {
                nid: poses[nid] @ se3_exp(delta[6 * index[nid]: 6 * index[nid] + 6])
                for nid in ids
            }
            trial_cost = _cost(graph, trial)
            if trial_cost <= cost + 1e-15:
                poses, cost = trial, trial_cost
                lam = max(lam * 0.3, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no damping level lowers the cost: stationary point reached
            converged = True
            break
        if float(np.linalg.norm(delta)) < tol:
            converged = True
            break

    result = PoseGraphResult(poses, converged, iterations, initial_cost, cost)
    if not converged:
        raise NotConverged("pose graph did not converge", result)
    return result
