"""4D imaging-radar / inertial odometry and mapping toolkit.

Modules
-------
manifold     rotation / rigid-transform algebra
state        24-DOF navigation state and its error-state operators
preprocess   relaxation filtering of raw radar scans
egovel       robust single-scan ego-velocity (graduated non-convexity)
eskf         error-state iterated EKF (propagation + updates)
submap       incremental global-frame point map with exact k-NN
scancontext  polar-grid place recognition descriptors
gicp         distribution-to-distribution scan registration
posegraph    SE(3) pose-graph optimization
sim          synthetic scenario generator (test oracle)
dataset      recording formats, trajectories, map export
metrics      APE / RPE / closure-error evaluation
pipeline     end-to-end odometry / SLAM orchestration
cli          command-line entry point
"""

from .egovel import (EgoVelocityEstimate, GncParams, estimate_ego_velocity_gnc,
                     predict_doppler, weighted_lsq_velocity)
from .eskf import (NoiseParams, ScanMatchConfig, point_residual, propagate,
                   update_scan_to_submap, update_velocity)
from .manifold import (RigidTransform, se3_exp, se3_log, skew, so3_exp,
                       so3_log, so3_right_jacobian)
from .preprocess import RelaxationFilterParams, relaxation_filter
from .state import NavState, boxminus, boxplus
from .submap import MapPoint, Submap, local_covariance
from .types import ImuSample, RadarPoint, RadarScan

__version__ = "0.1.0"

__all__ = [
    "EgoVelocityEstimate", "GncParams", "ImuSample", "MapPoint", "NavState",
    "NoiseParams", "RadarPoint", "RadarScan", "RelaxationFilterParams",
    "RigidTransform", "ScanMatchConfig", "Submap", "boxminus", "boxplus",
    "estimate_ego_velocity_gnc", "local_covariance", "point_residual",
    "predict_doppler", "propagate", "relaxation_filter", "se3_exp", "se3_log",
    "skew", "so3_exp", "so3_log", "so3_right_jacobian",
    "update_scan_to_submap", "update_velocity", "weighted_lsq_velocity",
]
