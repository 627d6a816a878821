"""Multi-user AR coordination core.

Shared-table coordination for multiple tracked users: monocular scale
calibration from a known-size marker, table-plane estimation with RANSAC
and an SVD refinement, plane-anchored coordinate alignment between users,
a TCP pose/boundary exchange server, convex intersection of table
boundaries, depth-compare occlusion compositing, and relative-pose-error
evaluation of the resulting trajectories. Simulated SLAM clients drive the
whole pipeline end to end without AR hardware.
"""

from .calibration import (
    Correspondence,
    MarkerSpec,
    apply_scale,
    physical_distance,
    scale_factor,
    select_top_pair,
)
from .coordination import (
    SessionMode,
    UserSlot,
    camera_in_plane,
    collaboration_angle,
    effective_plane_pose,
    peer_in_local_slam,
    rotate_plane_frame,
    slam_to_plane,
)
from .evaluation import ErrorSummary, Trajectory, rpe, summarize
from .geom3d import (
    RigidTransform,
    compose,
    invert,
    point3,
    rot_x,
    rot_y,
    rot_z,
    rotation_angle_between,
    transform_point,
    translate,
)
from .occlusion import DepthMap, OcclusionMask, composite, occlusion_mask
from .planefit import (
    PlaneFrame,
    PlaneModel,
    RansacConfig,
    build_plane_frame,
    ransac_plane,
    refine_plane_lsq,
)
from .polygon import Polygon2, area, contains_point, convex_hull, intersect_all, intersect_convex
from .server import CoordinationServer, Session
from .simclient import (
    ClientReport,
    NoiseModel,
    Scenario,
    SimulatedSlam,
    Table,
    generate_scene,
    make_tabletop_scenario,
    run_client,
    run_session,
    simulate_slam_frame,
)

__version__ = "0.1.0"

__all__ = [
    "ClientReport",
    "CoordinationServer",
    "Correspondence",
    "DepthMap",
    "ErrorSummary",
    "MarkerSpec",
    "NoiseModel",
    "OcclusionMask",
    "PlaneFrame",
    "PlaneModel",
    "Polygon2",
    "RansacConfig",
    "RigidTransform",
    "Scenario",
    "Session",
    "SessionMode",
    "SimulatedSlam",
    "Table",
    "Trajectory",
    "UserSlot",
    "apply_scale",
    "area",
    "build_plane_frame",
    "camera_in_plane",
    "collaboration_angle",
    "compose",
    "composite",
    "contains_point",
    "convex_hull",
    "effective_plane_pose",
    "generate_scene",
    "intersect_all",
    "intersect_convex",
    "invert",
    "make_tabletop_scenario",
    "occlusion_mask",
    "peer_in_local_slam",
    "physical_distance",
    "point3",
    "ransac_plane",
    "refine_plane_lsq",
    "rot_x",
    "rot_y",
    "rot_z",
    "rotate_plane_frame",
    "rotation_angle_between",
    "rpe",
    "run_client",
    "run_session",
    "scale_factor",
    "select_top_pair",
    "simulate_slam_frame",
    "slam_to_plane",
    "summarize",
    "transform_point",
    "translate",
]
