"""Dual-camera arthroscopy rig toolkit: calibration, scale-recovery fusion,
trajectory/reconstruction metrics, a synthetic rig simulator, and a CLI.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    PinholeCamera,
    PointCloud,
    RigidTransform,
    Rotation,
    SimilarityTransform,
    Trajectory,
    apply_sim3,
    compose,
    geodesic_angle,
    interpolate_pose,
    invert,
    project,
)
