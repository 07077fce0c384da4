"""Pose algebra: unit quaternions, SE(3), Sim(3), trajectories, pinhole cameras.

All lengths are millimetres internally.  Everything here is an immutable
value with pure-function operations, safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, InputError, OrderError, RangeError

_EPS = 1e-12


def _normalized(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < _EPS:
        raise InputError("quaternion norm too small to normalize")
    return q / n


class Rotation:
    """Unit quaternion (w, x, y, z).  q and -q represent the same rotation."""

    __slots__ = ("q",)

    def __init__(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (4,):
            raise InputError(f"quaternion must have 4 components, got shape {q.shape}")
        object.__setattr__(self, "q", _normalized(q))

    def __setattr__(self, *a):
        raise AttributeError("Rotation is immutable")

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_rotvec(v) -> "Rotation":
        v = np.asarray(v, dtype=float)
        angle = np.linalg.norm(v)
        if angle < 1e-12:
            # second-order series keeps exp/log round trips exact near 0
            half = 0.5 - angle * angle / 48.0
            return Rotation(np.array([1.0 - angle * angle / 8.0, *(half * v)]))
        axis = v / angle
        s = math.sin(angle / 2.0)
        return Rotation(np.array([math.cos(angle / 2.0), *(s * axis)]))

    @staticmethod
    def from_axis_angle(axis, angle_rad: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        return Rotation.from_rotvec(axis * angle_rad)

    @staticmethod
    def from_matrix(m) -> "Rotation":
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise InputError("rotation matrix must be 3x3")
        # Shepperd's method: pick the largest diagonal combination
        t = np.trace(m)
        if t > 0:
            s = math.sqrt(t + 1.0) * 2.0
            q = np.array([0.25 * s,
                          (m[2, 1] - m[1, 2]) / s,
                          (m[0, 2] - m[2, 0]) / s,
                          (m[1, 0] - m[0, 1]) / s])
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = np.array([(m[2, 1] - m[1, 2]) / s,
                          0.25 * s,
                          (m[0, 1] + m[1, 0]) / s,
                          (m[0, 2] + m[2, 0]) / s])
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = np.array([(m[0, 2] - m[2, 0]) / s,
                          (m[0, 1] + m[1, 0]) / s,
                          0.25 * s,
                          (m[1, 2] + m[2, 1]) / s])
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = np.array([(m[1, 0] - m[0, 1]) / s,
                          (m[0, 2] + m[2, 0]) / s,
                          (m[1, 2] + m[2, 1]) / s,
                          0.25 * s])
        return Rotation(q)

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def as_rotvec(self) -> np.ndarray:
        q = self.q if self.q[0] >= 0 else -self.q
        vec = q[1:]
        sin_half = np.linalg.norm(vec)
        angle = 2.0 * math.atan2(sin_half, q[0])
        if sin_half < 1e-12:
            return vec * (2.0 + angle * angle / 12.0)
        return vec * (angle / sin_half)

    def multiply(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.q
        w2, x2, y2, z2 = other.q
        return Rotation(np.array([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]))

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation(np.array([w, -x, -y, -z]))

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.as_matrix().T

    def slerp(self, other: "Rotation", u: float) -> "Rotation":
        q0, q1 = self.q, other.q
        dot = float(np.dot(q0, q1))
        if dot < 0.0:
            q1, dot = -q1, -dot
        dot = min(dot, 1.0)
        if dot > 1.0 - 1e-10:
            return Rotation(q0 + u * (q1 - q0))
        theta = math.acos(dot)
        s = math.sin(theta)
        return Rotation((math.sin((1 - u) * theta) / s) * q0
                        + (math.sin(u * theta) / s) * q1)

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic angle to `other`, radians, in [0, pi]."""
        rel = self.inverse().multiply(other)
        q = rel.q if rel.q[0] >= 0 else -rel.q
        return 2.0 * math.atan2(float(np.linalg.norm(q[1:])), float(q[0]))

    def is_close(self, other: "Rotation", atol_rad: float = 1e-9) -> bool:
        return self.angle_to(other) <= atol_rad

    def __repr__(self):
        return f"Rotation(q={self.q!r})"


def geodesic_angle(a: Rotation, b: Rotation) -> float:
    """Angle between two rotations, degrees, in [0, 180]."""
    return math.degrees(a.angle_to(b))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3): p -> R p + t, translation in millimetres."""

    rotation: Rotation = field(default_factory=Rotation.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,):
            raise InputError(f"translation must be a 3-vector, got shape {t.shape}")
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return RigidTransform(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def apply(self, p) -> np.ndarray:
        return self.rotation.apply(p) + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: result(p) = self(other(p))."""
        return RigidTransform(
            self.rotation.multiply(other.rotation),
            self.rotation.apply(other.translation) + self.translation,
        )

    def invert(self) -> "RigidTransform":
        rinv = self.rotation.inverse()
        return RigidTransform(rinv, -rinv.apply(self.translation))

    def is_close(self, other: "RigidTransform",
                 atol_deg: float = 1e-9, atol_mm: float = 1e-9) -> bool:
        return (geodesic_angle(self.rotation, other.rotation) <= atol_deg
                and np.linalg.norm(self.translation - other.translation) <= atol_mm)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.invert()


@dataclass(frozen=True)
class SimilarityTransform:
    """Sim(3): p -> scale * R p + t."""

    scale: float = 1.0
    rotation: Rotation = field(default_factory=Rotation.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.scale > 0:
            raise InputError(f"similarity scale must be positive, got {self.scale}")
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,):
            raise InputError(f"translation must be a 3-vector, got shape {t.shape}")
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform()

    @staticmethod
    def from_rigid(t: RigidTransform) -> "SimilarityTransform":
        return SimilarityTransform(1.0, t.rotation, t.translation)

    def apply(self, p) -> np.ndarray:
        return self.scale * self.rotation.apply(p) + self.translation

    def apply_pose(self, pose: RigidTransform) -> RigidTransform:
        """Transport an SE(3) pose: position mapped through the similarity,
        orientation rotated (scale does not act on orientation)."""
        return RigidTransform(self.rotation.multiply(pose.rotation),
                              self.apply(pose.translation))

    def compose_rigid_left(self, g: RigidTransform) -> "SimilarityTransform":
        """g o self as a similarity."""
        return SimilarityTransform(
            self.scale,
            g.rotation.multiply(self.rotation),
            g.rotation.apply(self.translation) + g.translation,
        )

    def invert(self) -> "SimilarityTransform":
        rinv = self.rotation.inverse()
        return SimilarityTransform(
            1.0 / self.scale, rinv, -rinv.apply(self.translation) / self.scale)


def apply_sim3(s: SimilarityTransform, p) -> np.ndarray:
    return s.apply(p)


class Trajectory:
    """Time-stamped pose sequence; timestamps strictly increasing.

    Stored columnar (timestamps (N,), quaternions (N,4) wxyz, positions
    (N,3)) so metric code can stay vectorized.
    """

    __slots__ = ("timestamps", "quats", "positions", "frame_id", "unit")

    def __init__(self, timestamps, quats, positions, frame_id: str = "",
                 unit: str = "mm"):
        ts = np.asarray(timestamps, dtype=float)
        q = np.asarray(quats, dtype=float)
        p = np.asarray(positions, dtype=float)
        if ts.ndim != 1 or q.shape != (ts.size, 4) or p.shape != (ts.size, 3):
            raise InputError("trajectory arrays have inconsistent shapes")
        if ts.size == 0:
            raise InputError("trajectory must be non-empty")
        if np.any(np.diff(ts) <= 0):
            raise OrderError("trajectory timestamps must be strictly increasing")
        norms = np.linalg.norm(q, axis=1)
        self.timestamps = ts
        self.quats = q / norms[:, None]
        self.positions = p
        self.frame_id = frame_id
        self.unit = unit

    @staticmethod
    def from_poses(samples, frame_id: str = "", unit: str = "mm") -> "Trajectory":
        """samples: iterable of (timestamp, RigidTransform)."""
        samples = list(samples)
        ts = [t for t, _ in samples]
        qs = [pose.rotation.q for _, pose in samples]
        ps = [pose.translation for _, pose in samples]
        return Trajectory(ts, qs, ps, frame_id=frame_id, unit=unit)

    def __len__(self) -> int:
        return self.timestamps.size

    def pose(self, i: int) -> RigidTransform:
        return RigidTransform(Rotation(self.quats[i]), self.positions[i])

    def poses(self):
        return [self.pose(i) for i in range(len(self))]

    def slice_time(self, t0: float, t1: float) -> "Trajectory":
        mask = (self.timestamps >= t0) & (self.timestamps <= t1)
        if not mask.any():
            raise RangeError(f"no samples in [{t0}, {t1}]")
        return Trajectory(self.timestamps[mask], self.quats[mask],
                          self.positions[mask], self.frame_id, self.unit)

    def map_poses(self, fn, frame_id: str | None = None) -> "Trajectory":
        poses = [fn(self.pose(i)) for i in range(len(self))]
        return Trajectory.from_poses(
            zip(self.timestamps, poses),
            frame_id=self.frame_id if frame_id is None else frame_id,
            unit=self.unit)


def interpolate_pose(traj: Trajectory, t: float) -> RigidTransform:
    """Pose at time t: lerp translation, slerp rotation between brackets."""
    ts = traj.timestamps
    if t < ts[0] or t > ts[-1]:
        raise RangeError(
            f"time {t} outside trajectory span [{ts[0]}, {ts[-1]}]")
    k = int(np.searchsorted(ts, t))
    if k < len(ts) and ts[k] == t:
        return traj.pose(k)
    lo, hi = k - 1, k
    u = (t - ts[lo]) / (ts[hi] - ts[lo])
    pos = (1 - u) * traj.positions[lo] + u * traj.positions[hi]
    rot = Rotation(traj.quats[lo]).slerp(Rotation(traj.quats[hi]), u)
    return RigidTransform(rot, pos)


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole with two radial distortion terms."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError("principal point must lie inside the image")

    def distort(self, xy: np.ndarray) -> np.ndarray:
        """Apply radial distortion to normalized coords, shape (..., 2)."""
        r2 = np.sum(xy * xy, axis=-1, keepdims=True)
        return xy * (1.0 + self.k1 * r2 + self.k2 * r2 * r2)

    def undistort(self, xy_d: np.ndarray, max_iter: int = 20,
                  tol: float = 1e-10) -> np.ndarray:
        """Invert distort() by fixed-point iteration."""
        xy_d = np.asarray(xy_d, dtype=float)
        xy = xy_d.copy()
        for _ in range(max_iter):
            r2 = np.sum(xy * xy, axis=-1, keepdims=True)
            xy_new = xy_d / (1.0 + self.k1 * r2 + self.k2 * r2 * r2)
            if np.max(np.abs(xy_new - xy)) < tol:
                xy = xy_new
                break
            xy = xy_new
        return xy

    def project(self, p_cam) -> np.ndarray:
        """Project camera-frame points (..., 3) to pixels (..., 2)."""
        p = np.asarray(p_cam, dtype=float)
        z = p[..., 2]
        if np.any(z <= 0):
            raise BehindCameraError("point(s) at or behind the camera plane")
        xy = p[..., :2] / z[..., None]
        xy = self.distort(xy)
        return xy * np.array([self.fx, self.fy]) + np.array([self.cx, self.cy])


def project(cam: PinholeCamera, p_cam) -> np.ndarray:
    return cam.project(p_cam)


@dataclass(frozen=True)
class PointCloud:
    """Point set in millimetres."""

    points: np.ndarray
    frame_id: str = ""

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3:
            raise InputError(f"points must be (N, 3), got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InputError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, t) -> "PointCloud":
        """Apply a RigidTransform or SimilarityTransform to every point."""
        return PointCloud(t.apply(self.points), frame_id=self.frame_id)
