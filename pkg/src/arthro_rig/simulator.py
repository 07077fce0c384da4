"""Synthetic rig generator: ground-truth trajectories, dual-camera tracks
through a known hand-eye transform, scale-ambiguous local windows,
checkerboard views, and joint-surface point clouds.

Everything is seed-deterministic: identical config + seed gives
bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import CalibrationObservation, PlanarTarget
from .errors import InputError, RangeError
from .fusion import LocalMap
from .geometry import (
    PinholeCamera,
    PointCloud,
    RigidTransform,
    Rotation,
    SimilarityTransform,
    Trajectory,
)


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 0.0  # px, per coordinate
    pos_sigma: float = 0.0  # mm, per axis
    rot_sigma: float = 0.0  # deg, per axis of the perturbation rotvec
    outlier_fraction: float = 0.0
    outlier_magnitude: float = 0.0  # mm or px depending on consumer
    seed: int = 0

    def __post_init__(self):
        if min(self.pixel_sigma, self.pos_sigma, self.rot_sigma) < 0:
            raise InputError("noise sigmas must be non-negative")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise InputError("outlier_fraction must be in [0, 1]")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


NOISELESS = NoiseModel()


def _perturb_pose(pose: RigidTransform, rng, pos_sigma: float,
                  rot_sigma_deg: float) -> RigidTransform:
    dp = rng.normal(0.0, pos_sigma, 3) if pos_sigma > 0 else np.zeros(3)
    if rot_sigma_deg > 0:
        dr = Rotation.from_rotvec(rng.normal(
            0.0, math.radians(rot_sigma_deg), 3))
    else:
        dr = Rotation.identity()
    return RigidTransform(pose.rotation.multiply(dr), pose.translation + dp)


def _random_rotation(rng) -> Rotation:
    return Rotation(rng.normal(size=4))


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float = 10.0  # s
    rate: float = 30.0  # Hz
    kind: str = "lissajous"  # or "screw"
    amplitude: float = 20.0  # mm
    omega: float = 1.0  # rad/s, base angular frequency of the figure
    # screw parameters: constant twist about `screw_axis`
    screw_axis: tuple = (0.0, 0.0, 1.0)
    screw_rot_rate_deg_s: float = 10.0
    screw_velocity: tuple = (5.0, 0.0, 0.0)  # mm/s
    seed: int = 0


def gen_trajectory(cfg: TrajectoryConfig = TrajectoryConfig()) -> Trajectory:
    """C2-smooth analytic motion sampled at cfg.rate."""
    if cfg.duration <= 0 or cfg.rate <= 0:
        raise InputError("duration and rate must be positive")
    n = int(round(cfg.duration * cfg.rate)) + 1
    times = np.arange(n) / cfg.rate
    if cfg.kind == "lissajous":
        A, w = cfg.amplitude, cfg.omega
        pos = np.stack([A * np.sin(w * times),
                        A * np.sin(2 * w * times),
                        0.3 * A * np.sin(3 * w * times)], axis=1)
        quats = []
        for t in times:
            rv = np.array([0.3 * math.sin(0.4 * w * t),
                           0.3 * math.sin(0.5 * w * t + 1.0),
                           0.3 * math.sin(0.3 * w * t + 2.0)])
            quats.append(Rotation.from_rotvec(rv).q)
    elif cfg.kind == "screw":
        axis = np.asarray(cfg.screw_axis, dtype=float)
        norm = np.linalg.norm(axis)
        axis = axis / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
        rate = math.radians(cfg.screw_rot_rate_deg_s)
        vel = np.asarray(cfg.screw_velocity, dtype=float)
        pos = times[:, None] * vel
        quats = [Rotation.from_rotvec(axis * rate * t).q for t in times]
    else:
        raise InputError(f"unknown trajectory kind {cfg.kind!r}")
    return Trajectory(times, quats, pos, frame_id="global", unit="mm")


def lissajous_rms_linear_accel(cfg: TrajectoryConfig) -> float:
    """Closed-form RMS |a| of the lissajous figure over whole periods."""
    A, w = cfg.amplitude, cfg.omega
    # a = -A w^2 (sin wt, 4 sin 2wt, 2.7 sin 3wt); mean sin^2 = 1/2
    return A * w * w * math.sqrt((1.0 + 16.0 + 2.7 ** 2) / 2.0)


# ---------------------------------------------------------------------------
# rig simulation


def simulate_rig(gt_scope: Trajectory, hand_eye: RigidTransform,
                 noise: NoiseModel = NOISELESS):
    """External track (gt_scope o hand_eye^-1 per sample) and a measured
    scope track, both perturbed by the pose noise model."""
    rng = noise.rng()
    he_inv = hand_eye.invert()
    ext_poses, scope_poses = [], []
    for i in range(len(gt_scope)):
        ext = gt_scope.pose(i).compose(he_inv)
        ext_poses.append(_perturb_pose(ext, rng, noise.pos_sigma,
                                       noise.rot_sigma))
        scope_poses.append(_perturb_pose(gt_scope.pose(i), rng,
                                         noise.pos_sigma, noise.rot_sigma))
    external = Trajectory.from_poses(zip(gt_scope.timestamps, ext_poses),
                                     frame_id="global", unit="mm")
    scope_measured = Trajectory.from_poses(zip(gt_scope.timestamps, scope_poses),
                                           frame_id="global", unit="mm")
    return external, scope_measured


def simulate_local_maps(gt_scope: Trajectory, windows: list,
                        scales: list, noise: NoiseModel = NOISELESS,
                        surface: PointCloud | None = None,
                        points_per_window: int = 100,
                        identity_frames: bool = False) -> list[LocalMap]:
    """Scale-ambiguous local windows: each trajectory slice re-expressed in a
    random local frame and multiplied by its scale.

    Sparse points are drawn from `surface` when given (so fused output can
    be scored against it), else scattered near the trajectory.  Noise is
    applied in local units scaled so its metric size equals pos_sigma.
    """
    if len(windows) != len(scales):
        raise InputError("one scale per window required")
    rng = noise.rng()
    t0, t1 = gt_scope.timestamps[0], gt_scope.timestamps[-1]
    maps = []
    for k, ((w0, w1), scale) in enumerate(zip(windows, scales)):
        if scale <= 0:
            raise InputError(f"window {k}: scale must be positive")
        if w0 < t0 - 1e-9 or w1 > t1 + 1e-9:
            raise RangeError(
                f"window [{w0}, {w1}] outside trajectory span [{t0}, {t1}]")
        sl = gt_scope.slice_time(w0, w1)
        if identity_frames:
            frame = RigidTransform.identity()
        else:
            frame = RigidTransform(_random_rotation(rng),
                                   rng.uniform(-100.0, 100.0, 3))
        # local = scale * frame(global): a similarity with the planted scale
        to_local = SimilarityTransform(scale, frame.rotation,
                                       scale * frame.translation)
        poses = []
        for i in range(len(sl)):
            p = sl.pose(i)
            local = RigidTransform(frame.rotation.multiply(p.rotation),
                                   to_local.apply(p.translation))
            local = _perturb_pose(local, rng, noise.pos_sigma * scale,
                                  noise.rot_sigma)
            poses.append(local)
        traj = Trajectory.from_poses(zip(sl.timestamps, poses),
                                     frame_id=f"window_{k:02d}", unit="")
        if surface is not None and len(surface) > 0:
            count = min(points_per_window, len(surface))
            idx = rng.choice(len(surface), size=count, replace=False)
            pts_global = surface.points[idx]
        else:
            idx = rng.integers(0, len(sl), size=points_per_window)
            pts_global = sl.positions[idx] + rng.normal(0.0, 5.0,
                                                        (points_per_window, 3))
        pts_local = to_local.apply(pts_global)
        if noise.pos_sigma > 0:
            pts_local = pts_local + rng.normal(
                0.0, noise.pos_sigma * scale, pts_local.shape)
        maps.append(LocalMap(trajectory=traj,
                             points=PointCloud(pts_local,
                                               frame_id=f"window_{k:02d}"),
                             window_id=f"window_{k:02d}"))
    return maps


# ---------------------------------------------------------------------------
# calibration views


def simulate_calibration_views(cam: PinholeCamera, target: PlanarTarget,
                               n_views: int, noise: NoiseModel = NOISELESS,
                               depth_range: tuple = (300.0, 800.0),
                               max_tilt_deg: float = 55.0):
    """Random in-volume target poses projected through `cam`, with pixel
    noise and (optionally) a planted fraction of corrupted outlier views.

    Returns [(CalibrationObservation, true target->camera pose), ...].
    """
    if n_views < 1:
        raise InputError("need at least one view")
    rng = noise.rng()
    corners = target.corners()
    center = corners.mean(axis=0)
    views = []
    attempts_per_view = 200
    for k in range(n_views):
        obs_pts = None
        for _ in range(attempts_per_view):
            tilt = rng.uniform(0.0, math.radians(max_tilt_deg))
            azim = rng.uniform(0.0, 2 * math.pi)
            roll = rng.uniform(0.0, 2 * math.pi)
            tilt_axis = np.array([math.cos(azim), math.sin(azim), 0.0])
            R = (Rotation.from_axis_angle(tilt_axis, tilt)
                 .multiply(Rotation.from_axis_angle([0, 0, 1], roll)))
            depth = rng.uniform(*depth_range)
            u = rng.uniform(0.3, 0.7) * cam.width
            v = rng.uniform(0.3, 0.7) * cam.height
            aim = np.array([(u - cam.cx) / cam.fx * depth,
                            (v - cam.cy) / cam.fy * depth,
                            depth])
            t = aim - R.apply(center)
            pose = RigidTransform(R, t)
            p_cam = pose.apply(corners)
            if np.any(p_cam[:, 2] <= 1.0):
                continue
            px = cam.project(p_cam)
            if (px[:, 0].min() < 2 or px[:, 1].min() < 2
                    or px[:, 0].max() > cam.width - 3
                    or px[:, 1].max() > cam.height - 3):
                continue
            obs_pts = px
            break
        if obs_pts is None:
            raise RangeError(
                "could not place the target inside the image; widen the "
                "depth range or shrink the target")
        if noise.pixel_sigma > 0:
            obs_pts = obs_pts + rng.normal(0.0, noise.pixel_sigma,
                                           obs_pts.shape)
        views.append([CalibrationObservation(view_id=f"view_{k:03d}",
                                             image_points=obs_pts), pose])
    n_out = int(round(noise.outlier_fraction * n_views))
    if n_out > 0:
        out_idx = rng.choice(n_views, size=n_out, replace=False)
        for i in out_idx:
            obs, pose = views[i]
            dirs = rng.normal(size=obs.image_points.shape)
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            corrupted = obs.image_points + noise.outlier_magnitude * dirs
            views[i] = [CalibrationObservation(view_id=obs.view_id,
                                               image_points=corrupted), pose]
    return [(obs, pose) for obs, pose in views]


def simulate_shaft_validation(hand_eye: RigidTransform, cam: PinholeCamera,
                              target: PlanarTarget, n_views: int,
                              noise: NoiseModel = NOISELESS,
                              depth_range: tuple = (150.0, 400.0)):
    """Validation tuples for shaft-offset compensation: external poses (in
    the target's frame) plus scope-camera observations consistent with the
    given hand-eye.  The scope camera sees the target through
    external_pose o hand_eye."""
    views = simulate_calibration_views(cam, target, n_views, noise,
                                       depth_range=depth_range)
    out = []
    for obs, cam_from_target in views:
        ext = cam_from_target.invert().compose(hand_eye.invert())
        out.append((ext, target, obs))
    return out


# ---------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class SurfaceConfig:
    shape: str = "sphere_patch"  # or "ellipsoid_patch"
    radius: float = 25.0  # mm
    extent_deg: float = 60.0  # polar half-angle of the patch
    density: float = 2.0  # points per mm^2
    noise_sigma: float = 0.0  # mm, along the surface normal
    seed: int = 0
    center: tuple = (0.0, 0.0, 0.0)


def sample_surface(cfg: SurfaceConfig = SurfaceConfig()) -> PointCloud:
    """Quasi-uniform (Fibonacci spiral) samples on a spherical or ellipsoidal
    cap, with optional Gaussian noise along the normal."""
    if cfg.radius <= 0 or cfg.density <= 0:
        raise InputError("radius and density must be positive")
    if cfg.shape not in ("sphere_patch", "ellipsoid_patch"):
        raise InputError(f"unknown surface shape {cfg.shape!r}")
    rng = np.random.default_rng(cfg.seed)
    extent = math.radians(cfg.extent_deg)
    cap_area = 2 * math.pi * cfg.radius ** 2 * (1 - math.cos(extent))
    n = max(int(round(cfg.density * cap_area)), 4)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    k = np.arange(n)
    z = 1.0 - (1 - math.cos(extent)) * (k + 0.5) / n
    r_xy = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = golden * k
    unit = np.stack([r_xy * np.cos(phi), r_xy * np.sin(phi), z], axis=1)
    axes = np.array([1.0, 0.8, 0.6]) if cfg.shape == "ellipsoid_patch" \
        else np.ones(3)
    pts = cfg.radius * unit * axes
    if cfg.noise_sigma > 0:
        if cfg.shape == "sphere_patch":
            normals = unit
        else:
            normals = unit / axes
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        pts = pts + normals * rng.normal(0.0, cfg.noise_sigma, (n, 1))
    return PointCloud(pts + np.asarray(cfg.center), frame_id="surface")


# ---------------------------------------------------------------------------
# full scenario


@dataclass
class SimScenario:
    gt_scope: Trajectory
    gt_external: Trajectory
    hand_eye: RigidTransform
    surface: PointCloud
    local_windows: list[LocalMap]
    true_window_scales: list[float]
    calib_views: list[CalibrationObservation]
    calib_view_poses: list[RigidTransform]
    camera_truth: PinholeCamera
    target: PlanarTarget
    noise: NoiseModel

    def validate(self, atol: float = 1e-9):
        """gt_external o hand_eye must reproduce gt_scope (noiseless link)."""
        for i in range(len(self.gt_scope)):
            want = self.gt_scope.pose(i)
            got = self.gt_external.pose(i).compose(self.hand_eye)
            if not got.is_close(want, atol_deg=math.degrees(atol), atol_mm=atol):
                raise InputError(
                    f"scenario inconsistent at sample {i}: external o hand_eye "
                    "does not reproduce the scope track")


def default_hand_eye() -> RigidTransform:
    """Rig offset at desk scale: external camera a few cm behind the scope."""
    return RigidTransform(
        Rotation.from_rotvec(np.array([0.15, -0.1, 0.2])),
        np.array([30.0, -15.0, 50.0]))


def default_camera(width: int = 1280, height: int = 720) -> PinholeCamera:
    return PinholeCamera(fx=800.0, fy=810.0, cx=width / 2 - 8.0,
                         cy=height / 2 + 5.0, width=width, height=height,
                         k1=-0.08, k2=0.015)


def make_scenario(seed: int = 0, noise: NoiseModel | None = None,
                  duration: float = 10.0, rate: float = 30.0,
                  n_calib_views: int = 20,
                  window_scales: tuple = (0.1, 0.5, 2.0)) -> SimScenario:
    """Build a complete, internally consistent synthetic trial."""
    noise = NOISELESS if noise is None else noise
    traj_cfg = TrajectoryConfig(duration=duration, rate=rate, seed=seed)
    gt_scope = gen_trajectory(traj_cfg)
    hand_eye = default_hand_eye()
    he_inv = hand_eye.invert()
    gt_external = gt_scope.map_poses(lambda p: p.compose(he_inv))

    surf_cfg = SurfaceConfig(center=(0.0, 0.0, 40.0), seed=seed,
                             noise_sigma=0.0)
    surface = sample_surface(surf_cfg)

    n_win = len(window_scales)
    t0, t1 = gt_scope.timestamps[0], gt_scope.timestamps[-1]
    span = (t1 - t0) / n_win
    overlap = 0.15 * span
    windows = [(t0 + i * span - (overlap if i else 0.0),
                min(t0 + (i + 1) * span + overlap, t1))
               for i in range(n_win)]
    local_windows = simulate_local_maps(
        gt_scope, windows, list(window_scales),
        replace(noise, seed=noise.seed + 1000 * seed + 1), surface=surface)

    camera_truth = default_camera()
    target = PlanarTarget(rows=6, cols=9, spacing=25.0)
    calib = simulate_calibration_views(
        camera_truth, target, n_calib_views,
        replace(noise, seed=noise.seed + 1000 * seed + 2))
    scenario = SimScenario(
        gt_scope=gt_scope, gt_external=gt_external, hand_eye=hand_eye,
        surface=surface, local_windows=local_windows,
        true_window_scales=list(window_scales),
        calib_views=[o for o, _ in calib],
        calib_view_poses=[p for _, p in calib],
        camera_truth=camera_truth, target=target, noise=noise)
    scenario.validate()
    return scenario
