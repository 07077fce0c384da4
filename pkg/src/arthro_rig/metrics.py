"""Evaluation suite: trajectory errors (ATE, RTE), smoothness, point-cloud
distances (nearest-neighbor RMSE, Hausdorff), rigid ICP, PSNR and SSIM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d
from scipy.spatial import cKDTree

from .errors import InputError, InsufficientDataError, NoOverlapError
from .fusion import associate_by_time, umeyama_sim3
from .geometry import (
    PointCloud,
    RigidTransform,
    Rotation,
    SimilarityTransform,
    Trajectory,
    geodesic_angle,
    interpolate_pose,
)


@dataclass(frozen=True)
class TrajError:
    trans_rmse: float  # mm
    rot_rmse: float  # deg
    per_sample: list = field(default_factory=list)  # (timestamp, mm, deg)

    def to_dict(self) -> dict:
        return {"trans_rmse_mm": self.trans_rmse, "rot_rmse_deg": self.rot_rmse,
                "n_samples": len(self.per_sample)}


@dataclass(frozen=True)
class SmoothnessStats:
    rms_linear_accel: float  # mm/s^2
    rms_angular_accel: float  # rad/s^2

    def to_dict(self) -> dict:
        return {"rms_linear_accel_mm_s2": self.rms_linear_accel,
                "rms_angular_accel_rad_s2": self.rms_angular_accel}


@dataclass
class MetricReport:
    """Full score set for one trial; None marks a metric as not computed."""

    ate: TrajError | None = None
    rte: TrajError | None = None
    smoothness_gt: SmoothnessStats | None = None
    smoothness_pred: SmoothnessStats | None = None
    rmse_mm: float | None = None
    hausdorff_mm: float | None = None
    psnr_db: float | None = None
    ssim: float | None = None

    def to_dict(self) -> dict:
        def enc(v):
            if v is None:
                return None
            if isinstance(v, (TrajError, SmoothnessStats)):
                return v.to_dict()
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v
        return {k: enc(getattr(self, k)) for k in
                ("ate", "rte", "smoothness_gt", "smoothness_pred",
                 "rmse_mm", "hausdorff_mm", "psnr_db", "ssim")}


# ---------------------------------------------------------------------------
# trajectory errors


def _associated_poses(est: Trajectory, gt: Trajectory, max_dt: float):
    assoc = associate_by_time(est, gt, max_dt=max_dt)
    est_poses = [a for a, _, _ in assoc]
    gt_poses = [b for _, b, _ in assoc]
    times = [t for _, _, t in assoc]
    return est_poses, gt_poses, times


def ate(est: Trajectory, gt: Trajectory, mode: str = "rigid",
        max_dt: float = 0.05) -> TrajError:
    """Absolute trajectory error with optional global pre-alignment.

    mode: 'none' (compare as-is), 'rigid' (Umeyama, scale fixed to 1) or
    'similarity' (free scale).
    """
    if mode not in ("none", "rigid", "similarity"):
        raise InputError(f"unknown ATE mode {mode!r}")
    est_poses, gt_poses, times = _associated_poses(est, gt, max_dt)
    if len(times) < 2:
        raise NoOverlapError("ATE needs >= 2 associated samples")
    if mode == "none":
        S = SimilarityTransform.identity()
    else:
        src = np.array([p.translation for p in est_poses])
        dst = np.array([p.translation for p in gt_poses])
        S = umeyama_sim3(src, dst, with_scale=(mode == "similarity"))
    per_sample = []
    for t, pe, pg in zip(times, est_poses, gt_poses):
        pe_aligned = S.apply_pose(pe)
        terr = float(np.linalg.norm(pg.translation - pe_aligned.translation))
        rerr = geodesic_angle(pg.rotation, pe_aligned.rotation)
        per_sample.append((t, terr, rerr))
    trans = np.array([s[1] for s in per_sample])
    rot = np.array([s[2] for s in per_sample])
    return TrajError(trans_rmse=float(np.sqrt(np.mean(trans ** 2))),
                     rot_rmse=float(np.sqrt(np.mean(rot ** 2))),
                     per_sample=per_sample)


def rte(est: Trajectory, gt: Trajectory, delta: int = 1,
        max_dt: float = 0.05) -> TrajError:
    """Relative trajectory error over a fixed step; alignment-free."""
    if delta < 1:
        raise InputError("delta must be >= 1")
    est_poses, gt_poses, times = _associated_poses(est, gt, max_dt)
    n = len(times)
    if n < delta + 1:
        raise InsufficientDataError(
            f"RTE with delta={delta} needs >= {delta + 1} associated samples, "
            f"got {n}")
    per_sample = []
    for i in range(n - delta):
        rel_gt = gt_poses[i].invert().compose(gt_poses[i + delta])
        rel_est = est_poses[i].invert().compose(est_poses[i + delta])
        err = rel_gt.invert().compose(rel_est)
        terr = float(np.linalg.norm(err.translation))
        rerr = geodesic_angle(Rotation.identity(), err.rotation)
        per_sample.append((times[i], terr, rerr))
    trans = np.array([s[1] for s in per_sample])
    rot = np.array([s[2] for s in per_sample])
    return TrajError(trans_rmse=float(np.sqrt(np.mean(trans ** 2))),
                     rot_rmse=float(np.sqrt(np.mean(rot ** 2))),
                     per_sample=per_sample)


def smoothness(traj: Trajectory, resample_dt: float = 1.0 / 30.0) -> SmoothnessStats:
    """RMS linear acceleration (central differences) and angular
    acceleration (finite-differenced body angular velocity) after uniform
    resampling."""
    span = traj.timestamps[-1] - traj.timestamps[0]
    if len(traj) < 3 or span < 2 * resample_dt:
        raise InsufficientDataError(
            "smoothness needs >= 3 samples spanning >= 2 resample intervals")
    n = int(math.floor(span / resample_dt)) + 1
    times = traj.timestamps[0] + resample_dt * np.arange(n)
    poses = [interpolate_pose(traj, float(t)) for t in times]
    pos = np.array([p.translation for p in poses])
    dt = resample_dt
    accel = (pos[2:] - 2 * pos[1:-1] + pos[:-2]) / (dt * dt)
    rms_lin = float(np.sqrt(np.mean(np.sum(accel ** 2, axis=1))))

    omegas = []
    for i in range(n - 1):
        rel = poses[i].rotation.inverse().multiply(poses[i + 1].rotation)
        omegas.append(rel.as_rotvec() / dt)
    omegas = np.array(omegas)
    alpha = np.diff(omegas, axis=0) / dt
    rms_ang = float(np.sqrt(np.mean(np.sum(alpha ** 2, axis=1))))
    return SmoothnessStats(rms_linear_accel=rms_lin, rms_angular_accel=rms_ang)


# ---------------------------------------------------------------------------
# point clouds


def _require_points(*clouds: PointCloud):
    for c in clouds:
        if len(c) == 0:
            raise InputError("point cloud metric requires non-empty clouds")


def nn_rmse(src: PointCloud, ref: PointCloud) -> float:
    """RMS distance from each src point to its nearest ref point (TRE)."""
    _require_points(src, ref)
    tree = cKDTree(ref.points)
    d, _ = tree.query(src.points)
    return float(np.sqrt(np.mean(d ** 2)))


def hausdorff(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Hausdorff distance between two clouds."""
    _require_points(a, b)
    da, _ = cKDTree(b.points).query(a.points)
    db, _ = cKDTree(a.points).query(b.points)
    return float(max(da.max(), db.max()))


@dataclass(frozen=True)
class IcpConfig:
    max_iter: int = 50
    tol_mm: float = 1e-4
    init: RigidTransform = field(default_factory=RigidTransform.identity)


def icp_rigid(src: PointCloud, dst: PointCloud,
              cfg: IcpConfig = IcpConfig()) -> RigidTransform:
    """Point-to-point ICP (rigid Umeyama per iteration); converges to a
    local optimum, the caller inspects the residual."""
    _require_points(src, dst)
    tree = cKDTree(dst.points)
    transform = cfg.init
    prev_rms = None
    for _ in range(cfg.max_iter):
        moved = transform.apply(src.points)
        d, idx = tree.query(moved)
        rms = float(np.sqrt(np.mean(d ** 2)))
        if prev_rms is not None and abs(prev_rms - rms) < cfg.tol_mm:
            break
        prev_rms = rms
        sim = umeyama_sim3(src.points, dst.points[idx], with_scale=False)
        transform = RigidTransform(sim.rotation, sim.translation)
    return transform


# ---------------------------------------------------------------------------
# images


def _check_images(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise InputError(f"image shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise InputError(f"images must be (H, W) or (H, W, 3), got {a.shape}")


def luminance(img: np.ndarray) -> np.ndarray:
    """Float luminance: grayscale passthrough or 0.299/0.587/0.114 RGB mix."""
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img
    return img @ np.array([0.299, 0.587, 0.114])


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(255^2 / MSE) over all samples; +inf for identical images."""
    _check_images(np.asarray(a), np.asarray(b))
    af = np.asarray(a, dtype=float)
    bf = np.asarray(b, dtype=float)
    mse = float(np.mean((af - bf) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = (0.01 * 255.0) ** 2
_SSIM_C2 = (0.03 * 255.0) ** 2


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM on luminance: 11x11 Gaussian window (sigma 1.5),
    original constants, valid-region (no padding) aggregation."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_images(a, b)
    x = luminance(a)
    y = luminance(b)
    if x.shape[0] < _SSIM_WINDOW or x.shape[1] < _SSIM_WINDOW:
        raise InputError(
            f"image {x.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} "
            "SSIM window")
    w = _gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    sxx = convolve2d(x * x, w, mode="valid") - mu_x ** 2
    syy = convolve2d(y * y, w, mode="valid") - mu_y ** 2
    sxy = convolve2d(x * y, w, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + _SSIM_C1) * (2 * sxy + _SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + _SSIM_C1) * (sxx + syy + _SSIM_C2)
    return float(np.mean(num / den))
