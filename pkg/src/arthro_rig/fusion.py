"""Local-to-global registration: recover metric scale for monocular local
maps by aligning their trajectories to the external camera's metric track,
then stitch the windows into one global model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometryError,
    FusionError,
    InputError,
    InsufficientDataError,
    NoConsensusError,
    NoOverlapError,
)
from .geometry import (
    PointCloud,
    RigidTransform,
    Rotation,
    SimilarityTransform,
    Trajectory,
    interpolate_pose,
)


@dataclass(frozen=True)
class LocalMap:
    """Scale-ambiguous monocular window: trajectory + sparse points, one frame."""

    trajectory: Trajectory
    points: PointCloud
    window_id: str = ""

    def __post_init__(self):
        if len(self.trajectory) < 3:
            raise InsufficientDataError(
                f"window {self.window_id!r}: similarity alignment needs >= 3 "
                f"trajectory samples, got {len(self.trajectory)}")


@dataclass(frozen=True)
class GlobalTrack:
    """External camera trajectory (metric mm) plus the hand-eye transform
    (scope pose expressed in the external camera frame)."""

    trajectory: Trajectory
    hand_eye: RigidTransform

    def __post_init__(self):
        if self.trajectory.unit != "mm":
            raise InputError(
                f"global track must be metric mm, got unit {self.trajectory.unit!r}")


@dataclass(frozen=True)
class AlignmentResult:
    transform: SimilarityTransform
    inlier_count: int
    rms_residual: float
    window_id: str = ""


@dataclass(frozen=True)
class GlobalModel:
    fused_trajectory: Trajectory
    fused_points: PointCloud
    per_window: list[AlignmentResult]
    failures: list[dict] = field(default_factory=list)


def predict_scope_track(g: GlobalTrack) -> Trajectory:
    """Scope pose per sample: external pose composed with the hand-eye."""
    return g.trajectory.map_poses(lambda p: p.compose(g.hand_eye),
                                  frame_id="global")


def associate_by_time(a: Trajectory, b: Trajectory,
                      max_dt: float = 0.05) -> list[tuple]:
    """For each sample of `a`, interpolate `b` at that time if it falls
    inside b's span with a bracketing gap <= max_dt.  Returns
    [(pose_a, pose_b, timestamp), ...] ordered by time."""
    if max_dt <= 0:
        raise InputError("max_dt must be positive")
    out = []
    tb = b.timestamps
    for i in range(len(a)):
        t = float(a.timestamps[i])
        if t < tb[0] or t > tb[-1]:
            continue
        k = int(np.searchsorted(tb, t))
        if k < len(tb) and tb[k] == t:
            gap = 0.0
        else:
            gap = tb[k] - tb[k - 1]
        if gap > max_dt:
            continue
        out.append((a.pose(i), interpolate_pose(b, t), t))
    if not out:
        raise NoOverlapError("no time-associated samples between trajectories")
    return out


def umeyama_sim3(src, dst, with_scale: bool = True) -> SimilarityTransform:
    """Closed-form least-squares similarity mapping src points onto dst."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape:
        raise InputError(
            f"point count mismatch: {src.shape} vs {dst.shape}")
    if src.ndim != 2 or src.shape[1] != 3 or src.shape[0] < 3:
        raise InputError("need >= 3 paired 3-D points")
    n = src.shape[0]
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    ds = src - mu_s
    dd = dst - mu_d
    cov = dd.T @ ds / n
    u, d, vt = np.linalg.svd(cov)
    if d[1] < 1e-12 * max(d[0], 1e-300) or d[0] < 1e-300:
        raise DegenerateGeometryError(
            "source points are (near-)collinear; similarity is underdetermined")
    s_mat = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_mat[2, 2] = -1.0
    R = u @ s_mat @ vt
    if with_scale:
        var_s = (ds ** 2).sum() / n
        scale = float((d * np.diag(s_mat)).sum() / var_s)
        if scale <= 0:
            raise DegenerateGeometryError("non-positive similarity scale")
    else:
        scale = 1.0
    t = mu_d - scale * (R @ mu_s)
    return SimilarityTransform(scale, Rotation.from_matrix(R), t)


@dataclass(frozen=True)
class RobustAlignConfig:
    iterations: int = 200
    inlier_threshold: float = 3.0  # mm, in the destination frame
    seed: int = 0
    max_dt: float = 0.05  # s, time association gap


def robust_align(pairs, cfg: RobustAlignConfig = RobustAlignConfig(),
                 window_id: str = "") -> AlignmentResult:
    """RANSAC over 3-point minimal Umeyama hypotheses, refit on inliers.

    pairs: sequence of (src 3-vector, dst 3-vector).
    """
    src = np.asarray([p[0] for p in pairs], dtype=float)
    dst = np.asarray([p[1] for p in pairs], dtype=float)
    n = src.shape[0]
    if n < 3:
        raise InsufficientDataError(f"robust alignment needs >= 3 pairs, got {n}")
    rng = np.random.default_rng(cfg.seed)
    schedule = [rng.choice(n, size=3, replace=False)
                for _ in range(cfg.iterations)]
    best = None  # ((count, -rms), inlier_mask)
    for subset in schedule:
        try:
            hyp = umeyama_sim3(src[subset], dst[subset])
        except DegenerateGeometryError:
            continue
        res = np.linalg.norm(dst - hyp.apply(src), axis=1)
        mask = res <= cfg.inlier_threshold
        count = int(mask.sum())
        if count < 3:
            continue
        key = (count, -float(np.sqrt(np.mean(res[mask] ** 2))))
        if best is None or key > best[0]:
            best = (key, mask)
    if best is None:
        raise NoConsensusError("no similarity hypothesis reached 3 inliers")
    mask = best[1]
    transform = umeyama_sim3(src[mask], dst[mask])
    res = np.linalg.norm(dst[mask] - transform.apply(src[mask]), axis=1)
    return AlignmentResult(transform=transform,
                           inlier_count=int(mask.sum()),
                           rms_residual=float(np.sqrt(np.mean(res ** 2))),
                           window_id=window_id)


def align_window(local: LocalMap, g: GlobalTrack,
                 cfg: RobustAlignConfig = RobustAlignConfig()) -> AlignmentResult:
    """Sim(3) mapping the window's local frame into the global metric frame,
    estimated from time-associated trajectory positions."""
    scope = predict_scope_track(g)
    assoc = associate_by_time(local.trajectory, scope, max_dt=cfg.max_dt)
    pairs = [(pa.translation, pb.translation) for pa, pb, _ in assoc]
    result = robust_align(pairs, cfg, window_id=local.window_id)
    return result


def _merge_with_overlap(merged: list, window_samples: list) -> list:
    """Append window samples, linearly blending poses over the time overlap."""
    if not merged:
        return list(window_samples)
    overlap_start = window_samples[0][0]
    overlap_end = merged[-1][0]
    if overlap_start > overlap_end:
        return merged + list(window_samples)
    prev_tail = [(t, p) for t, p in merged if t >= overlap_start]
    prev_head = [(t, p) for t, p in merged if t < overlap_start]
    next_overlap = [(t, p) for t, p in window_samples if t <= overlap_end]
    next_tail = [(t, p) for t, p in window_samples if t > overlap_end]
    prev_traj = Trajectory.from_poses(prev_tail) if len(prev_tail) > 1 else None
    next_traj = Trajectory.from_poses(next_overlap) if len(next_overlap) > 1 else None
    times = sorted({t for t, _ in prev_tail} | {t for t, _ in next_overlap})
    span = max(overlap_end - overlap_start, 1e-12)
    blended = []
    for t in times:
        w = (t - overlap_start) / span

        def pose_from(traj, samples):
            if traj is not None and traj.timestamps[0] <= t <= traj.timestamps[-1]:
                return interpolate_pose(traj, t)
            # single-sample overlap: nearest sample
            return min(samples, key=lambda s: abs(s[0] - t))[1]

        pa = pose_from(prev_traj, prev_tail)
        pb = pose_from(next_traj, next_overlap)
        pos = (1 - w) * pa.translation + w * pb.translation
        rot = pa.rotation.slerp(pb.rotation, w)
        blended.append((t, RigidTransform(rot, pos)))
    return prev_head + blended + next_tail


def fuse_local_maps(windows: list[LocalMap], g: GlobalTrack,
                    cfg: RobustAlignConfig = RobustAlignConfig()) -> GlobalModel:
    """Align each window independently, transform into the global frame,
    merge trajectories (blending overlaps) and concatenate point clouds."""
    if not windows:
        raise InsufficientDataError("no local windows to fuse")
    ordered = sorted(windows, key=lambda w: w.trajectory.timestamps[0])
    results: list[AlignmentResult] = []
    failures: list[dict] = []
    merged: list = []
    all_points: list[np.ndarray] = []
    for w in ordered:
        try:
            ar = align_window(w, g, cfg)
        except (NoOverlapError, NoConsensusError, DegenerateGeometryError,
                InsufficientDataError) as e:
            failures.append({"window_id": w.window_id,
                             "category": e.category, "message": str(e)})
            continue
        results.append(ar)
        S = ar.transform
        samples = [(float(w.trajectory.timestamps[i]),
                    S.apply_pose(w.trajectory.pose(i)))
                   for i in range(len(w.trajectory))]
        merged = _merge_with_overlap(merged, samples)
        if len(w.points) > 0:
            all_points.append(S.apply(w.points.points))
    if not results:
        raise FusionError("all windows failed alignment",
                          failures=len(failures))
    # dedupe identical timestamps from the overlap union
    seen = set()
    unique = []
    for t, p in merged:
        if t in seen:
            continue
        seen.add(t)
        unique.append((t, p))
    fused_traj = Trajectory.from_poses(unique, frame_id="global", unit="mm")
    pts = (np.concatenate(all_points, axis=0) if all_points
           else np.zeros((0, 3)))
    return GlobalModel(fused_trajectory=fused_traj,
                       fused_points=PointCloud(pts, frame_id="global"),
                       per_window=results, failures=failures)
