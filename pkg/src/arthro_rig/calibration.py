"""Rig calibration: planar-target intrinsics, RANSAC view selection,
AX = XB hand-eye, and shaft-axis offset compensation.

Conventions: per-view poses map target frame -> camera frame.  The
hand-eye result X satisfies T_world_scope = T_world_external o X, so X is
the scope's pose expressed in the external camera's frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateGeometryError,
    DegenerateMotionError,
    DegenerateViewError,
    InputError,
    InsufficientDataError,
    NoConsensusError,
)
from .geometry import PinholeCamera, RigidTransform, Rotation, compose, invert


@dataclass(frozen=True)
class PlanarTarget:
    """rows x cols grid of coplanar corners (z = 0), spacing in mm."""

    rows: int
    cols: int
    spacing: float

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise InputError("target needs at least a 2x2 corner grid")
        if self.spacing <= 0:
            raise InputError("corner spacing must be positive")

    def corners(self) -> np.ndarray:
        """(rows*cols, 3) corner coordinates in the target frame, z = 0."""
        jj, ii = np.meshgrid(np.arange(self.cols), np.arange(self.rows))
        pts = np.stack([jj.ravel() * self.spacing,
                        ii.ravel() * self.spacing,
                        np.zeros(self.rows * self.cols)], axis=1)
        return pts

    @property
    def corner_count(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class CalibrationObservation:
    """Detected corner pixels for one view, matched 1:1 to target corners."""

    view_id: str
    image_points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.image_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError("image_points must be (N, 2)")
        object.__setattr__(self, "image_points", pts)


@dataclass(frozen=True)
class CalibrationResult:
    camera: PinholeCamera
    per_view_poses: list[RigidTransform]
    rpe_pixels: float
    inlier_views: list[str]


@dataclass(frozen=True)
class HandEyeMotionPair:
    """Synchronous relative motions of the two cameras.

    AX = XB forces equal rotation angles; construction rejects pairs whose
    angles disagree beyond `similar_motion_tol_deg`.
    """

    motion_a: RigidTransform
    motion_b: RigidTransform
    similar_motion_tol_deg: float = 2.0

    def __post_init__(self):
        ang_a = math.degrees(np.linalg.norm(self.motion_a.rotation.as_rotvec()))
        ang_b = math.degrees(np.linalg.norm(self.motion_b.rotation.as_rotvec()))
        if abs(ang_a - ang_b) > self.similar_motion_tol_deg:
            raise InputError(
                f"motion pair rotation angles differ by {abs(ang_a - ang_b):.3f} deg "
                f"(> {self.similar_motion_tol_deg} deg); not a rigid-rig pair")


# ---------------------------------------------------------------------------
# homography + Zhang closed-form initialization


def _homography(src_xy: np.ndarray, dst_xy: np.ndarray, view_id: str) -> np.ndarray:
    """Normalized DLT homography mapping src (target plane) to dst."""

    def normalizer(pts):
        c = pts.mean(axis=0)
        d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
        if d < 1e-9:
            raise DegenerateViewError(
                f"view {view_id!r}: points are coincident", view=view_id)
        s = math.sqrt(2.0) / d
        T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])
        return T

    Ts, Td = normalizer(src_xy), normalizer(dst_xy)
    s = (src_xy @ Ts[:2, :2].T) + Ts[:2, 2]
    d = (dst_xy @ Td[:2, :2].T) + Td[:2, 2]
    n = len(s)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = s
    A[0::2, 2] = 1
    A[0::2, 6:8] = -d[:, 0:1] * s
    A[0::2, 8] = -d[:, 0]
    A[1::2, 3:5] = s
    A[1::2, 5] = 1
    A[1::2, 6:8] = -d[:, 1:2] * s
    A[1::2, 8] = -d[:, 1]
    _, sv, vt = np.linalg.svd(A)
    if sv[-2] < 1e-9 * sv[0]:
        raise DegenerateViewError(
            f"view {view_id!r}: homography system is rank deficient "
            "(collinear corners?)", view=view_id)
    H = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ H @ Ts
    return H / H[2, 2]


def _zhang_intrinsics(homographies: list[np.ndarray], width: int,
                      height: int) -> PinholeCamera:
    def v_ij(H, i, j):
        return np.array([
            H[0, i] * H[0, j],
            H[0, i] * H[1, j] + H[1, i] * H[0, j],
            H[1, i] * H[1, j],
            H[2, i] * H[0, j] + H[0, i] * H[2, j],
            H[2, i] * H[1, j] + H[1, i] * H[2, j],
            H[2, i] * H[2, j],
        ])

    V = []
    for H in homographies:
        V.append(v_ij(H, 0, 1))
        V.append(v_ij(H, 0, 0) - v_ij(H, 1, 1))
    V = np.asarray(V)
    _, _, vt = np.linalg.svd(V)
    b11, b12, b22, b13, b23, b33 = vt[-1]
    if b11 < 0:
        b11, b12, b22, b13, b23, b33 = -b11, -b12, -b22, -b13, -b23, -b33
    denom = b11 * b22 - b12 * b12
    if denom <= 0 or b11 <= 0:
        raise DegenerateViewError("intrinsic system is degenerate "
                                  "(near-parallel target planes?)")
    cy = (b12 * b13 - b11 * b23) / denom
    lam = b33 - (b13 * b13 + cy * (b12 * b13 - b11 * b23)) / b11
    fx2 = lam / b11
    fy2 = lam * b11 / denom
    if fx2 <= 0 or fy2 <= 0:
        raise DegenerateViewError("closed-form focal length is imaginary "
                                  "(degenerate view geometry)")
    fx, fy = math.sqrt(fx2), math.sqrt(fy2)
    skew = -b12 * fx * fx * fy / lam
    cx = skew * cy / fy - b13 * fx * fx / lam
    # zero-skew model: drop the (small) skew, clamp the principal point
    cx = min(max(cx, 0.0), width - 1.0)
    cy = min(max(cy, 0.0), height - 1.0)
    return PinholeCamera(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


def _pose_from_homography(H: np.ndarray, cam: PinholeCamera) -> RigidTransform:
    K = np.array([[cam.fx, 0, cam.cx], [0, cam.fy, cam.cy], [0, 0, 1]])
    A = np.linalg.inv(K) @ H
    lam = 1.0 / np.linalg.norm(A[:, 0])
    if A[2, 2] * lam < 0:  # keep the target in front of the camera
        lam = -lam
    r1 = lam * A[:, 0]
    r2 = lam * A[:, 1]
    t = lam * A[:, 2]
    r3 = np.cross(r1, r2)
    R = np.stack([r1, r2, r3], axis=1)
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    if np.linalg.det(R) < 0:
        u[:, -1] = -u[:, -1]
        R = u @ vt
    return RigidTransform(Rotation.from_matrix(R), t)


# ---------------------------------------------------------------------------
# Levenberg-Marquardt refinement with analytic Jacobians

_LM_MAX_ITER = 100
_LM_REL_TOL = 1e-10


def _skew(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _project_with_jac(cam_params, P_cam):
    """Pixels plus Jacobians wrt intrinsics [fx,fy,cx,cy,k1,k2] and the
    camera-frame point.  P_cam: (N, 3) with positive z."""
    fx, fy, cx, cy, k1, k2 = cam_params
    X, Y, Z = P_cam[:, 0], P_cam[:, 1], P_cam[:, 2]
    x, y = X / Z, Y / Z
    r2 = x * x + y * y
    d = 1.0 + k1 * r2 + k2 * r2 * r2
    u = fx * d * x + cx
    v = fy * d * y + cy
    uv = np.stack([u, v], axis=1)

    n = P_cam.shape[0]
    J_int = np.zeros((n, 2, 6))
    J_int[:, 0, 0] = d * x
    J_int[:, 1, 1] = d * y
    J_int[:, 0, 2] = 1.0
    J_int[:, 1, 3] = 1.0
    J_int[:, 0, 4] = fx * x * r2
    J_int[:, 1, 4] = fy * y * r2
    J_int[:, 0, 5] = fx * x * r2 * r2
    J_int[:, 1, 5] = fy * y * r2 * r2

    g = 2.0 * (k1 + 2.0 * k2 * r2)
    du_dx = fx * (d + x * x * g)
    du_dy = fx * x * y * g
    dv_dx = fy * x * y * g
    dv_dy = fy * (d + y * y * g)
    # chain through (x, y) = (X/Z, Y/Z)
    J_pt = np.zeros((n, 2, 3))
    J_pt[:, 0, 0] = du_dx / Z
    J_pt[:, 0, 1] = du_dy / Z
    J_pt[:, 0, 2] = -(du_dx * X + du_dy * Y) / (Z * Z)
    J_pt[:, 1, 0] = dv_dx / Z
    J_pt[:, 1, 1] = dv_dy / Z
    J_pt[:, 1, 2] = -(dv_dx * X + dv_dy * Y) / (Z * Z)
    return uv, J_int, J_pt


def _lm_refine(corners: np.ndarray, observations: list[np.ndarray],
               cam: PinholeCamera, poses: list[RigidTransform],
               refine_intrinsics: bool = True,
               max_iter: int = _LM_MAX_ITER):
    """Joint LM over intrinsics and per-view poses (left se(3) increments)."""
    n_views = len(observations)
    n_corners = corners.shape[0]
    params = np.array([cam.fx, cam.fy, cam.cx, cam.cy, cam.k1, cam.k2])
    Rs = [p.rotation.as_matrix() for p in poses]
    ts = [p.translation.copy() for p in poses]
    n_int = 6 if refine_intrinsics else 0
    n_params = n_int + 6 * n_views
    meas = np.concatenate(observations, axis=0)

    def residuals_and_jac(params, Rs, ts, want_jac=True):
        res = np.empty((n_views * n_corners, 2))
        J = np.zeros((n_views * n_corners, 2, n_params)) if want_jac else None
        for i in range(n_views):
            P_cam = corners @ Rs[i].T + ts[i]
            if np.any(P_cam[:, 2] <= 0):
                return None, None
            uv, J_int, J_pt = _project_with_jac(params, P_cam)
            sl = slice(i * n_corners, (i + 1) * n_corners)
            res[sl] = uv - meas[sl]
            if want_jac:
                if refine_intrinsics:
                    J[sl, :, :6] = J_int
                base = n_int + 6 * i
                # dP/d(rot increment) = -[P]x, dP/d(trans increment) = I
                J[sl, :, base:base + 3] = -np.einsum(
                    "nij,njk->nik", J_pt, _skew(P_cam))
                J[sl, :, base + 3:base + 6] = J_pt
        return res, J

    res, J = residuals_and_jac(params, Rs, ts)
    if res is None:
        raise BehindCameraError("initial pose puts target corners behind camera")
    cost = float((res ** 2).sum())
    damping = 1e-3
    for _ in range(max_iter):
        Jf = J.reshape(-1, n_params)
        rf = res.reshape(-1)
        JtJ = Jf.T @ Jf
        g = Jf.T @ rf
        accepted = False
        for _ in range(8):
            A = JtJ + damping * np.diag(np.maximum(np.diag(JtJ), 1e-12))
            try:
                delta = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            new_params = params + delta[:6] if refine_intrinsics else params
            new_Rs, new_ts = [], []
            for i in range(n_views):
                base = n_int + 6 * i
                dw = delta[base:base + 3]
                dt = delta[base + 3:base + 6]
                dR = Rotation.from_rotvec(dw).as_matrix()
                new_Rs.append(dR @ Rs[i])
                new_ts.append(dR @ ts[i] + dt)
            new_res, new_J = residuals_and_jac(new_params, new_Rs, new_ts)
            if new_res is None:
                damping *= 10.0
                continue
            new_cost = float((new_res ** 2).sum())
            if new_cost < cost:
                accepted = True
                break
            damping *= 10.0
        if not accepted:
            break
        rel_change = (cost - new_cost) / max(cost, 1e-300)
        params, Rs, ts = new_params, new_Rs, new_ts
        res, J, cost = new_res, new_J, new_cost
        damping = max(damping / 10.0, 1e-12)
        if rel_change < _LM_REL_TOL:
            break

    cam_out = PinholeCamera(fx=params[0], fy=params[1],
                            cx=min(max(params[2], 0.0), cam.width - 1e-9),
                            cy=min(max(params[3], 0.0), cam.height - 1e-9),
                            width=cam.width, height=cam.height,
                            k1=params[4], k2=params[5])
    poses_out = [RigidTransform(Rotation.from_matrix(R), t)
                 for R, t in zip(Rs, ts)]
    rms = math.sqrt(cost / (n_views * n_corners))
    return cam_out, poses_out, rms


# ---------------------------------------------------------------------------
# public calibration operations


def reprojection_error(cam: PinholeCamera, pose: RigidTransform,
                       target: PlanarTarget,
                       obs: CalibrationObservation) -> float:
    """RMS over corners of || project(cam, pose . P) - measured || in pixels."""
    pred = cam.project(pose.apply(target.corners()))
    d = pred - obs.image_points
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def estimate_intrinsics(target: PlanarTarget,
                        views: list[CalibrationObservation],
                        image_size: tuple[int, int],
                        max_iter: int = _LM_MAX_ITER) -> CalibrationResult:
    """Closed-form homography initialization followed by joint LM refinement.

    image_size is (width, height) of the sensor the views came from.
    """
    if len(views) < 3:
        raise InsufficientDataError(
            f"intrinsic calibration needs >= 3 views, got {len(views)}")
    corners = target.corners()
    for v in views:
        if v.image_points.shape[0] != target.corner_count:
            raise InputError(
                f"view {v.view_id!r} has {v.image_points.shape[0]} points, "
                f"target has {target.corner_count} corners")
    width, height = image_size
    Hs = [_homography(corners[:, :2], v.image_points, v.view_id) for v in views]
    cam0 = _zhang_intrinsics(Hs, width, height)
    poses0 = [_pose_from_homography(H, cam0) for H in Hs]
    cam, poses, rms = _lm_refine(corners, [v.image_points for v in views],
                                 cam0, poses0, max_iter=max_iter)
    return CalibrationResult(camera=cam, per_view_poses=poses,
                             rpe_pixels=rms,
                             inlier_views=[v.view_id for v in views])


def fit_view_pose(cam: PinholeCamera, target: PlanarTarget,
                  obs: CalibrationObservation,
                  max_iter: int = 20) -> RigidTransform:
    """Best target->camera pose for one view under fixed intrinsics."""
    corners = target.corners()
    # homography on undistorted normalized coordinates gives the init
    xy = (obs.image_points - [cam.cx, cam.cy]) / [cam.fx, cam.fy]
    xy = cam.undistort(xy)
    H = _homography(corners[:, :2], xy, obs.view_id)
    ident = PinholeCamera(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=1, height=1)
    pose0 = _pose_from_homography(H, ident)
    _, poses, _ = _lm_refine(corners, [obs.image_points], cam, [pose0],
                             refine_intrinsics=False, max_iter=max_iter)
    return poses[0]


@dataclass(frozen=True)
class RansacViewConfig:
    min_sample: int = 5
    iterations: int = 100
    inlier_rpe_threshold: float = 2.0
    seed: int = 0


def ransac_select_views(target: PlanarTarget,
                        views: list[CalibrationObservation],
                        image_size: tuple[int, int],
                        cfg: RansacViewConfig = RansacViewConfig()
                        ) -> CalibrationResult:
    """Calibrate on random view subsets, keep the hypothesis with the most
    inlier views (ties by lower mean inlier RPE), refit on all inliers.
    Seed-deterministic: the hypothesis schedule is fixed up front.
    """
    n = len(views)
    if n < cfg.min_sample:
        raise InsufficientDataError(
            f"RANSAC needs >= {cfg.min_sample} views, got {n}")
    rng = np.random.default_rng(cfg.seed)
    schedule = [rng.choice(n, size=cfg.min_sample, replace=False)
                for _ in range(cfg.iterations)]
    best = None  # (inlier_count, -mean_rpe, inlier_idx)
    for it, subset in enumerate(schedule):
        try:
            hyp = estimate_intrinsics(target, [views[i] for i in subset],
                                      image_size, max_iter=15)
        except (DegenerateViewError, DegenerateGeometryError,
                BehindCameraError, np.linalg.LinAlgError):
            continue
        rpes = np.empty(n)
        for i, v in enumerate(views):
            try:
                pose = fit_view_pose(hyp.camera, target, v, max_iter=2)
                rpes[i] = reprojection_error(hyp.camera, pose, target, v)
            except (DegenerateViewError, BehindCameraError):
                rpes[i] = np.inf
        inliers = np.flatnonzero(rpes <= cfg.inlier_rpe_threshold)
        if len(inliers) < cfg.min_sample:
            continue
        key = (len(inliers), -float(rpes[inliers].mean()))
        if best is None or key > best[0]:
            best = (key, inliers)
        # standard adaptive stop: enough trials done for 95% confidence of
        # having drawn one all-inlier sample at the observed inlier ratio
        ratio = len(best[1]) / n
        p_good = ratio ** cfg.min_sample
        if p_good >= 1.0:
            break
        needed = math.log(0.05) / math.log(1.0 - p_good)
        if it + 1 >= needed:
            break
    if best is None:
        raise NoConsensusError(
            "no hypothesis reached the minimum inlier view count")
    inlier_idx = best[1]
    result = estimate_intrinsics(target, [views[i] for i in inlier_idx],
                                 image_size)
    return CalibrationResult(camera=result.camera,
                             per_view_poses=result.per_view_poses,
                             rpe_pixels=result.rpe_pixels,
                             inlier_views=[views[i].view_id for i in inlier_idx])


# ---------------------------------------------------------------------------
# hand-eye


def _quat_left(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([[w, -x, -y, -z],
                     [x, w, -z, y],
                     [y, z, w, -x],
                     [z, -y, x, w]])


def _quat_right(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([[w, -x, -y, -z],
                     [x, w, z, -y],
                     [y, -z, w, x],
                     [z, y, -x, w]])


def solve_hand_eye(pairs: list[HandEyeMotionPair]) -> RigidTransform:
    """Least-squares X with A_i X = X B_i: rotation from the smallest
    singular vector of the stacked quaternion system, then translation by
    linear least squares."""
    if len(pairs) < 2:
        raise InsufficientDataError(
            f"hand-eye needs >= 2 motion pairs, got {len(pairs)}")
    axes = []
    for p in pairs:
        rv = p.motion_a.rotation.as_rotvec()
        ang = np.linalg.norm(rv)
        if ang > math.radians(0.5):
            axes.append(rv / ang)
    if len(axes) < 2:
        raise DegenerateMotionError(
            "fewer than 2 pairs carry usable rotation (> 0.5 deg)")
    max_axis_angle = 0.0
    for i in range(len(axes)):
        for j in range(i + 1, len(axes)):
            c = abs(float(np.dot(axes[i], axes[j])))
            max_axis_angle = max(max_axis_angle,
                                 math.degrees(math.acos(min(c, 1.0))))
    if max_axis_angle <= 5.0:
        raise DegenerateMotionError(
            f"rotation axes are parallel within 5 deg "
            f"(max separation {max_axis_angle:.2f} deg)")

    blocks = []
    for p in pairs:
        qa = p.motion_a.rotation.q
        qb = p.motion_b.rotation.q
        if qa[0] < 0:
            qa = -qa
        if qb[0] < 0:
            qb = -qb
        blocks.append(_quat_left(qa) - _quat_right(qb))
    M = np.concatenate(blocks, axis=0)
    _, _, vt = np.linalg.svd(M)
    rot = Rotation(vt[-1])
    Rx = rot.as_matrix()

    A_rows, b_rows = [], []
    for p in pairs:
        A_rows.append(p.motion_a.rotation.as_matrix() - np.eye(3))
        b_rows.append(Rx @ p.motion_b.translation - p.motion_a.translation)
    t, *_ = np.linalg.lstsq(np.concatenate(A_rows, axis=0),
                            np.concatenate(b_rows), rcond=None)
    return RigidTransform(rot, t)


# ---------------------------------------------------------------------------
# shaft offset compensation


def _chain_rpe_sq(x: RigidTransform, cam: PinholeCamera, validation) -> float:
    total = 0.0
    for ext_pose, target, obs in validation:
        cam_from_target = invert(compose(ext_pose, x))
        pred = cam.project(cam_from_target.apply(target.corners()))
        total += float(((pred - obs.image_points) ** 2).sum())
    return total


def compensate_shaft_offset(x: RigidTransform, shaft_axis: np.ndarray,
                            cam: PinholeCamera,
                            validation: list,
                            search_range_mm: float = 50.0,
                            tol_mm: float = 1e-4) -> RigidTransform:
    """Slide X's translation along the shaft axis to minimize chain RPE.

    validation entries are (external pose in target/world frame, target,
    scope-camera observation); the scope camera sees the target through
    external_pose o X.  Golden-section search over the 1-DOF offset; never
    returns a worse RPE than the input.
    """
    if not validation:
        raise InsufficientDataError("shaft compensation needs validation views")
    axis = np.asarray(shaft_axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-6:
        raise InputError("shaft axis must be a unit vector")

    def f(lam: float) -> float:
        shifted = RigidTransform(x.rotation, x.translation + lam * axis)
        try:
            return _chain_rpe_sq(shifted, cam, validation)
        except BehindCameraError:
            return math.inf

    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = -search_range_mm, search_range_mm
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol_mm:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    lam = 0.5 * (a + b)
    if f(lam) >= f(0.0):
        lam = 0.0
    return RigidTransform(x.rotation, x.translation + lam * axis)


def motion_pairs_from_trajectories(traj_a, traj_b, stride: int = 5,
                                   max_dt: float = 0.05,
                                   min_angle_deg: float = 1.0,
                                   similar_motion_tol_deg: float = 2.0
                                   ) -> list[HandEyeMotionPair]:
    """Paired relative motions over a fixed stride from two synchronous
    trajectories (A from traj_a, B from traj_b).  Pairs with too little
    rotation are dropped; angle-mismatched pairs are skipped."""
    from .fusion import associate_by_time

    assoc = associate_by_time(traj_a, traj_b, max_dt=max_dt)
    pairs = []
    for i in range(0, len(assoc) - stride, stride):
        pa0, pb0, _ = assoc[i]
        pa1, pb1, _ = assoc[i + stride]
        a = pa0.invert().compose(pa1)
        b = pb0.invert().compose(pb1)
        if math.degrees(np.linalg.norm(a.rotation.as_rotvec())) < min_angle_deg:
            continue
        try:
            pairs.append(HandEyeMotionPair(
                a, b, similar_motion_tol_deg=similar_motion_tol_deg))
        except InputError:
            continue
    if len(pairs) < 2:
        raise InsufficientDataError(
            "could not derive >= 2 usable motion pairs from the trajectories")
    return pairs


def rpe_pixels_to_mm(rpe: float, focal: float, mean_depth: float) -> float:
    """Metric equivalent of a pixel error at the working depth."""
    if focal <= 0 or mean_depth <= 0:
        raise InputError("focal length and depth must be positive")
    return rpe * mean_depth / focal
