"""Acceptance gate: one test per release criterion, each printing a PASS/FAIL
line.  Tolerances are pinned; see the README for the criterion list."""

import functools
import json
import math
import time

import numpy as np
import pytest

from arthro_rig.calibration import (
    HandEyeMotionPair,
    PlanarTarget,
    RansacViewConfig,
    compensate_shaft_offset,
    estimate_intrinsics,
    ransac_select_views,
    solve_hand_eye,
)
from arthro_rig.cli import main as cli_main
from arthro_rig.formats import parse_image, parse_ply, parse_tum, \
    write_image, write_ply, write_tum
from arthro_rig.fusion import GlobalTrack, align_window, fuse_local_maps, \
    RobustAlignConfig
from arthro_rig.geometry import (
    PointCloud,
    RigidTransform,
    Rotation,
    Trajectory,
    apply_sim3,
    compose,
    geodesic_angle,
    invert,
)
from arthro_rig.metrics import ate, hausdorff, nn_rmse, psnr, rte, \
    smoothness, ssim
from arthro_rig.simulator import (
    NOISELESS,
    NoiseModel,
    TrajectoryConfig,
    default_camera,
    default_hand_eye,
    gen_trajectory,
    lissajous_rms_linear_accel,
    simulate_calibration_views,
    simulate_local_maps,
    simulate_shaft_validation,
)

from conftest import random_rigid, random_rotation
from test_metrics import ate_oracle, brute_force_nn, rte_oracle, ssim_oracle

CAM = default_camera()
TARGET = PlanarTarget(rows=6, cols=9, spacing=25.0)
SIZE = (CAM.width, CAM.height)
SHAFT_AXIS = np.array([0.0, 0.0, 1.0])


def criterion(number, summary):
    """Print one PASS/FAIL line per criterion when the test finishes."""
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {number}: FAIL - {summary}")
                raise
            print(f"ACCEPTANCE {number}: PASS - {summary}")
        return wrapper
    return deco


def small_rig(duration=4.0, seed=0):
    gt = gen_trajectory(TrajectoryConfig(duration=duration, seed=seed))
    x = default_hand_eye()
    ext = gt.map_poses(lambda p: p.compose(x.invert()))
    return gt, GlobalTrack(trajectory=ext, hand_eye=x)


@criterion(1, "Sim(3) window alignment recovers planted scales to 1e-6")
def test_criterion_1_sim3_recovery():
    gt, g = small_rig()
    for scale in (0.1, 0.25, 1.0, 4.0, 10.0):
        t0 = time.perf_counter()
        local = simulate_local_maps(gt, [(0.5, 3.5)], [scale], NOISELESS,
                                    identity_frames=True)[0]
        result = align_window(local, g)
        elapsed = time.perf_counter() - t0
        want_scale = 1.0 / scale
        assert abs(result.transform.scale - want_scale) / want_scale < 1e-6
        assert geodesic_angle(result.transform.rotation,
                              Rotation.identity()) < 1e-6
        assert np.linalg.norm(result.transform.translation) < 1e-6
        assert elapsed < 1.0, f"scale {scale}: {elapsed:.2f}s"


@criterion(2, "hand-eye exact noiseless, <0.5 deg / <1 mm on >=95% noisy seeds")
def test_criterion_2_hand_eye():
    x_true = default_hand_eye()

    def pairs_for(rng, noise_rot_deg=0.0, noise_pos=0.0):
        axes = np.eye(3)
        out = []
        for i in range(10):
            rot = Rotation.from_axis_angle(
                axes[i % 3] + rng.normal(0, 0.2, 3),
                rng.uniform(0.3, 1.2))
            b = RigidTransform(rot, rng.uniform(-30, 30, 3))
            a = compose(compose(x_true, b), invert(x_true))
            if noise_rot_deg > 0:
                def jitter(t):
                    dr = Rotation.from_rotvec(
                        rng.normal(0, math.radians(noise_rot_deg), 3))
                    return RigidTransform(
                        t.rotation.multiply(dr),
                        t.translation + rng.normal(0, noise_pos, 3))
                a, b = jitter(a), jitter(b)
            out.append(HandEyeMotionPair(a, b, similar_motion_tol_deg=5.0))
        return out

    # noiseless: exact recovery
    x = solve_hand_eye(pairs_for(np.random.default_rng(0)))
    assert geodesic_angle(x.rotation, x_true.rotation) < 1e-8
    assert np.linalg.norm(x.translation - x_true.translation) < 1e-8

    # noisy: 0.1 deg / 0.1 mm motion noise over 100 seeds
    t0 = time.perf_counter()
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = solve_hand_eye(pairs_for(rng, noise_rot_deg=0.1, noise_pos=0.1))
        rot_err = geodesic_angle(x.rotation, x_true.rotation)
        trans_err = np.linalg.norm(x.translation - x_true.translation)
        hits += (rot_err < 0.5 and trans_err < 1.0)
    elapsed = time.perf_counter() - t0
    assert hits >= 95, f"only {hits}/100 seeds in tolerance"
    assert elapsed < 5.0, f"{elapsed:.2f}s"


@criterion(3, "5 mm shaft offset recovered to 0.01 mm, RPE never increases")
def test_criterion_3_shaft_offset():
    x = default_hand_eye()

    def chain_rpe(xc, validation):
        total, count = 0.0, 0
        for ext, target, obs in validation:
            pred = CAM.project(invert(compose(ext, xc)).apply(target.corners()))
            total += float(((pred - obs.image_points) ** 2).sum())
            count += len(target.corners())
        return math.sqrt(total / count)

    # planted 5 mm offset along the shaft axis
    validation = simulate_shaft_validation(x, CAM, TARGET, 6,
                                           NoiseModel(seed=20))
    shifted = RigidTransform(x.rotation, x.translation + 5.0 * SHAFT_AXIS)
    out = compensate_shaft_offset(shifted, SHAFT_AXIS, CAM, validation)
    lam = float((out.translation - shifted.translation) @ SHAFT_AXIS)
    assert lam == pytest.approx(-5.0, abs=0.01)

    # monotone improvement on every case, clean and noisy starts alike
    rng = np.random.default_rng(1)
    for seed in range(5):
        validation = simulate_shaft_validation(
            x, CAM, TARGET, 5, NoiseModel(pixel_sigma=1.0, seed=seed))
        start = RigidTransform(
            x.rotation, x.translation + rng.uniform(-10, 10) * SHAFT_AXIS)
        out = compensate_shaft_offset(start, SHAFT_AXIS, CAM, validation)
        assert chain_rpe(out, validation) <= \
            chain_rpe(start, validation) + 1e-12


@criterion(4, "intrinsics exact noiseless, RPE in band noisy, RANSAC rejects "
              "planted outlier views on >=95% of 50 seeds")
def test_criterion_4_intrinsics():
    # noiseless: 20 views -> fx, fy within 0.1%, RPE < 1e-6 px
    views = simulate_calibration_views(CAM, TARGET, 20, NoiseModel(seed=0))
    fit = estimate_intrinsics(TARGET, [o for o, _ in views], SIZE)
    assert abs(fit.camera.fx - CAM.fx) / CAM.fx < 1e-3
    assert abs(fit.camera.fy - CAM.fy) / CAM.fy < 1e-3
    assert fit.rpe_pixels < 1e-6

    # 0.5 px pixel noise -> final RPE lands in [0.3, 0.7] px
    noisy = simulate_calibration_views(
        CAM, TARGET, 20, NoiseModel(pixel_sigma=0.5, seed=1))
    fit = estimate_intrinsics(TARGET, [o for o, _ in noisy], SIZE)
    assert 0.3 <= fit.rpe_pixels <= 0.7

    # RANSAC: 5/25 corrupted views, 50 seeds
    ok = 0
    for seed in range(50):
        noise = NoiseModel(pixel_sigma=0.5, outlier_fraction=0.2,
                           outlier_magnitude=10.0, seed=seed)
        polluted = simulate_calibration_views(CAM, TARGET, 25, noise)
        clean = simulate_calibration_views(
            CAM, TARGET, 25, NoiseModel(pixel_sigma=0.5, seed=seed))
        corrupted = {o.view_id for (o, _), (c, _) in zip(polluted, clean)
                     if not np.allclose(o.image_points, c.image_points)}
        assert len(corrupted) == 5
        obs = [o for o, _ in polluted]
        res = ransac_select_views(TARGET, obs, SIZE,
                                  RansacViewConfig(iterations=40, seed=seed))
        all_fit = estimate_intrinsics(TARGET, obs, SIZE)
        ok += (len(corrupted - set(res.inlier_views)) >= 4
               and res.rpe_pixels < all_fit.rpe_pixels)
    assert ok >= 48, f"only {ok}/50 seeds succeeded"  # >= 95%


@criterion(5, "metrics match independent brute-force oracles on 100 random "
              "instances each")
def test_criterion_5_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)

    def rand_traj(n=20):
        ts = np.arange(n) * 0.1
        quats = [Rotation(rng.normal(size=4)).q for _ in range(n)]
        return Trajectory(ts, quats, rng.normal(size=(n, 3)) * 10)

    for k in range(100):
        est, gt = rand_traj(), rand_traj()
        mode = ("none", "rigid", "similarity")[k % 3]
        got = ate(est, gt, mode=mode)
        t_want, r_want = ate_oracle(est, gt, mode)
        assert got.trans_rmse == pytest.approx(t_want, abs=1e-9)
        assert got.rot_rmse == pytest.approx(r_want, abs=1e-6)

        got = rte(est, gt, delta=1 + k % 3)
        t_want, r_want = rte_oracle(est, gt, 1 + k % 3)
        assert got.trans_rmse == pytest.approx(t_want, abs=1e-9)
        assert got.rot_rmse == pytest.approx(r_want, abs=1e-6)

    for _ in range(100):
        a = rng.normal(size=(rng.integers(5, 500), 3)) * 10
        b = rng.normal(size=(rng.integers(5, 500), 3)) * 10
        ca, cb = PointCloud(a), PointCloud(b)
        nn = brute_force_nn(a, b)
        assert nn_rmse(ca, cb) == pytest.approx(
            math.sqrt(np.mean(nn ** 2)), abs=1e-9)
        want = max(nn.max(), brute_force_nn(b, a).max())
        assert hausdorff(ca, cb) == want  # exact: same distances, max only

    for _ in range(100):
        a = rng.integers(0, 256, (64, 64), dtype=np.uint8)
        b = np.clip(a + rng.normal(0, 8, a.shape), 0, 255).astype(np.uint8)
        mse = np.mean((a.astype(float) - b.astype(float)) ** 2)
        assert psnr(a, b) == pytest.approx(
            10 * math.log10(255.0 ** 2 / mse), abs=1e-9)
        assert ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-9)

    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"{elapsed:.2f}s"


@criterion(6, "analytic metric anchors (PSNR offset, SSIM identity, "
              "hausdorff 3-4-5, smoothness closed forms)")
def test_criterion_6_analytic_anchors():
    rng = np.random.default_rng(6)

    # constant offset of 16 grey levels: MSE = 256 exactly, so
    # PSNR = 10 log10(255^2 / 256) = 24.0484 dB
    img = rng.integers(0, 240, (64, 64), dtype=np.uint8)
    off = (img + 16).astype(np.uint8)
    assert psnr(img, off) == pytest.approx(
        10 * math.log10(255.0 ** 2 / 256.0), abs=1e-4)

    # SSIM of an image with itself
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    # 3-4-5 triangle
    a = PointCloud(np.array([[0.0, 0.0, 0.0]]))
    b = PointCloud(np.array([[3.0, 4.0, 0.0]]))
    assert hausdorff(a, b) == 5.0

    # constant-velocity trajectory has zero linear acceleration
    const = gen_trajectory(TrajectoryConfig(kind="screw",
                                            screw_rot_rate_deg_s=0.0))
    assert smoothness(const).rms_linear_accel < 1e-9

    # single-axis sine: RMS |a| = A w^2 / sqrt(2) over whole periods
    A, w = 15.0, 1.0
    ts = np.arange(0.0, 8 * math.pi, 1 / 240.0)
    pos = np.stack([A * np.sin(w * ts), np.zeros_like(ts),
                    np.zeros_like(ts)], axis=1)
    sine = Trajectory(ts, [[1, 0, 0, 0]] * len(ts), pos)
    got = smoothness(sine, resample_dt=1 / 240.0).rms_linear_accel
    assert got == pytest.approx(A * w * w / math.sqrt(2), rel=0.01)

    # full lissajous figure against its closed form
    cfg = TrajectoryConfig(duration=8 * math.pi, rate=120.0)
    got = smoothness(gen_trajectory(cfg), resample_dt=1 / 120.0)
    assert got.rms_linear_accel == pytest.approx(
        lissajous_rms_linear_accel(cfg), rel=0.01)


@criterion(7, "invariance suite (ATE rigid, RTE left, fusion scale "
              "equivariance, hausdorff symmetry)")
def test_criterion_7_invariances():
    rng = np.random.default_rng(7)

    def rand_traj(n=25):
        ts = np.arange(n) * 0.1
        quats = [Rotation(rng.normal(size=4)).q for _ in range(n)]
        return Trajectory(ts, quats, rng.normal(size=(n, 3)) * 10)

    # ATE in rigid mode is invariant to a global rigid move of the estimate
    gt, est = rand_traj(), rand_traj()
    base = ate(est, gt, mode="rigid")
    G = random_rigid(rng)
    moved = est.map_poses(lambda p: compose(G, p))
    again = ate(moved, gt, mode="rigid")
    assert abs(again.trans_rmse - base.trans_rmse) < 1e-9

    # RTE is invariant to left-composed rigid transforms
    est_left = gt.map_poses(lambda p: compose(G, p))
    err = rte(est_left, gt)
    assert err.trans_rmse < 1e-9
    assert err.rot_rmse < 1e-7

    # fusion scale equivariance: local coords scaled by k -> recovered
    # scale divides by k, fused output unchanged
    traj, g = small_rig()
    local = simulate_local_maps(traj, [(0.5, 3.5)], [1.0], NOISELESS)[0]
    base_model = fuse_local_maps([local], g)
    base_align = align_window(local, g)
    k = 3.0
    scaled_traj = Trajectory(local.trajectory.timestamps,
                             local.trajectory.quats,
                             local.trajectory.positions * k,
                             frame_id=local.trajectory.frame_id)
    scaled = type(local)(trajectory=scaled_traj,
                         points=PointCloud(local.points.points * k),
                         window_id=local.window_id)
    scaled_model = fuse_local_maps([scaled], g)
    scaled_align = align_window(scaled, g)
    assert scaled_align.transform.scale == pytest.approx(
        base_align.transform.scale / k, rel=1e-9)
    assert np.allclose(scaled_model.fused_trajectory.positions,
                       base_model.fused_trajectory.positions, atol=1e-9)
    assert np.allclose(scaled_model.fused_points.points,
                       base_model.fused_points.points, atol=1e-9)

    # hausdorff symmetry is exact
    for _ in range(10):
        a = PointCloud(rng.normal(size=(60, 3)))
        b = PointCloud(rng.normal(size=(40, 3)))
        assert hausdorff(a, b) == hausdorff(b, a)


@criterion(8, "end-to-end pipeline: noiseless ATE and RMSE < 0.01 mm with "
              "byte-identical deterministic reports; noisy ATE in band")
def test_criterion_8_end_to_end(tmp_path):
    def run(argv):
        return cli_main([str(a) for a in argv])

    def pipeline(root, preset, seed):
        root.mkdir(parents=True, exist_ok=True)
        cfg = root / "cfg.json"
        cfg.write_text(json.dumps({"preset": preset, "duration": 4.0}))
        sim = root / "sim"
        assert run(["simulate", "--seed", seed, "--deterministic",
                    "--config", cfg, "--out", sim, "--no-figures"]) == 0
        calib = root / "calib"
        assert run(["calibrate", "--target", sim / "target.json",
                    "--observations", sim / "observations.json",
                    "--deterministic", "--out", calib, "--no-figures"]) == 0
        he = root / "he"
        assert run(["handeye", "--external", sim / "gt_external.tum",
                    "--scope", sim / "gt_scope.tum", "--deterministic",
                    "--out", he, "--no-figures"]) == 0
        al = root / "align"
        assert run(["align", "--external", sim / "gt_external.tum",
                    "--hand-eye", he / "hand_eye.json",
                    "--windows", sim / "windows", "--deterministic",
                    "--out", al, "--no-figures"]) == 0
        ev = root / "eval"
        assert run(["eval-traj", "--est", al / "fused_trajectory.tum",
                    "--gt", sim / "gt_scope.tum", "--deterministic",
                    "--out", ev, "--no-figures"]) == 0
        rc = root / "recon"
        assert run(["eval-recon", "--recon", al / "fused_points.ply",
                    "--ref", sim / "surface.ply", "--deterministic",
                    "--out", rc, "--no-figures"]) == 0
        traj_doc = json.loads((ev / "report.json").read_text())
        recon_doc = json.loads((rc / "report.json").read_text())
        return (traj_doc["results"]["metrics"]["ate"]["trans_rmse_mm"],
                recon_doc["results"]["metrics"]["rmse_mm"])

    # noiseless, run twice: metrics at numeric floor, reports byte-identical
    a_root = tmp_path / "clean_a"
    b_root = tmp_path / "clean_b"
    ate_mm, rmse_mm = pipeline(a_root, "noiseless", 0)
    assert ate_mm < 0.01
    assert rmse_mm < 0.01
    pipeline(b_root, "noiseless", 0)
    for rel in ("sim/report.json", "calib/calibration.json",
                "he/hand_eye.json", "align/alignment.json",
                "eval/report.json", "recon/report.json"):
        assert (a_root / rel).read_bytes() == (b_root / rel).read_bytes(), rel

    # noisy preset (0.5 px, 0.5 mm, 0.1 deg): ATE within [floor, 5 x floor]
    # where the floor is the 0.5 mm per-axis position noise
    noisy_ate, _ = pipeline(tmp_path / "noisy", "noisy", 0)
    assert 0.5 <= noisy_ate <= 2.5, f"noisy ATE {noisy_ate:.3f} mm"


@criterion(9, "format round-trip fixed points and malformed-input corpus "
              "mapped to documented error categories")
def test_criterion_9_formats():
    rng = np.random.default_rng(9)

    # TUM: parse -> write -> parse fixed point
    poses = [(i * 0.1, random_rigid(rng)) for i in range(30)]
    text = write_tum(Trajectory.from_poses(poses))
    once = write_tum(parse_tum(text))
    assert write_tum(parse_tum(once)) == once

    # PLY fixed point
    data = write_ply(PointCloud(rng.uniform(-100, 100, (500, 3))))
    once_b = write_ply(parse_ply(data))
    assert write_ply(parse_ply(once_b)) == once_b

    # PGM / PPM are lossless byte round trips
    for shape in ((16, 24), (8, 8, 3)):
        img = rng.integers(0, 256, shape, dtype=np.uint8)
        blob = write_image(img)
        assert write_image(parse_image(blob)) == blob

    # malformed corpus: every file maps to a documented category, no crash
    from arthro_rig.errors import ArthroRigError, EXIT_CODES

    tum_corpus = [
        "bogus\n", "0.0 0 0 0 0 0 0\n", "0.0 a b c 0 0 0 1\n", "",
        "0.0 0 0 0 0 0 0 1 extra\n", "nan 0 0 0 0 0 0 1\n",
        "1.0 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n",
        "0.0 0 0 0 0 0 0 0\n# only comment\n",
        "# unit: parsecs\n0.0 0 0 0 0 0 0 1\n",
        "0,0 0 0 0 0 0 0 1\n",
    ]
    ply_corpus = [
        b"not a ply\n",
        b"ply\nformat binary_little_endian 1.0\nend_header\n",
        b"ply\nformat ascii 1.0\nelement vertex 5\nproperty float x\n"
        b"property float y\nproperty float z\nend_header\n0 0 0\n",
        b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
        b"end_header\n0\n",
        b"ply\nformat ascii 1.0\nelement vertex one\nproperty float x\n"
        b"property float y\nproperty float z\nend_header\n",
        b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
        b"property float y\nproperty float z\nend_header\na b c\n",
        b"ply\nformat ascii 1.0\nend_header\n",
        b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
        b"property float y\nproperty float z\n0 0 0\n",
        b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
        b"property float y\nproperty float z\nend_header\n0 0\n",
        b"",
    ]
    img_corpus = [
        b"P3\n2 2\n255\n0 0 0 0",
        b"P5\n2 2\n65535\n" + bytes(8),
        b"P5\n4 4\n255\n" + bytes(3),
        b"P5\n-1 4\n255\n" + bytes(4),
        b"P5\n2\n255\n" + bytes(2),
        b"P6\n2 2\n255\n" + bytes(5),
        b"P5\na b\n255\n" + bytes(4),
        b"",
        b"JUNKJUNK",
        b"P5\n0 0\n255\n",
    ]
    for text in tum_corpus:
        with pytest.raises(ArthroRigError) as exc:
            parse_tum(text)
        assert exc.value.category in EXIT_CODES, text
    for blob in ply_corpus:
        with pytest.raises(ArthroRigError) as exc:
            parse_ply(blob)
        assert exc.value.category in EXIT_CODES
    for blob in img_corpus:
        with pytest.raises(ArthroRigError) as exc:
            parse_image(blob)
        assert exc.value.category in EXIT_CODES
