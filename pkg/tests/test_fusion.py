import numpy as np
import pytest

from arthro_rig.errors import (
    DegenerateGeometryError,
    InputError,
    NoOverlapError,
)
from arthro_rig.fusion import (
    GlobalTrack,
    LocalMap,
    RobustAlignConfig,
    align_window,
    associate_by_time,
    fuse_local_maps,
    predict_scope_track,
    robust_align,
    umeyama_sim3,
)
from arthro_rig.geometry import (
    PointCloud,
    RigidTransform,
    Rotation,
    SimilarityTransform,
    Trajectory,
    compose,
    geodesic_angle,
)
from arthro_rig.metrics import ate
from arthro_rig.simulator import (
    NoiseModel,
    TrajectoryConfig,
    default_hand_eye,
    gen_trajectory,
    make_scenario,
    simulate_local_maps,
)

from conftest import random_rigid, random_rotation


def scope_track(duration=6.0):
    return gen_trajectory(TrajectoryConfig(duration=duration))


def global_track(gt_scope, hand_eye=None):
    hand_eye = default_hand_eye() if hand_eye is None else hand_eye
    he_inv = hand_eye.invert()
    ext = gt_scope.map_poses(lambda p: p.compose(he_inv))
    return GlobalTrack(trajectory=ext, hand_eye=hand_eye)


class TestPredictScopeTrack:
    def test_identity_hand_eye(self):
        tr = scope_track()
        g = GlobalTrack(trajectory=tr, hand_eye=RigidTransform.identity())
        out = predict_scope_track(g)
        assert np.allclose(out.positions, tr.positions)

    def test_pure_translation_hand_eye(self):
        tr = scope_track()
        d = np.array([5.0, -3.0, 2.0])
        g = GlobalTrack(trajectory=tr,
                        hand_eye=RigidTransform(translation=d))
        out = predict_scope_track(g)
        for i in range(0, len(tr), 37):
            want = tr.positions[i] + tr.pose(i).rotation.apply(d)
            assert np.allclose(out.positions[i], want, atol=1e-9)

    def test_matches_compose_oracle(self, rng):
        tr = scope_track(2.0)
        he = random_rigid(rng)
        g = GlobalTrack(trajectory=tr, hand_eye=he)
        out = predict_scope_track(g)
        for i in range(len(tr)):
            want = compose(tr.pose(i), he)
            assert out.pose(i).is_close(want, 1e-9, 1e-9)


class TestAssociateByTime:
    def test_identical_timestamps(self):
        tr = scope_track(2.0)
        pairs = associate_by_time(tr, tr, max_dt=0.05)
        assert len(pairs) == len(tr)
        for pa, pb, _ in pairs:
            assert pa.is_close(pb, 1e-12, 1e-12)

    def test_interpolated_pairing(self):
        b = Trajectory([0.0, 0.1],
                       [[1, 0, 0, 0]] * 2,
                       [[0, 0, 0], [2, 0, 0]])
        a = Trajectory([0.05], [[1, 0, 0, 0]], [[9, 9, 9]])
        pairs = associate_by_time(a, b, max_dt=0.2)
        assert len(pairs) == 1
        assert np.allclose(pairs[0][1].translation, [1, 0, 0])

    def test_disjoint_ranges_raise(self):
        a = Trajectory([0.0, 1.0], [[1, 0, 0, 0]] * 2, np.zeros((2, 3)))
        b = Trajectory([5.0, 6.0], [[1, 0, 0, 0]] * 2, np.zeros((2, 3)))
        with pytest.raises(NoOverlapError):
            associate_by_time(a, b, max_dt=0.05)

    def test_gap_wider_than_max_dt_skipped(self):
        b = Trajectory([0.0, 1.0], [[1, 0, 0, 0]] * 2, np.zeros((2, 3)))
        a = Trajectory([0.0, 0.5, 1.0], [[1, 0, 0, 0]] * 3, np.zeros((3, 3)))
        pairs = associate_by_time(a, b, max_dt=0.05)
        # endpoints hit exact samples; the midpoint falls in a 1 s gap
        assert len(pairs) == 2


class TestUmeyamaSim3:
    def test_identity(self, rng):
        pts = rng.normal(size=(30, 3))
        s = umeyama_sim3(pts, pts)
        assert s.scale == pytest.approx(1.0, abs=1e-12)
        assert geodesic_angle(s.rotation, Rotation.identity()) < 1e-9
        assert np.linalg.norm(s.translation) < 1e-12

    def test_forward_synthesis(self, rng):
        s_true = SimilarityTransform(2.5, random_rotation(rng),
                                     rng.normal(size=3) * 20)
        src = rng.normal(size=(100, 3)) * 10
        dst = s_true.apply(src)
        s = umeyama_sim3(src, dst)
        assert s.scale == pytest.approx(s_true.scale, abs=1e-9)
        assert geodesic_angle(s.rotation, s_true.rotation) < 1e-9
        assert np.allclose(s.translation, s_true.translation, atol=1e-9)

    def test_noisy_scale_within_one_percent(self, rng):
        s_true = SimilarityTransform(1.7, random_rotation(rng),
                                     rng.normal(size=3) * 10)
        src = rng.normal(size=(200, 3)) * 30
        dst = s_true.apply(src) + rng.normal(0, 0.5, (200, 3))
        s = umeyama_sim3(src, dst)
        assert abs(s.scale - s_true.scale) / s_true.scale < 0.01
        res = np.linalg.norm(dst - s.apply(src), axis=1)
        rms = np.sqrt(np.mean(res ** 2))
        assert 0.4 < rms < 1.4  # about the planted sigma

    def test_collinear_degenerate(self, rng):
        src = np.outer(np.linspace(0, 1, 10), [1.0, 2.0, 3.0])
        dst = src * 2.0
        with pytest.raises(DegenerateGeometryError):
            umeyama_sim3(src, dst)

    def test_count_mismatch(self, rng):
        with pytest.raises(InputError):
            umeyama_sim3(rng.normal(size=(5, 3)), rng.normal(size=(6, 3)))

    def test_minimizes_squared_residual(self, rng):
        # perturbing the optimum never lowers the cost
        src = rng.normal(size=(40, 3)) * 10
        dst = rng.normal(size=(40, 3)) * 10
        s = umeyama_sim3(src, dst)
        best = float(((dst - s.apply(src)) ** 2).sum())
        for _ in range(10):
            jitter = SimilarityTransform(
                s.scale * (1 + rng.normal() * 1e-3),
                s.rotation.multiply(Rotation.from_rotvec(
                    rng.normal(size=3) * 1e-3)),
                s.translation + rng.normal(size=3) * 1e-2)
            cost = float(((dst - jitter.apply(src)) ** 2).sum())
            assert cost >= best - 1e-9


class TestRobustAlign:
    def make_pairs(self, rng, n=100, s_true=None):
        s_true = s_true or SimilarityTransform(3.0, random_rotation(rng),
                                               rng.normal(size=3) * 10)
        src = rng.normal(size=(n, 3)) * 20
        return s_true, [(p, s_true.apply(p)) for p in src]

    def test_all_exact_pairs(self, rng):
        s_true, pairs = self.make_pairs(rng)
        r = robust_align(pairs)
        assert r.inlier_count == len(pairs)
        assert r.transform.scale == pytest.approx(s_true.scale, abs=1e-9)
        assert r.rms_residual < 1e-9

    def test_planted_outliers_excluded(self, rng):
        s_true, pairs = self.make_pairs(rng, n=80)
        bad = []
        for i in range(20):
            src = rng.normal(size=3) * 20
            d = rng.normal(size=3)
            d = d / np.linalg.norm(d) * 50.0
            bad.append((src, s_true.apply(src) + d))
        r = robust_align(pairs + bad, RobustAlignConfig(seed=3))
        assert r.inlier_count <= 81  # at most 1 corrupted pair kept
        assert abs(r.transform.scale - s_true.scale) / s_true.scale < 0.01

    def test_seed_determinism(self, rng):
        _, pairs = self.make_pairs(rng)
        cfg = RobustAlignConfig(seed=7)
        a = robust_align(pairs, cfg)
        b = robust_align(pairs, cfg)
        assert a.transform.scale == b.transform.scale
        assert np.array_equal(a.transform.rotation.q, b.transform.rotation.q)
        assert np.array_equal(a.transform.translation, b.transform.translation)
        assert a.inlier_count == b.inlier_count


class TestAlignWindow:
    def test_planted_inverse_scale(self, rng):
        gt = scope_track()
        g = global_track(gt)
        maps = simulate_local_maps(gt, [(1.0, 4.0)], [1.0 / 7.0],
                                   NoiseModel(seed=1))
        r = align_window(maps[0], g)
        assert r.transform.scale == pytest.approx(7.0, rel=1e-6)
        assert r.rms_residual < 1e-9

    def test_already_metric_gives_identity(self):
        gt = scope_track()
        g = global_track(gt)
        sl = gt.slice_time(1.0, 4.0)
        local = LocalMap(trajectory=sl,
                         points=PointCloud(sl.positions[:10].copy()),
                         window_id="w")
        r = align_window(local, g)
        assert r.transform.scale == pytest.approx(1.0, abs=1e-9)
        assert geodesic_angle(r.transform.rotation, Rotation.identity()) < 1e-9
        assert np.linalg.norm(r.transform.translation) < 1e-9

    def test_noisy_scale_within_two_percent(self):
        gt = scope_track(8.0)
        g = global_track(gt)
        maps = simulate_local_maps(gt, [(0.5, 7.5)], [0.2],
                                   NoiseModel(pos_sigma=0.5, seed=4))
        r = align_window(maps[0], g)
        assert abs(r.transform.scale - 5.0) / 5.0 < 0.02


class TestFuseLocalMaps:
    def test_single_window_exact(self):
        sc = make_scenario(seed=3, window_scales=(0.5,))
        g = GlobalTrack(trajectory=sc.gt_external, hand_eye=sc.hand_eye)
        model = fuse_local_maps(sc.local_windows, g)
        err = ate(model.fused_trajectory, sc.gt_scope, mode="none")
        assert err.trans_rmse < 1e-6
        assert err.rot_rmse < 1e-6

    def test_three_scales_recovered_and_fused(self):
        sc = make_scenario(seed=4, window_scales=(0.1, 0.5, 2.0))
        g = GlobalTrack(trajectory=sc.gt_external, hand_eye=sc.hand_eye)
        model = fuse_local_maps(sc.local_windows, g)
        assert len(model.per_window) == 3
        for r, s in zip(model.per_window, sc.true_window_scales):
            assert r.transform.scale == pytest.approx(1.0 / s, rel=1e-6)
        err = ate(model.fused_trajectory, sc.gt_scope, mode="none")
        assert err.trans_rmse < 1e-6

    def test_overlap_blend_consistent(self):
        # two consistent overlapping windows agree in the blended region
        sc = make_scenario(seed=5, window_scales=(0.25, 4.0))
        g = GlobalTrack(trajectory=sc.gt_external, hand_eye=sc.hand_eye)
        model = fuse_local_maps(sc.local_windows, g)
        err = ate(model.fused_trajectory, sc.gt_scope, mode="none")
        assert err.trans_rmse < 1e-6

    def test_timestamps_strictly_increasing(self):
        sc = make_scenario(seed=6)
        g = GlobalTrack(trajectory=sc.gt_external, hand_eye=sc.hand_eye)
        model = fuse_local_maps(sc.local_windows, g)
        assert np.all(np.diff(model.fused_trajectory.timestamps) > 0)

    def test_failed_window_recorded_and_excluded(self):
        sc = make_scenario(seed=7, window_scales=(0.5, 1.0))
        g = GlobalTrack(trajectory=sc.gt_external, hand_eye=sc.hand_eye)
        good = sc.local_windows[0]
        # a window far outside the global track's time span cannot align
        bad_traj = Trajectory(good.trajectory.timestamps + 1000.0,
                              good.trajectory.quats,
                              good.trajectory.positions, unit="")
        bad = LocalMap(trajectory=bad_traj, points=good.points,
                       window_id="bad")
        model = fuse_local_maps([good, bad], g)
        assert len(model.per_window) == 1
        assert len(model.failures) == 1
        assert model.failures[0]["window_id"] == "bad"
        assert model.failures[0]["category"] == "no-overlap"


class TestFusionProperties:
    def test_scale_equivariance(self):
        gt = scope_track()
        g = global_track(gt)
        maps = simulate_local_maps(gt, [(0.5, 5.5)], [0.5],
                                   NoiseModel(seed=8))
        base = align_window(maps[0], g)
        k = 3.0
        scaled = LocalMap(
            trajectory=Trajectory(maps[0].trajectory.timestamps,
                                  maps[0].trajectory.quats,
                                  maps[0].trajectory.positions * k, unit=""),
            points=PointCloud(maps[0].points.points * k),
            window_id="scaled")
        r = align_window(scaled, g)
        assert r.transform.scale == pytest.approx(base.transform.scale / k,
                                                  rel=1e-9)
        # fused output unchanged: transformed positions match
        p = maps[0].trajectory.positions
        assert np.allclose(base.transform.apply(p),
                           r.transform.apply(p * k), atol=1e-9)

    def test_frame_equivariance(self, rng):
        gt = scope_track()
        he = default_hand_eye()
        g = global_track(gt, he)
        maps = simulate_local_maps(gt, [(0.5, 5.5)], [0.5],
                                   NoiseModel(seed=9))
        base = align_window(maps[0], g)
        G = random_rigid(rng)
        moved_ext = g.trajectory.map_poses(lambda p: compose(G, p))
        g2 = GlobalTrack(trajectory=moved_ext, hand_eye=he)
        r = align_window(maps[0], g2)
        want = base.transform.compose_rigid_left(G)
        assert r.transform.scale == pytest.approx(want.scale, rel=1e-9)
        assert geodesic_angle(r.transform.rotation, want.rotation) < 1e-7
        assert np.allclose(r.transform.translation, want.translation,
                           atol=1e-6)
        assert r.rms_residual == pytest.approx(base.rms_residual, abs=1e-9)
