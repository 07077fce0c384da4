"""Command-line pipeline: simulate, calibrate, handeye, align, eval-traj,
eval-recon, report.

Every command writes a schema-versioned trial report (JSON + flat CSV row)
into --out, plus figures under --out/figures unless --no-figures is given.
Failures exit nonzero with a machine-readable error JSON on stderr, one
exit code per error category.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import report as rep
from .calibration import (
    RansacViewConfig,
    compensate_shaft_offset,
    estimate_intrinsics,
    motion_pairs_from_trajectories,
    ransac_select_views,
    solve_hand_eye,
)
from .errors import ArthroRigError, ConfigError, InputError, exit_code_for
from .formats import parse_image, parse_ply, parse_tum, write_ply, write_tum
from .fusion import GlobalTrack, LocalMap, RobustAlignConfig, fuse_local_maps
from .geometry import PointCloud, Trajectory
from .metrics import (
    IcpConfig,
    MetricReport,
    ate,
    hausdorff,
    icp_rigid,
    nn_rmse,
    psnr,
    rte,
    smoothness,
    ssim,
)
from .simulator import NoiseModel, make_scenario

log = logging.getLogger("arthro_rig")

NOISY_PRESET = {"pixel_sigma": 0.5, "pos_sigma": 0.5, "rot_sigma": 0.1}


def _setup_logging():
    level = os.environ.get("ARTHRO_RIG_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


def _load_trajectory(path: str, unit_flag: str, warnings: list[str],
                     frame_id: str = "") -> Trajectory:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as e:
        raise InputError(f"trajectory file not found: {path}") from e
    traj = parse_tum(text, frame_id=frame_id, warnings=warnings)
    return _to_mm(traj, unit_flag)


def _to_mm(traj: Trajectory, unit_flag: str) -> Trajectory:
    unit = traj.unit if traj.unit in ("mm", "m") else unit_flag
    if unit == "m":
        return Trajectory(traj.timestamps, traj.quats,
                          traj.positions * 1000.0,
                          frame_id=traj.frame_id, unit="mm")
    return traj


def _load_cloud(path: str, unit_flag: str) -> PointCloud:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise InputError(f"point cloud file not found: {path}") from e
    cloud = parse_ply(data)
    if unit_flag == "m":
        cloud = PointCloud(cloud.points * 1000.0, frame_id=cloud.frame_id)
    return cloud


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise InputError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e


def _finish(args, command: str, config: dict, results: dict,
            warnings: list[str]) -> int:
    out = Path(args.out)
    doc = rep.trial_report(command, config, results, warnings,
                           deterministic=args.deterministic)
    path = rep.write_report(doc, out)
    log.info("wrote %s", path)
    return 0


# ---------------------------------------------------------------------------
# simulate


SIMULATE_DEFAULTS = {
    "preset": "noiseless",  # noiseless | noisy
    "duration": 10.0,
    "rate": 30.0,
    "n_calib_views": 20,
    "window_scales": [0.1, 0.5, 2.0],
    "pixel_sigma": None,  # None -> preset value
    "pos_sigma": None,
    "rot_sigma": None,
    "outlier_fraction": 0.0,
    "outlier_magnitude": 0.0,
}


def cmd_simulate(args, overrides: dict) -> int:
    cfg = rep.resolve_config(SIMULATE_DEFAULTS, overrides, "simulate")
    if cfg["preset"] not in ("noiseless", "noisy"):
        raise ConfigError(f"unknown preset {cfg['preset']!r}")
    preset = NOISY_PRESET if cfg["preset"] == "noisy" else \
        {"pixel_sigma": 0.0, "pos_sigma": 0.0, "rot_sigma": 0.0}
    for k, v in preset.items():
        if cfg[k] is None:
            cfg[k] = v
    cfg["seed"] = args.seed
    noise = NoiseModel(pixel_sigma=cfg["pixel_sigma"],
                       pos_sigma=cfg["pos_sigma"],
                       rot_sigma=cfg["rot_sigma"],
                       outlier_fraction=cfg["outlier_fraction"],
                       outlier_magnitude=cfg["outlier_magnitude"],
                       seed=args.seed)
    scenario = make_scenario(seed=args.seed, noise=noise,
                             duration=cfg["duration"], rate=cfg["rate"],
                             n_calib_views=cfg["n_calib_views"],
                             window_scales=tuple(cfg["window_scales"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gt_scope.tum").write_text(write_tum(scenario.gt_scope))
    (out / "gt_external.tum").write_text(write_tum(scenario.gt_external))
    (out / "hand_eye.json").write_text(
        json.dumps(rep.rigid_to_dict(scenario.hand_eye), indent=2,
                   sort_keys=True) + "\n")
    (out / "surface.ply").write_bytes(write_ply(scenario.surface))
    (out / "camera_truth.json").write_text(
        json.dumps(rep.camera_to_dict(scenario.camera_truth), indent=2,
                   sort_keys=True) + "\n")
    (out / "target.json").write_text(
        json.dumps(rep.target_to_dict(scenario.target), indent=2,
                   sort_keys=True) + "\n")
    (out / "observations.json").write_text(json.dumps(
        rep.observations_to_dict(scenario.calib_views,
                                 (scenario.camera_truth.width,
                                  scenario.camera_truth.height)),
        indent=2, sort_keys=True) + "\n")
    win_dir = out / "windows"
    win_dir.mkdir(exist_ok=True)
    window_files = []
    for w in scenario.local_windows:
        (win_dir / f"{w.window_id}.tum").write_text(write_tum(w.trajectory))
        (win_dir / f"{w.window_id}.ply").write_bytes(write_ply(w.points))
        window_files.append(w.window_id)
    manifest = {"windows": window_files,
                "true_window_scales": scenario.true_window_scales}
    (out / "scenario.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if not args.no_figures:
        rep.figure_trajectory_overlay(
            {"scope (gt)": scenario.gt_scope,
             "external (gt)": scenario.gt_external},
            out / "figures" / "trajectories.png")
    results = {"n_samples": len(scenario.gt_scope),
               "n_windows": len(window_files),
               "n_calib_views": len(scenario.calib_views),
               "true_window_scales": scenario.true_window_scales}
    return _finish(args, "simulate", cfg, results, [])


# ---------------------------------------------------------------------------
# calibrate


CALIBRATE_DEFAULTS = {
    "ransac": True,
    "min_sample": 5,
    "iterations": 100,
    "inlier_rpe_threshold": 2.0,
}


def cmd_calibrate(args, overrides: dict) -> int:
    cfg = rep.resolve_config(CALIBRATE_DEFAULTS, overrides, "calibrate")
    cfg["seed"] = args.seed
    target = rep.target_from_dict(_load_json(args.target))
    views, image_size = rep.observations_from_dict(
        _load_json(args.observations))
    if cfg["ransac"]:
        result = ransac_select_views(
            target, views, image_size,
            RansacViewConfig(min_sample=cfg["min_sample"],
                             iterations=cfg["iterations"],
                             inlier_rpe_threshold=cfg["inlier_rpe_threshold"],
                             seed=args.seed))
    else:
        result = estimate_intrinsics(target, views, image_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "calibration.json").write_text(
        json.dumps(rep.calibration_to_dict(result), indent=2,
                   sort_keys=True) + "\n")
    if not args.no_figures:
        from .calibration import fit_view_pose, reprojection_error
        rpes, ids = [], []
        for v in views:
            ids.append(v.view_id)
            try:
                pose = fit_view_pose(result.camera, target, v)
                rpes.append(reprojection_error(result.camera, pose, target, v))
            except ArthroRigError:
                rpes.append(float("nan"))
        rep.figure_view_rpes(ids, rpes, set(result.inlier_views),
                             out / "figures" / "view_rpes.png",
                             threshold=cfg["inlier_rpe_threshold"]
                             if cfg["ransac"] else None)
    results = {"rpe_pixels": result.rpe_pixels,
               "camera": rep.camera_to_dict(result.camera),
               "inlier_views": list(result.inlier_views),
               "n_views": len(views)}
    return _finish(args, "calibrate", cfg, results, [])


# ---------------------------------------------------------------------------
# handeye


HANDEYE_DEFAULTS = {
    "stride": 5,
    "max_dt": 0.05,
    "min_angle_deg": 1.0,
    "similar_motion_tol_deg": 2.0,
    "shaft_axis": [0.0, 0.0, 1.0],
}


def cmd_handeye(args, overrides: dict) -> int:
    cfg = rep.resolve_config(HANDEYE_DEFAULTS, overrides, "handeye")
    cfg["seed"] = args.seed
    warnings: list[str] = []
    ext = _load_trajectory(args.external, args.unit, warnings, "external")
    scope = _load_trajectory(args.scope, args.unit, warnings, "scope")
    pairs = motion_pairs_from_trajectories(
        ext, scope, stride=cfg["stride"], max_dt=cfg["max_dt"],
        min_angle_deg=cfg["min_angle_deg"],
        similar_motion_tol_deg=cfg["similar_motion_tol_deg"])
    x = solve_hand_eye(pairs)
    compensated = False
    if args.validation and args.camera:
        cam = rep.camera_from_dict(_load_json(args.camera))
        target = rep.target_from_dict(_load_json(args.target))
        views, _ = rep.observations_from_dict(_load_json(args.validation))
        ext_poses = [rep.rigid_from_dict(d)
                     for d in _load_json(args.validation_poses)["poses"]]
        validation = [(p, target, v) for p, v in zip(ext_poses, views)]
        x = compensate_shaft_offset(x, np.asarray(cfg["shaft_axis"], float),
                                    cam, validation)
        compensated = True
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hand_eye.json").write_text(
        json.dumps(rep.rigid_to_dict(x), indent=2, sort_keys=True) + "\n")
    results = {"hand_eye": rep.rigid_to_dict(x),
               "n_motion_pairs": len(pairs),
               "shaft_compensated": compensated}
    return _finish(args, "handeye", cfg, results, warnings)


# ---------------------------------------------------------------------------
# align


ALIGN_DEFAULTS = {
    "iterations": 200,
    "inlier_threshold_mm": 3.0,
    "max_dt": 0.05,
}


def cmd_align(args, overrides: dict) -> int:
    cfg = rep.resolve_config(ALIGN_DEFAULTS, overrides, "align")
    cfg["seed"] = args.seed
    warnings: list[str] = []
    ext = _load_trajectory(args.external, args.unit, warnings, "external")
    hand_eye = rep.rigid_from_dict(_load_json(args.hand_eye))
    g = GlobalTrack(trajectory=ext, hand_eye=hand_eye)
    win_dir = Path(args.windows)
    windows = []
    for tum_path in sorted(win_dir.glob("*.tum")):
        wid = tum_path.stem
        traj = parse_tum(tum_path.read_text(), frame_id=wid,
                         warnings=warnings)
        ply_path = tum_path.with_suffix(".ply")
        if ply_path.exists():
            points = parse_ply(ply_path.read_bytes(), frame_id=wid)
        else:
            points = PointCloud(np.zeros((0, 3)), frame_id=wid)
        windows.append(LocalMap(trajectory=traj, points=points, window_id=wid))
    if not windows:
        raise InputError(f"no window_*.tum files under {win_dir}")
    model = fuse_local_maps(
        windows, g,
        RobustAlignConfig(iterations=cfg["iterations"],
                          inlier_threshold=cfg["inlier_threshold_mm"],
                          seed=args.seed, max_dt=cfg["max_dt"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fused_trajectory.tum").write_text(write_tum(model.fused_trajectory))
    (out / "fused_points.ply").write_bytes(write_ply(model.fused_points))
    alignments = [rep.alignment_to_dict(a) for a in model.per_window]
    (out / "alignment.json").write_text(json.dumps(
        {"windows": alignments, "failures": model.failures},
        indent=2, sort_keys=True) + "\n")
    if not args.no_figures:
        rep.figure_alignment_residuals(alignments,
                                       out / "figures" / "alignment.png")
        rep.figure_trajectory_overlay({"fused scope": model.fused_trajectory},
                                      out / "figures" / "fused.png")
    results = {"windows": alignments, "failures": model.failures,
               "n_fused_samples": len(model.fused_trajectory),
               "n_fused_points": len(model.fused_points)}
    for f in model.failures:
        warnings.append(f"window {f['window_id']} failed: "
                        f"{f['category']}: {f['message']}")
    return _finish(args, "align", cfg, results, warnings)


# ---------------------------------------------------------------------------
# eval-traj


EVAL_TRAJ_DEFAULTS = {
    "ate_mode": "rigid",  # none | rigid | similarity
    "rte_delta": 1,
    "max_dt": 0.05,
    "resample_dt": 1.0 / 30.0,
}


def cmd_eval_traj(args, overrides: dict) -> int:
    cfg = rep.resolve_config(EVAL_TRAJ_DEFAULTS, overrides, "eval-traj")
    cfg["seed"] = args.seed
    warnings: list[str] = []
    est = _load_trajectory(args.est, args.unit, warnings, "est")
    gt = _load_trajectory(args.gt, args.unit, warnings, "gt")
    r_ate = ate(est, gt, mode=cfg["ate_mode"], max_dt=cfg["max_dt"])
    r_rte = rte(est, gt, delta=cfg["rte_delta"], max_dt=cfg["max_dt"])
    sm_gt = smoothness(gt, resample_dt=cfg["resample_dt"])
    sm_pred = smoothness(est, resample_dt=cfg["resample_dt"])
    mr = MetricReport(ate=r_ate, rte=r_rte, smoothness_gt=sm_gt,
                      smoothness_pred=sm_pred)
    if not args.no_figures:
        out = Path(args.out)
        rep.figure_trajectory_overlay({"estimate": est, "ground truth": gt},
                                      out / "figures" / "trajectories.png")
        rep.figure_error_curves(r_ate.per_sample,
                                out / "figures" / "ate_per_sample.png",
                                title="ATE per sample")
    return _finish(args, "eval-traj", cfg, {"metrics": mr.to_dict()}, warnings)


# ---------------------------------------------------------------------------
# eval-recon


EVAL_RECON_DEFAULTS = {
    "skip_icp": False,
    "icp_max_iter": 50,
    "icp_tol_mm": 1e-4,
}


def cmd_eval_recon(args, overrides: dict) -> int:
    cfg = rep.resolve_config(EVAL_RECON_DEFAULTS, overrides, "eval-recon")
    cfg["seed"] = args.seed
    recon = _load_cloud(args.recon, args.unit)
    ref = _load_cloud(args.ref, args.unit)
    if cfg["skip_icp"]:
        registered = recon
    else:
        transform = icp_rigid(recon, ref,
                              IcpConfig(max_iter=cfg["icp_max_iter"],
                                        tol_mm=cfg["icp_tol_mm"]))
        registered = recon.transformed(transform)
    mr = MetricReport(rmse_mm=nn_rmse(registered, ref),
                      hausdorff_mm=hausdorff(registered, ref))
    if args.image_a and args.image_b:
        a = parse_image(Path(args.image_a).read_bytes())
        b = parse_image(Path(args.image_b).read_bytes())
        mr.psnr_db = psnr(a, b)
        mr.ssim = ssim(a, b)
    return _finish(args, "eval-recon", cfg, {"metrics": mr.to_dict()}, [])


# ---------------------------------------------------------------------------
# report (cross-trial aggregation)


REPORT_DEFAULTS: dict = {}

TRACKING_COLS = ["ate_trans_mm", "ate_rot_deg", "rte_trans_mm", "rte_rot_deg",
                 "gt_rms_lin_accel", "gt_rms_ang_accel",
                 "pred_rms_lin_accel", "pred_rms_ang_accel"]
RECON_COLS = ["rmse_mm", "hausdorff_mm", "psnr_db", "ssim"]


def _collect_trial(path: Path) -> dict | None:
    doc = rep.load_report(path)
    m = doc.get("results", {}).get("metrics")
    if not m:
        return None
    row = {"trial": path.parent.name}
    if m.get("ate"):
        row["ate_trans_mm"] = m["ate"]["trans_rmse_mm"]
        row["ate_rot_deg"] = m["ate"]["rot_rmse_deg"]
    if m.get("rte"):
        row["rte_trans_mm"] = m["rte"]["trans_rmse_mm"]
        row["rte_rot_deg"] = m["rte"]["rot_rmse_deg"]
    if m.get("smoothness_gt"):
        row["gt_rms_lin_accel"] = m["smoothness_gt"]["rms_linear_accel_mm_s2"]
        row["gt_rms_ang_accel"] = m["smoothness_gt"]["rms_angular_accel_rad_s2"]
    if m.get("smoothness_pred"):
        row["pred_rms_lin_accel"] = m["smoothness_pred"]["rms_linear_accel_mm_s2"]
        row["pred_rms_ang_accel"] = m["smoothness_pred"]["rms_angular_accel_rad_s2"]
    for k in RECON_COLS:
        if m.get(k) is not None:
            row[k] = m[k]
    return row


def cmd_report(args, overrides: dict) -> int:
    cfg = rep.resolve_config(REPORT_DEFAULTS, overrides, "report")
    cfg["seed"] = args.seed
    rows = []
    for trial in args.trials:
        p = Path(trial)
        candidates = [p] if p.is_file() else sorted(p.rglob("report.json"))
        for c in candidates:
            row = _collect_trial(c)
            if row:
                rows.append(row)
    if not rows:
        raise InputError("no trial reports with metrics found")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    import csv as _csv

    def write_table(name: str, cols: list[str]):
        sel = [r for r in rows if any(c in r for c in cols)]
        if not sel:
            return
        with (out / name).open("w", newline="") as fh:
            w = _csv.writer(fh, lineterminator="\n")
            w.writerow(["trial"] + cols)
            for r in sel:
                w.writerow([r["trial"]] + [r.get(c, "") for c in cols])

    write_table("tracking.csv", TRACKING_COLS)
    write_table("reconstruction.csv", RECON_COLS)
    if not args.no_figures:
        track_rows = [r for r in rows if "ate_trans_mm" in r]
        if track_rows:
            rep.figure_metric_bars(track_rows,
                                   ["ate_trans_mm", "rte_trans_mm"],
                                   out / "figures" / "tracking.png",
                                   "Tracking accuracy")
        recon_rows = [r for r in rows if "rmse_mm" in r]
        if recon_rows:
            rep.figure_metric_bars(recon_rows, ["rmse_mm", "hausdorff_mm"],
                                   out / "figures" / "reconstruction.png",
                                   "Reconstruction quality")
    return _finish(args, "report", cfg, {"n_trials": len(rows),
                                         "trials": rows}, [])


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arthro-rig",
        description="Dual-camera arthroscopy rig calibration, fusion and "
                    "evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (unknown keys rejected)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--unit", choices=["mm", "m"], default="mm",
                       help="unit of untagged input files")
        p.add_argument("--deterministic", action="store_true",
                       help="omit timestamps so reports are byte-identical")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("simulate", help="generate a synthetic rig scenario")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="intrinsic calibration from a "
                                         "planar-target observation set")
    common(p)
    p.add_argument("--target", required=True, help="target.json")
    p.add_argument("--observations", required=True, help="observations.json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("handeye", help="solve AX=XB from paired trajectories")
    common(p)
    p.add_argument("--external", required=True, help="external camera TUM")
    p.add_argument("--scope", required=True, help="scope TUM")
    p.add_argument("--validation", help="observations.json for shaft "
                                        "offset compensation")
    p.add_argument("--validation-poses", help="JSON {'poses': [...]} of "
                                              "external poses for compensation")
    p.add_argument("--camera", help="scope camera JSON for compensation")
    p.add_argument("--target", help="target.json for compensation")
    p.set_defaults(func=cmd_handeye)

    p = sub.add_parser("align", help="register local windows to the metric "
                                     "global frame and fuse them")
    common(p)
    p.add_argument("--external", required=True, help="external camera TUM")
    p.add_argument("--hand-eye", required=True, dest="hand_eye",
                   help="hand_eye.json")
    p.add_argument("--windows", required=True,
                   help="directory of window_*.tum (+ optional .ply)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval-traj", help="ATE / RTE / smoothness")
    common(p)
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_eval_traj)

    p = sub.add_parser("eval-recon", help="point-cloud RMSE / Hausdorff "
                                          "(+ PSNR / SSIM on image pairs)")
    common(p)
    p.add_argument("--recon", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--image-a", dest="image_a")
    p.add_argument("--image-b", dest="image_b")
    p.set_defaults(func=cmd_eval_recon)

    p = sub.add_parser("report", help="aggregate trial reports into "
                                      "cross-trial CSV tables and figures")
    common(p)
    p.add_argument("--trials", nargs="+", required=True,
                   help="trial report files or directories")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = _load_config_file(args.config)
        return args.func(args, overrides)
    except ArthroRigError as e:
        json.dump({"error": e.to_dict()}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
