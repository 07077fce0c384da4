"""Report serialization: schema-versioned JSON trial reports, flat CSV
summary rows, and matplotlib figures rendered alongside them.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationResult, PlanarTarget, CalibrationObservation
from .errors import FormatError, ConfigError
from .fusion import AlignmentResult
from .geometry import (
    PinholeCamera,
    RigidTransform,
    Rotation,
    SimilarityTransform,
    Trajectory,
)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# JSON codecs for domain objects


def rigid_to_dict(t: RigidTransform) -> dict:
    return {"rotation_qwxyz": [float(v) for v in t.rotation.q],
            "translation_mm": [float(v) for v in t.translation]}


def rigid_from_dict(d: dict) -> RigidTransform:
    try:
        return RigidTransform(Rotation(np.asarray(d["rotation_qwxyz"])),
                              np.asarray(d["translation_mm"], dtype=float))
    except (KeyError, TypeError) as e:
        raise FormatError(f"bad rigid transform document: {e}") from e


def sim3_to_dict(s: SimilarityTransform) -> dict:
    return {"scale": float(s.scale),
            "rotation_qwxyz": [float(v) for v in s.rotation.q],
            "translation_mm": [float(v) for v in s.translation]}


def sim3_from_dict(d: dict) -> SimilarityTransform:
    try:
        return SimilarityTransform(float(d["scale"]),
                                   Rotation(np.asarray(d["rotation_qwxyz"])),
                                   np.asarray(d["translation_mm"], dtype=float))
    except (KeyError, TypeError) as e:
        raise FormatError(f"bad similarity transform document: {e}") from e


def camera_to_dict(cam: PinholeCamera) -> dict:
    return {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "k1": cam.k1, "k2": cam.k2,
            "width": cam.width, "height": cam.height}


def camera_from_dict(d: dict) -> PinholeCamera:
    try:
        return PinholeCamera(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                             width=d["width"], height=d["height"],
                             k1=d.get("k1", 0.0), k2=d.get("k2", 0.0))
    except (KeyError, TypeError) as e:
        raise FormatError(f"bad camera document: {e}") from e


def target_to_dict(t: PlanarTarget) -> dict:
    return {"rows": t.rows, "cols": t.cols, "spacing_mm": t.spacing}


def target_from_dict(d: dict) -> PlanarTarget:
    try:
        return PlanarTarget(rows=d["rows"], cols=d["cols"],
                            spacing=d["spacing_mm"])
    except (KeyError, TypeError) as e:
        raise FormatError(f"bad target document: {e}") from e


def observations_to_dict(views: list[CalibrationObservation],
                         image_size: tuple[int, int]) -> dict:
    return {"image_size": list(image_size),
            "views": [{"view_id": v.view_id,
                       "image_points": v.image_points.tolist()}
                      for v in views]}


def observations_from_dict(d: dict):
    try:
        views = [CalibrationObservation(view_id=v["view_id"],
                                        image_points=np.asarray(v["image_points"]))
                 for v in d["views"]]
        return views, tuple(d["image_size"])
    except (KeyError, TypeError) as e:
        raise FormatError(f"bad observations document: {e}") from e


def calibration_to_dict(r: CalibrationResult) -> dict:
    return {"camera": camera_to_dict(r.camera),
            "rpe_pixels": r.rpe_pixels,
            "inlier_views": list(r.inlier_views),
            "per_view_poses": [rigid_to_dict(p) for p in r.per_view_poses]}


def alignment_to_dict(a: AlignmentResult) -> dict:
    return {"window_id": a.window_id,
            "transform": sim3_to_dict(a.transform),
            "inlier_count": a.inlier_count,
            "rms_residual_mm": a.rms_residual}


# ---------------------------------------------------------------------------
# trial report envelope


def trial_report(command: str, config: dict, results: dict,
                 warnings: list[str] | None = None,
                 deterministic: bool = False) -> dict:
    """Envelope all commands share; every defaulted parameter must already
    be present in `config` (full provenance)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
        "command": command,
        "config": config,
        "results": results,
        "warnings": warnings or [],
    }
    if not deterministic:
        doc["generated_at"] = datetime.datetime.now(
            datetime.timezone.utc).isoformat()
    return doc


def write_report(doc: dict, out_dir: Path, name: str = "report") -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_summary_csv(doc, out_dir / f"{name}.csv")
    return path


def _flatten(prefix: str, value, out: dict):
    if isinstance(value, dict):
        for k, v in sorted(value.items()):
            _flatten(f"{prefix}.{k}" if prefix else k, v, out)
    elif isinstance(value, (list, tuple)):
        out[prefix] = json.dumps(value)
    else:
        out[prefix] = value


def _write_summary_csv(doc: dict, path: Path):
    flat: dict = {}
    _flatten("", {"command": doc["command"], "results": doc["results"]}, flat)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(flat.keys()))
    writer.writerow([flat[k] for k in flat])
    path.write_text(buf.getvalue())


def load_report(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(
            f"{path}: schema_version {doc.get('schema_version')} "
            f"not supported (want {SCHEMA_VERSION})")
    return doc


# ---------------------------------------------------------------------------
# config resolution


def resolve_config(defaults: dict, overrides: dict | None,
                   command: str) -> dict:
    """Merge a config-file/flag override dict onto defaults; unknown keys
    are rejected so typos cannot silently fall back to defaults."""
    cfg = dict(defaults)
    for k, v in (overrides or {}).items():
        if k not in defaults:
            raise ConfigError(
                f"unknown config key {k!r} for command {command!r} "
                f"(known: {', '.join(sorted(defaults))})")
        cfg[k] = v
    return cfg


# ---------------------------------------------------------------------------
# figures


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata={"Software": None})


def figure_trajectory_overlay(trajs: dict[str, Trajectory], path: Path,
                              title: str = "Trajectory overlay (top view)"):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 5))
    for label, tr in trajs.items():
        ax.plot(tr.positions[:, 0], tr.positions[:, 1], label=label, lw=1.2)
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("y [mm]")
    ax.set_title(title)
    ax.axis("equal")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def figure_error_curves(per_sample: list, path: Path,
                        title: str = "Per-sample trajectory error"):
    plt = _plt()
    t = [s[0] for s in per_sample]
    trans = [s[1] for s in per_sample]
    rot = [s[2] for s in per_sample]
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    axes[0].plot(t, trans, lw=1.0)
    axes[0].set_ylabel("translation [mm]")
    axes[0].set_title(title)
    axes[1].plot(t, rot, lw=1.0, color="tab:orange")
    axes[1].set_ylabel("rotation [deg]")
    axes[1].set_xlabel("time [s]")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def figure_view_rpes(view_ids: list[str], rpes: list[float],
                     inliers: set[str], path: Path,
                     threshold: float | None = None):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * len(view_ids)), 4))
    colors = ["tab:blue" if v in inliers else "tab:red" for v in view_ids]
    ax.bar(range(len(view_ids)), rpes, color=colors)
    if threshold is not None:
        ax.axhline(threshold, color="k", ls="--", lw=0.8)
    ax.set_xticks(range(len(view_ids)))
    ax.set_xticklabels(view_ids, rotation=90, fontsize=6)
    ax.set_ylabel("RPE [px]")
    ax.set_title("Per-view reprojection error (red = excluded)")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def figure_alignment_residuals(results: list[dict], path: Path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ids = [r["window_id"] for r in results]
    res = [r["rms_residual_mm"] for r in results]
    scales = [r["transform"]["scale"] for r in results]
    ax.bar(ids, res, color="tab:blue")
    ax.set_ylabel("RMS residual [mm]")
    ax.set_title("Per-window alignment residual")
    for i, s in enumerate(scales):
        ax.annotate(f"s={s:.3g}", (i, res[i]), ha="center", va="bottom",
                    fontsize=7)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def figure_metric_bars(rows: list[dict], columns: list[str], path: Path,
                       title: str):
    plt = _plt()
    fig, axes = plt.subplots(1, len(columns),
                             figsize=(3 * len(columns), 3.5), squeeze=False)
    trials = [r.get("trial", str(i)) for i, r in enumerate(rows)]
    for j, col in enumerate(columns):
        ax = axes[0][j]
        vals = [r.get(col) for r in rows]
        vals = [float("nan") if v is None else float(v) for v in vals]
        ax.bar(trials, vals, color="tab:blue")
        ax.set_title(col, fontsize=9)
        ax.tick_params(axis="x", rotation=45, labelsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
