"""Line-based file formats: TUM trajectories, ASCII PLY clouds, PGM/PPM images.

All writers emit 9 significant digits; parse -> write -> parse is a fixed
point.  Unit tags (mm vs m) travel as header comments.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import FormatError, OrderError, ParseError, TruncationError
from .geometry import Trajectory, PointCloud

_QNORM_WARN_TOL = 1e-3


def parse_tum(text: str, frame_id: str = "",
              warnings: list[str] | None = None) -> Trajectory:
    """Parse "timestamp tx ty tz qx qy qz qw" lines; '#' comments allowed.

    Quaternions are normalized on read; deviations beyond 1e-3 are
    appended to `warnings` (if given) so reports can record them.
    A "# unit: m|mm" comment sets the trajectory's unit tag.
    """
    unit = "mm"
    ts, quats, positions = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comment = line[1:].strip().lower()
            if comment.startswith("unit:"):
                unit = comment.split(":", 1)[1].strip()
                # empty unit marks a scale-ambiguous (local) trajectory
                if unit not in ("mm", "m", ""):
                    raise ParseError(
                        f"line {lineno}: unknown unit {unit!r} (mm or m)",
                        line=lineno)
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ParseError(
                f"line {lineno}: expected 8 fields, got {len(parts)}",
                line=lineno)
        try:
            vals = [float(x) for x in parts]
        except ValueError as e:
            raise ParseError(f"line {lineno}: {e}", line=lineno) from e
        if not all(math.isfinite(v) for v in vals):
            raise ParseError(f"line {lineno}: non-finite value", line=lineno)
        t, tx, ty, tz, qx, qy, qz, qw = vals
        qnorm = float(np.linalg.norm([qw, qx, qy, qz]))
        if qnorm == 0.0:
            raise ParseError(f"line {lineno}: zero quaternion", line=lineno)
        if abs(qnorm - 1.0) > _QNORM_WARN_TOL and warnings is not None:
            warnings.append(
                f"line {lineno}: quaternion norm {qnorm:.6g} deviates from 1; "
                "normalized")
        ts.append(t)
        quats.append([qw, qx, qy, qz])
        positions.append([tx, ty, tz])
    if not ts:
        raise ParseError("no trajectory samples in input")
    if np.any(np.diff(ts) <= 0):
        raise OrderError("timestamps are not strictly increasing")
    return Trajectory(ts, quats, positions, frame_id=frame_id, unit=unit)


def write_tum(traj: Trajectory) -> str:
    lines = [f"# unit: {traj.unit}",
             "# timestamp tx ty tz qx qy qz qw"]
    for i in range(len(traj)):
        t = traj.timestamps[i]
        x, y, z = traj.positions[i]
        qw, qx, qy, qz = traj.quats[i]
        lines.append(" ".join(f"{v:.9g}" for v in (t, x, y, z, qx, qy, qz, qw)))
    return "\n".join(lines) + "\n"


def parse_ply(data: bytes | str, frame_id: str = "") -> PointCloud:
    """ASCII PLY with float x,y,z vertex properties; extra properties ignored."""
    if isinstance(data, bytes):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as e:
            raise FormatError(f"PLY is not ASCII: {e}") from e
    else:
        text = data
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError("missing 'ply' magic")
    n_vertex = None
    props: list[str] = []
    in_vertex_element = False
    body_start = None
    for i, raw in enumerate(lines[1:], start=1):
        line = raw.strip()
        if line.startswith("comment") or not line:
            continue
        if line.startswith("format"):
            if "ascii" not in line:
                raise FormatError(f"unsupported PLY format: {line!r}")
        elif line.startswith("element"):
            parts = line.split()
            in_vertex_element = parts[1] == "vertex"
            if in_vertex_element:
                try:
                    n_vertex = int(parts[2])
                except (IndexError, ValueError) as e:
                    raise FormatError(f"bad element line: {line!r}") from e
        elif line.startswith("property") and in_vertex_element:
            props.append(line.split()[-1])
        elif line == "end_header":
            body_start = i + 1
            break
    if body_start is None or n_vertex is None:
        raise FormatError("incomplete PLY header")
    for axis in ("x", "y", "z"):
        if axis not in props:
            raise FormatError(f"vertex element missing property {axis!r}")
    ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
    rows = [ln for ln in lines[body_start:] if ln.strip()]
    if len(rows) < n_vertex:
        raise TruncationError(
            f"header promises {n_vertex} vertices, body has {len(rows)}")
    pts = np.empty((n_vertex, 3))
    for r, row in enumerate(rows[:n_vertex]):
        fields = row.split()
        if len(fields) < len(props):
            raise FormatError(f"vertex row {r} has {len(fields)} fields, "
                              f"expected {len(props)}")
        try:
            pts[r] = [float(fields[ix]), float(fields[iy]), float(fields[iz])]
        except ValueError as e:
            raise FormatError(f"vertex row {r}: {e}") from e
    return PointCloud(pts, frame_id=frame_id)


def write_ply(cloud: PointCloud, unit: str = "mm") -> bytes:
    header = [
        "ply",
        "format ascii 1.0",
        f"comment unit: {unit}",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    body = [" ".join(f"{v:.9g}" for v in p) for p in cloud.points]
    return ("\n".join(header + body) + "\n").encode("ascii")


def _read_pnm_header(data: bytes) -> tuple[bytes, int, int, int, int]:
    """Returns (magic, width, height, maxval, body_offset)."""
    if len(data) < 2:
        raise FormatError("image data too short")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported image magic {magic!r} (want P5/P6)")
    # tokenize header: whitespace-separated ints, '#' comments to end of line
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise FormatError("truncated image header")
        c = data[pos:pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        else:
            start = pos
            while pos < len(data) and data[pos:pos + 1] not in b" \t\r\n#":
                pos += 1
            tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as e:
        raise FormatError(f"non-integer header field: {e}") from e
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} (want 255)")
    if width <= 0 or height <= 0:
        raise FormatError(f"bad image size {width}x{height}")
    # exactly one whitespace byte separates header from raster
    if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
        raise FormatError("missing separator before raster data")
    return magic, width, height, maxval, pos + 1


def parse_image(data: bytes) -> np.ndarray:
    """Binary PGM (P5, grayscale) or PPM (P6, RGB) -> uint8 array.

    Grayscale gives shape (H, W); RGB gives (H, W, 3).
    """
    magic, width, height, _, offset = _read_pnm_header(data)
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    raster = data[offset:offset + n]
    if len(raster) < n:
        raise TruncationError(
            f"raster has {len(raster)} bytes, expected {n}")
    arr = np.frombuffer(raster, dtype=np.uint8).copy()
    if channels == 1:
        return arr.reshape(height, width)
    return arr.reshape(height, width, 3)


def write_image(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise FormatError(f"image must be uint8, got {img.dtype}")
    if img.ndim == 2:
        magic, channels = b"P5", 1
    elif img.ndim == 3 and img.shape[2] == 3:
        magic, channels = b"P6", 3
    else:
        raise FormatError(f"unsupported image shape {img.shape}")
    h, w = img.shape[:2]
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    return header + img.tobytes()
