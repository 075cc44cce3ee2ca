"""File formats: ASCII PLY clouds, camera plan files, trace/report CSVs.

All writes are atomic (temp file + rename) so a crashed run never leaves a
truncated artifact, and re-running with the same inputs is byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from viewplan.geometry import CameraPose, ViewPlan


class PlyFormatError(ValueError):
    """Raised on a malformed or unsupported PLY file."""


_PLY_HEADER = [
    "ply",
    "format ascii 1.0",
    "element vertex {n}",
    "property float x",
    "property float y",
    "property float z",
    "end_header",
]


@contextmanager
def atomic_write(path, mode="w"):
    """Write to a temp file in the target directory, then rename into place."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(v: float) -> str:
    """Deterministic decimal rendering with 9 significant digits."""
    return format(float(v), ".9g")


def write_ply(cloud, path) -> None:
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    with atomic_write(path) as f:
        for line in _PLY_HEADER:
            f.write(line.format(n=pts.shape[0]) + "\n")
        for x, y, z in pts:
            f.write(f"{fmt_float(x)} {fmt_float(y)} {fmt_float(z)}\n")


def read_ply(path) -> np.ndarray:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    if len(lines) < 3 or lines[0].strip() != "ply":
        raise PlyFormatError("missing 'ply' magic line")
    if lines[1].strip() != "format ascii 1.0":
        raise PlyFormatError("only 'format ascii 1.0' is supported")
    n = None
    header_end = None
    for i, ln in enumerate(lines):
        ln = ln.strip()
        if ln.startswith("element vertex"):
            try:
                n = int(ln.split()[-1])
            except ValueError as e:
                raise PlyFormatError(f"bad vertex count line: {ln!r}") from e
        if ln == "end_header":
            header_end = i
            break
    if n is None or header_end is None:
        raise PlyFormatError("header lacks 'element vertex' or 'end_header'")
    body = [ln for ln in lines[header_end + 1 :] if ln.strip()]
    if len(body) != n:
        raise PlyFormatError(f"expected {n} vertices, found {len(body)}")
    pts = np.empty((n, 3))
    for i, ln in enumerate(body):
        parts = ln.split()
        if len(parts) < 3:
            raise PlyFormatError(f"vertex line {i} has fewer than 3 fields")
        pts[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
    return pts


def write_plan_file(plan: ViewPlan, path) -> None:
    """Serialize a plan for external reconstruction commands (JSON)."""
    doc = {
        "cameras": [
            {
                "position": [float(v) for v in cam.position],
                "look_dir": [float(v) for v in cam.look_dir],
                "fov_half_angle": float(cam.fov_half_angle),
                "range_min": float(cam.range_min),
                "range_max": float(cam.range_max),
            }
            for cam in plan.cameras
        ]
    }
    with atomic_write(path) as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def read_plan_file(path) -> ViewPlan:
    with open(path) as f:
        doc = json.load(f)
    cams = [
        CameraPose(
            position=c["position"],
            look_dir=c["look_dir"],
            fov_half_angle=c["fov_half_angle"],
            range_min=c["range_min"],
            range_max=c["range_max"],
        )
        for c in doc["cameras"]
    ]
    return ViewPlan(cameras=tuple(cams))


def write_trace_csv(trace, path) -> None:
    """Header: iter,y,best_y,model_index,w_0..w_{M-1},theta_0..theta_{D-1}.

    Init-design rows carry model_index = -1.
    """
    recs = trace.records
    if not recs:
        raise ValueError("trace is empty")
    m = len(recs[0].weights)
    d = len(recs[0].theta)
    cols = ["iter", "y", "best_y", "model_index"]
    cols += [f"w_{i}" for i in range(m)]
    cols += [f"theta_{i}" for i in range(d)]
    with atomic_write(path) as f:
        f.write(",".join(cols) + "\n")
        for r in recs:
            mi = -1 if r.model_index is None else r.model_index
            row = [str(r.iteration), fmt_float(r.y), fmt_float(r.best_y), str(mi)]
            row += [fmt_float(w) for w in r.weights]
            row += [fmt_float(v) for v in r.theta]
            f.write(",".join(row) + "\n")


REPORT_COLUMNS = ("method", "scene", "cd_x100", "depth_mae", "seed", "runtime_ms")


def write_report_csv(rows, path) -> None:
    """rows: iterable of dicts with the REPORT_COLUMNS keys."""
    with atomic_write(path) as f:
        f.write(",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            f.write(
                ",".join(
                    [
                        str(row["method"]),
                        str(row["scene"]),
                        fmt_float(row["cd_x100"]),
                        fmt_float(row["depth_mae"]),
                        str(row["seed"]),
                        fmt_float(row["runtime_ms"]),
                    ]
                )
                + "\n"
            )


def write_csv(path, header: list[str], rows) -> None:
    """Generic deterministic CSV writer; floats use fmt_float."""
    with atomic_write(path) as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(
                ",".join(fmt_float(v) if isinstance(v, float) else str(v) for v in row) + "\n"
            )
