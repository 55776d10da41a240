"""Deterministic data exports: OBJ meshes, ray-path CSV, JSON reports.

All writers format floats with ``repr`` (shortest round-trip form) and use
fixed key and row ordering, so identical inputs produce identical bytes.
Rendering is left to external tools; these files are plain data.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import UsageError
from .scene import _jsonable

__all__ = [
    "ellipse_csv",
    "mesh_system",
    "report_json",
    "trace_csv",
    "write_obj",
]


def _fmt(x) -> str:
    return repr(float(x))


def mesh_system(system, grid: int = 65):
    """Tessellate each patch of a 2-d system on a ``grid`` x ``grid`` sample.

    Returns a list of (patch_id, vertices (k, 3), quad faces (q, 4)) with
    faces indexing into the patch's own vertex list. Quads are kept only
    when all four corners land inside the base footprint, so rims of
    non-rectangular patches are approximated from inside.
    """
    if system.dim != 2:
        raise UsageError("mesh export requires a 2-d system")
    if grid < 2:
        raise UsageError("mesh grid must be at least 2")
    meshes = []
    for patch in system.patches:
        lo, hi = patch.base_domain.bbox()
        xs = np.linspace(lo[0], hi[0], grid)
        ys = np.linspace(lo[1], hi[1], grid)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        inside = patch.base_domain.contains(pts, tol=1e-12).reshape(grid, grid)
        quad_ok = inside[:-1, :-1] & inside[1:, :-1] & inside[:-1, 1:] & inside[1:, 1:]
        used = np.zeros((grid, grid), dtype=bool)
        qi, qj = np.nonzero(quad_ok)
        for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
            used[qi + di, qj + dj] = True
        index = np.full(grid * grid, -1, dtype=np.int64)
        flat_used = used.ravel()
        index[flat_used] = np.arange(int(flat_used.sum()))
        kept = pts[flat_used]
        heights = np.atleast_1d(patch.height.value(kept))
        vertices = np.column_stack([kept, heights])
        # counterclockwise quads as seen from above
        a = index[qi * grid + qj]
        b = index[(qi + 1) * grid + qj]
        c = index[(qi + 1) * grid + (qj + 1)]
        d = index[qi * grid + (qj + 1)]
        faces = np.column_stack([a, b, c, d])
        meshes.append((patch.patch_id, vertices, faces))
    return meshes


def write_obj(path, system, grid: int = 65) -> int:
    """Write all patches of a system into one OBJ file, one group per patch.

    Returns the number of mesh groups written. Vertex indices are global
    and 1-based per the OBJ convention; faces are quads.
    """
    meshes = mesh_system(system, grid=grid)
    lines = []
    base = 1
    for patch_id, vertices, faces in meshes:
        lines.append(f"o {patch_id}")
        for v in vertices:
            lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
        for f in faces:
            lines.append(
                f"f {base + f[0]} {base + f[1]} {base + f[2]} {base + f[3]}"
            )
        base += len(vertices)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(meshes)


def trace_csv(path, labels, trace_out) -> int:
    """Write traced trajectories as CSV rows (ray_id, bounce_index, x, y, z).

    Each ray contributes bounces + 2 rows: the entry point on the lower
    reference plane, one row per reflection vertex, and the exit point on
    the upper reference plane (rays that never exit repeat their last known
    position there). Returns the number of data rows written.
    """
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    n = labels.shape[1]
    z_floor = float(trace_out["z_floor"])
    z_ceil = float(trace_out["z_ceil"])
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ray_id", "bounce_index", "x", "y", "z"])
        for k in range(labels.shape[0]):
            entry = np.concatenate([labels[k], np.zeros(2 - n), [z_floor]])
            writer.writerow([k, 0] + [_fmt(v) for v in entry])
            nb = int(trace_out["bounces"][k])
            last = entry
            for j in range(nb):
                v = trace_out["vertices"][k, j]
                v3 = np.concatenate([v[:n], np.zeros(2 - n), [v[n]]])
                writer.writerow([k, j + 1] + [_fmt(x) for x in v3])
                last = v3
            exit_label = trace_out["exit_label"][k]
            if np.all(np.isfinite(exit_label)):
                final = np.concatenate([exit_label, np.zeros(2 - n), [z_ceil]])
            else:
                final = np.concatenate([last[:2], [z_ceil]])
            writer.writerow([k, nb + 1] + [_fmt(x) for x in final])
            rows += nb + 2
    return rows


def ellipse_csv(path, table) -> int:
    """Write (alpha, beta, half-angle product) rows; returns the row count."""
    table = np.atleast_2d(np.asarray(table, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha", "beta", "tan_half_product"])
        for row in table:
            writer.writerow([_fmt(v) for v in row])
    return table.shape[0]


def report_json(path, report) -> str:
    """Write a report (dict or VerificationReport) as canonical JSON."""
    payload = report.to_dict() if hasattr(report, "to_dict") else report
    text = json.dumps(_jsonable(payload, ""), indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text
