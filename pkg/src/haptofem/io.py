"""File outputs: legacy ASCII VTK snapshots, CSV tables, run manifests."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .mesh import TriMesh, read_mesh, write_mesh  # noqa: F401  (mesh file format lives in mesh.py)
from .verification import ERROR_COLUMNS

MINIMA_COLUMNS = ("step", "time", "min_u", "min_v", "min_m")
DIAGNOSTICS_COLUMNS = ("step", "time", "max_v", "l2_m", "dt_sum_m_h1_sq", "dt_sum_dtm_l2_sq", "v_sup_ok")


def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_vtk(path, mesh: TriMesh, scalars: Mapping[str, np.ndarray], vectors: Mapping[str, np.ndarray] | None = None,
              title: str = "haptofem") -> None:
    """Legacy ASCII unstructured grid with point data; vectors are ``(nv, 2)`` and get z = 0."""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    out += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    out.append(f"CELL_TYPES {nt}")
    out += ["5"] * nt
    out.append(f"POINT_DATA {nv}")
    for name, vals in scalars.items():
        vals = np.asarray(vals, dtype=float)
        if vals.shape != (nv,):
            raise ValueError(f"scalar field {name!r} has shape {vals.shape}, expected ({nv},)")
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [_num(v) for v in vals]
    for name, vals in (vectors or {}).items():
        vals = np.asarray(vals, dtype=float).reshape(nv, 2)
        out.append(f"VECTORS {name} double")
        out += [f"{_num(a)} {_num(b)} 0" for a, b in vals]
    Path(path).write_text("\n".join(out) + "\n")


def write_state_vtk(path, state, title: str = "haptofem") -> None:
    scalars = {"u": state.u.values, "v": state.v.values, "m": state.m.values}
    vectors = {}
    if hasattr(state, "s"):
        scalars["s"] = state.s.values
    if hasattr(state, "sigma"):
        vectors["sigma"] = state.sigma.values
    write_vtk(path, state.mesh, scalars, vectors, title=f"{title} step={state.step} t={state.time:.17g}")


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_num(x) for x in row])


def write_minima_csv(path, series) -> None:
    cols = MINIMA_COLUMNS + (("min_s",) if series.has_s else ())
    write_csv(path, cols, series.rows())


def write_diagnostics_csv(path, report) -> None:
    write_csv(path, DIAGNOSTICS_COLUMNS, report.rows)


def write_errors_csv(path, table) -> None:
    rows = [[getattr(r, c) for c in ERROR_COLUMNS] for r in table.rows]
    write_csv(path, ERROR_COLUMNS, rows)


def write_manifest(path, data: Mapping) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
