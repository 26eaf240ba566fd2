"""Deterministic JSON and plot-ready CSV output."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from ..optim.lp import LpProblem, solve_lp
from ..setgeom import HPolytope, Zonotope, polygon_vertices


def _format(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_format(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_format(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _format(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))  # "inf", "nan": JSON has no literal for these
        text = f"{x:.17g}"
        return text if any(ch in text for ch in ".eE") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj, indent: int = 1) -> str:
    """Sorted keys, floats at 17 significant digits, trailing newline."""
    return _format(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_canonical(obj))


def hpoly_vertices_2d(P: HPolytope) -> np.ndarray:
    """Counter-clockwise vertices of a bounded 2-D polytope with non-empty interior."""
    norms = np.linalg.norm(P.C, axis=1)
    # Chebyshev center as the interior point
    res = solve_lp(LpProblem(c=np.array([0.0, 0.0, -1.0]),
                             A_ub=np.hstack([P.C, norms[:, None]]), b_ub=P.d,
                             lb=np.array([-np.inf, -np.inf, 0.0])))
    if not res.ok or res.solution[2] <= 1e-12:
        raise ValueError("polytope has no interior")
    hs = HalfspaceIntersection(np.hstack([P.C, -P.d[:, None]]), res.solution[:2])
    pts = hs.intersections
    hull = ConvexHull(pts)
    return pts[hull.vertices]


def write_plot_csv(path, family=None, oracle=None, traces=None) -> None:
    """Rows ``series,index,x_1,x_2``: closed level polylines and closed-loop traces."""
    rows = []
    if family is not None and family.state_dim == 2:
        for j in range(family.N + 1):
            verts = polygon_vertices(family.projected(j))
            rows += [("level", j, *v) for v in np.vstack([verts, verts[:1]])]
    if oracle is not None and oracle[0].dim == 2:
        for j, P in enumerate(oracle):
            verts = hpoly_vertices_2d(P)
            rows += [("oracle_level", j, *v) for v in np.vstack([verts, verts[:1]])]
    for name, states in (traces or {}).items():
        rows += [(name, k, *x) for k, x in enumerate(states) if len(x) == 2]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "index", "x_1", "x_2"])
        for series, idx, a, b in rows:
            writer.writerow([series, idx, f"{a:.17g}", f"{b:.17g}"])


def write_trace_csv(path, states, inputs, indices) -> None:
    n = len(states[0])
    m = len(inputs[0]) if inputs else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)] + ["j"])
        for k, x in enumerate(states):
            if k < len(inputs):
                writer.writerow([k] + [f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in inputs[k]] + [indices[k]])
            else:
                writer.writerow([k] + [f"{v:.17g}" for v in x] + [""] * m + [""])
