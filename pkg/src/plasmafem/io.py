"""Output writers: legacy ASCII VTK, CSV tables, JSON reports, Matrix Market."""

import csv
import json
from pathlib import Path

import numpy as np
import scipy.io

# our local P2 node order is 4 vertices then edges (01, 02, 03, 12, 13, 23);
# VTK_QUADRATIC_TETRA wants edges (01, 12, 02, 03, 13, 23)
_VTK_P2_ORDER = np.array([0, 1, 2, 3, 4, 7, 5, 6, 8, 9])
_VTK_QUADRATIC_TETRA = 24


def _ensure_parent(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(a):
    return "\n".join(" ".join(f"{v:.10g}" for v in row) for row in np.atleast_2d(a))


def write_vtk(path, space, E=None, p=None, title="plasmafem field", cell_data=None):
    """Write a P2 field on quadratic tetrahedra; complex data as _re/_im arrays.

    The P1 pressure is extended to edge midpoints by linear interpolation.
    """
    path = _ensure_parent(path)
    mesh = space.mesh
    pts = space.node_coords
    cells = space.tet_nodes[:, _VTK_P2_ORDER]
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double", _fmt(pts)]
    lines.append(f"CELLS {len(cells)} {11 * len(cells)}")
    lines.append(_fmt(np.column_stack([np.full(len(cells), 10), cells])))
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.append("\n".join([str(_VTK_QUADRATIC_TETRA)] * len(cells)))
    lines.append(f"POINT_DATA {len(pts)}")
    if E is not None:
        Ev = np.asarray(E).reshape(-1, 3)
        for tag, part in (("re", Ev.real), ("im", Ev.imag)):
            lines += [f"VECTORS E_{tag} double", _fmt(part)]
        lines += ["SCALARS E_abs double 1", "LOOKUP_TABLE default",
                  _fmt(np.linalg.norm(Ev, axis=1)[:, None])]
    if p is not None:
        p = np.asarray(p)
        e = space.edges
        pn = np.concatenate([p, 0.5 * (p[e[:, 0]] + p[e[:, 1]])])
        for tag, part in (("re", pn.real), ("im", pn.imag)):
            lines += [f"SCALARS p_{tag} double 1", "LOOKUP_TABLE default", _fmt(part[:, None])]
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_tets}")
        for name, vals in cell_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default",
                      _fmt(np.asarray(vals, float)[:, None])]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_csv(path, header, rows):
    path = _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r])
    return path


def write_history(path, history):
    """GMRES relative residual per iteration."""
    return write_csv(path, ["iteration", "residual"],
                     [(k, float(r)) for k, r in enumerate(history)])


def write_dof_map(path, space):
    """Vector dof -> (node, component, x, y, z)."""
    rows = []
    for node, x in enumerate(space.node_coords):
        for c in range(3):
            rows.append((3 * node + c, node, c, *map(float, x)))
    return write_csv(path, ["dof", "node", "component", "x", "y", "z"], rows)


def write_multipliers(path, problem, lam):
    """Multiplier dump with interface-node coordinates."""
    gs = problem.global_space
    rows = []
    for r in range(problem.n_rows):
        node = int(problem.row_node[r])
        comp = int(problem.row_comp[r])
        x = gs.node_coords[node] if comp >= 0 else gs.mesh.vertices[node]
        hi, lo = problem.row_pair[r]
        rows.append((r, node, "p" if comp < 0 else comp, int(hi), int(lo), *map(float, x),
                     float(lam[r].real), float(lam[r].imag)))
    return write_csv(path, ["row", "node", "component", "subdomain_hi", "subdomain_lo",
                            "x", "y", "z", "lambda_re", "lambda_im"], rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True)


def write_json(path, obj):
    path = _ensure_parent(path)
    path.write_text(to_json(obj) + "\n")
    return path


def write_matrix_market(path, matrix, comment=""):
    path = _ensure_parent(path)
    scipy.io.mmwrite(str(path), matrix, comment=comment)
    return path
