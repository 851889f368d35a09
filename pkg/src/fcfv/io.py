"""Mesh JSON, legacy VTK export and run manifests."""
import json
import platform
import time

import numpy as np

from .mesh import CELL_NVERTS, CellType, Mesh, MeshError, Tag

SCHEMA_VERSION = 1

VTK_CELL_IDS = {
    CellType.TRI: 5,
    CellType.QUA: 9,
    CellType.TET: 10,
    CellType.HEX: 12,
    CellType.PRI: 13,
    CellType.PYR: 14,
}


def mesh_to_dict(mesh):
    """Schema: version, nsd, vertices, cells [{type, verts}], boundary [{verts, tag}].

    Only non-Dirichlet boundary tags are stored; interior faces are derived.
    """
    cells = [
        {"type": CellType(t).name, "verts": mesh.cell_vertices(e).tolist()}
        for e, t in enumerate(mesh.cell_types)
    ]
    boundary = [{"verts": [int(v) for v in verts], "tag": Tag(t).name} for verts, t in mesh.boundary_spec()]
    return {
        "version": SCHEMA_VERSION,
        "nsd": mesh.nsd,
        "vertices": mesh.vertices.tolist(),
        "cells": cells,
        "boundary": boundary,
    }


def _tag(value):
    if isinstance(value, str):
        try:
            return Tag[value.upper()]
        except KeyError:
            raise MeshError(f"unknown boundary tag {value!r}") from None
    return Tag(int(value))


def mesh_from_dict(doc):
    required = {"version", "nsd", "vertices", "cells"}
    missing = required - set(doc)
    if missing:
        raise MeshError(f"mesh JSON missing keys: {sorted(missing)}")
    extra = set(doc) - required - {"boundary"}
    if extra:
        raise MeshError(f"mesh JSON has unknown keys: {sorted(extra)}")
    if doc["version"] != SCHEMA_VERSION:
        raise MeshError(f"unsupported mesh schema version {doc['version']}")
    X = np.array(doc["vertices"], dtype=float)
    if X.ndim != 2 or X.shape[1] != doc["nsd"]:
        raise MeshError("vertex array does not match nsd")
    types = [c["type"] for c in doc["cells"]]
    conn = [c["verts"] for c in doc["cells"]]
    bnd = [(b["verts"], _tag(b["tag"])) for b in doc.get("boundary", [])]
    return Mesh.build(X, types, conn, bnd)


def write_mesh_json(path, mesh):
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh)


def read_mesh_json(path):
    with open(path) as fh:
        return mesh_from_dict(json.load(fh))


def _fmt(x):
    return format(float(x), ".17g")


def write_vtk(path, mesh, cell_data=None, title="fcfv"):
    """Legacy ASCII UNSTRUCTURED_GRID with optional CELL_DATA.

    ``cell_data`` maps names to arrays of shape (ne,) (scalars) or
    (ne, nsd) (vectors, padded to 3 components).
    """
    X = mesh.vertices
    if X.shape[1] == 2:
        X = np.hstack([X, np.zeros((len(X), 1))])
    ne = mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(X)} double")
    lines += [" ".join(_fmt(v) for v in p) for p in X]
    conns = []
    for e, t in enumerate(mesh.cell_types):
        t = CellType(t)
        if t not in VTK_CELL_IDS:
            raise MeshError(f"no VTK id for cell type {t}")
        conns.append(mesh.cells[e, : CELL_NVERTS[t]])
    size = sum(len(c) + 1 for c in conns)
    lines.append(f"CELLS {ne} {size}")
    lines += [" ".join(str(int(v)) for v in [len(c), *c]) for c in conns]
    lines.append(f"CELL_TYPES {ne}")
    lines += [str(VTK_CELL_IDS[CellType(t)]) for t in mesh.cell_types]
    if cell_data:
        lines.append(f"CELL_DATA {ne}")
        for name, arr in cell_data.items():
            a = np.asarray(arr, dtype=float)
            if a.shape[0] != ne:
                raise ValueError(f"cell data {name!r} has {a.shape[0]} rows, expected {ne}")
            if a.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [_fmt(v) for v in a]
            else:
                a = np.hstack([a, np.zeros((ne, 3 - a.shape[1]))]) if a.shape[1] < 3 else a
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(_fmt(v) for v in row) for row in a]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_points(path):
    """Points of a legacy VTK file written by :func:`write_vtk`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("POINTS"))
    n = int(lines[i].split()[1])
    return np.array([[float(v) for v in l.split()] for l in lines[i + 1 : i + 1 + n]])


def solution_cell_data(sol, E=None):
    """Cell fields for export: centroid values, recoveries and derived fields."""
    data = {}
    c = sol.coeffs
    if c.ndim == 2:
        data["u"] = c[:, 0]
        data["u_star"] = sol.u_star
        data["q_magnitude"] = np.linalg.norm(sol.q, axis=1)
    else:
        data["velocity"] = c[:, :, 0]
        data["velocity_star"] = sol.u_star
        data["p"] = sol.pressure
    if E is not None:
        data["indicator"] = E
    return data


def versions():
    import numpy
    import scipy
    import sympy

    return {
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
    }


def write_manifest(path, config, outputs, timings, status=0, message=""):
    doc = {
        "config": config,
        "outputs": [str(p) for p in outputs],
        "timings": timings,
        "versions": versions(),
        "status": status,
        "message": message,
        "written": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=str)
    return doc
