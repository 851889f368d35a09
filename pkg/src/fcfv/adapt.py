"""Error indicator, target cell sizes, triangle bisection and the adapt loop.

The indicator compares the second-order linear field with the constant
recovery computed from the same traces.  Target sizes follow the a priori
estimate ``E ~ h^(1 + nsd/2)`` and are capped to a factor 2 change per
iteration.  Triangles are refined by conforming newest-vertex bisection;
other cell types export a per-vertex size field for an external mesher.
"""
import csv
from dataclasses import dataclass, field
import json
import logging
from typing import Callable, Optional

import numpy as np

from .errors import LinearField, cell_rms_errors
from .geometry import compute_geometry
from .mesh import CellType, Mesh, MeshError, Tag

log = logging.getLogger(__name__)

HISTORY_FIELDS = ["iter", "n_cells", "max_E", "max_err_u_star", "max_err_u", "efficiency"]


def error_indicator(geom, coeffs, u_star):
    """Per-cell ``sqrt(|cell|^-1 int (u - u*)^2)``.

    ``u - u*`` is linear, ``d0 + g . (x - xc)``, so the integral is
    ``d0^2 |cell| + g^T S g`` with ``S`` the centred second moments.
    Vector fields (``coeffs`` (ne, k, M), ``u_star`` (ne, k)) give the RMS
    over components.
    """
    c = np.asarray(coeffs, dtype=float)
    us = np.asarray(u_star, dtype=float)
    if c.ndim == 2:
        c, us = c[:, None, :], us[:, None]
    S = geom.second_moments() / geom.volume[:, None, None]
    d0 = c[:, :, 0] - us
    g = c[:, :, 1:]
    sq = d0**2 + np.einsum("eki,eij,ekj->ek", g, S, g)
    return np.sqrt(np.maximum(sq, 0.0).mean(axis=1))


def target_size(h, E, eps, nsd, cap=2.0, min_size=1e-6):
    """``h* = h (eps / E)^(1 / (1 + nsd/2))`` limited to ``[h/cap, cap h]``.

    Cells with ``E = 0`` get ``cap h``.  Results below ``min_size`` are
    clamped.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    h = np.asarray(h, dtype=float)
    E = np.asarray(E, dtype=float)
    if np.any(E < 0):
        raise ValueError("indicator values must be non-negative")
    expo = 1.0 / (1.0 + nsd / 2.0)
    with np.errstate(divide="ignore"):
        raw = np.where(E > 0, h * (eps / np.where(E > 0, E, 1.0)) ** expo, cap * h)
    out = np.clip(raw, h / cap, cap * h)
    small = out < min_size
    if np.any(small):
        log.warning("%d target sizes below %.1e clamped", int(small.sum()), min_size)
        out = np.maximum(out, min_size)
    return out


def _longest_edge_first(X, tris):
    """Rotate each triangle so the refinement edge (v1, v2) is its longest edge."""
    L = np.stack(
        [np.linalg.norm(X[tris[:, (i + 1) % 3]] - X[tris[:, (i + 2) % 3]], axis=1) for i in range(3)],
        axis=1,
    )
    k = L.argmax(axis=1)
    return np.stack([tris[np.arange(len(tris)), (k + j) % 3] for j in range(3)], axis=1)


def _edge_key(a, b, nv):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo.astype(np.int64) * nv + hi


class BisectionMesh:
    """Triangle mesh with newest-vertex refinement edges.

    Each row ``(a, b, c)`` of ``tris`` is counter-clockwise with refinement
    edge ``(b, c)``.  Boundary tags other than Dirichlet are tracked per
    edge and inherited by the halves of a split edge.
    """

    def __init__(self, vertices, tris, edge_tags=None):
        self.X = np.asarray(vertices, dtype=float)
        self.tris = np.asarray(tris, dtype=np.int64)
        self.edge_tags = dict(edge_tags or {})

    @classmethod
    def from_mesh(cls, mesh):
        if mesh.nsd != 2 or np.any(mesh.cell_types != CellType.TRI):
            raise MeshError("bisection refinement needs a triangular mesh")
        X = mesh.vertices.copy()
        tris = _longest_edge_first(X, mesh.cells[:, :3].copy())
        tags = {tuple(sorted(int(v) for v in verts)): int(t) for verts, t in mesh.boundary_spec()}
        return cls(X, tris, tags)

    def to_mesh(self, meta=None):
        boundary = [(list(k), t) for k, t in self.edge_tags.items()]
        return Mesh.build(self.X, [CellType.TRI] * len(self.tris), self.tris, boundary, meta or {})

    def diameters(self):
        t = self.tris
        return np.max(
            [np.linalg.norm(self.X[t[:, i]] - self.X[t[:, (i + 1) % 3]], axis=1) for i in range(3)],
            axis=0,
        )

    def bisect(self, marked):
        """Bisect ``marked`` triangles and close hanging nodes.

        Returns the parent index of every new triangle.
        """
        parent = np.arange(len(self.tris))
        mids = {}
        flag = np.zeros(len(self.tris), dtype=bool)
        flag[np.asarray(marked, dtype=np.int64)] = True
        while flag.any():
            parent, flag = self._split(flag, parent, mids)
        return parent

    def _split(self, flag, parent, mids):
        X, t = self.X, self.tris
        b, c = t[flag, 1], t[flag, 2]
        nv0 = len(X)
        keys = (np.minimum(b, c), np.maximum(b, c))
        new_pts = []
        m = np.empty(len(b), dtype=np.int64)
        for i, key in enumerate(zip(keys[0].tolist(), keys[1].tolist())):
            v = mids.get(key)
            if v is None:
                v = nv0 + len(new_pts)
                mids[key] = v
                new_pts.append(0.5 * (X[key[0]] + X[key[1]]))
                tag = self.edge_tags.pop(key, None)
                if tag is not None:
                    self.edge_tags[(min(key[0], v), max(key[0], v))] = tag
                    self.edge_tags[(min(key[1], v), max(key[1], v))] = tag
            m[i] = v
        if new_pts:
            self.X = np.vstack([X, np.array(new_pts)])
        a = t[flag, 0]
        kids = np.concatenate([np.stack([m, a, b], axis=1), np.stack([m, c, a], axis=1)])
        keep = ~flag
        pidx = parent[flag]
        self.tris = np.concatenate([t[keep], kids])
        parent = np.concatenate([parent[keep], pidx, pidx])
        # closure: any triangle with a split edge still whole is bisected next
        nv = len(self.X)
        split = np.array([k0 * nv + k1 for k0, k1 in mids], dtype=np.int64)
        T = self.tris
        hanging = np.zeros(len(T), dtype=bool)
        for i in range(3):
            hanging |= np.isin(_edge_key(T[:, i], T[:, (i + 1) % 3], nv), split)
        return parent, hanging


def interpolated_targets(mesh, cell_sizes):
    """Cell targets from the vertex size field.

    Each cell takes the minimum of its own target and the vertex sizes of
    its vertices, so a cell is never coarser than requested.
    """
    v = vertex_size_field(mesh, cell_sizes)
    conn = mesh.cells
    vmin = np.where(conn >= 0, v[np.maximum(conn, 0)], np.inf).min(axis=1)
    return np.minimum(vmin, cell_sizes)


def refine_triangular_mesh(mesh, size_field, min_size=1e-6, max_passes=60, interpolate=True):
    """Bisect triangles until each diameter is at most its target size.

    With ``interpolate`` the per-cell targets are first averaged to the
    vertices and each cell takes the minimum over its vertices, so
    refinement grades into neighbouring cells.  Children inherit their
    parent's target.  Targets are clamped to ``min_size``.  Cells already
    below target are kept (no coarsening).  Returns the refined mesh.
    """
    bm = BisectionMesh.from_mesh(mesh)
    target = np.asarray(size_field, dtype=float)
    if len(target) != mesh.n_cells:
        raise ValueError("size field must have one value per cell")
    if interpolate:
        target = interpolated_targets(mesh, target)
    small = target < min_size
    if np.any(small):
        log.warning("%d target sizes below %.1e clamped", int(small.sum()), min_size)
    target = np.maximum(target, min_size)
    for _ in range(max_passes):
        marked = np.flatnonzero(bm.diameters() > target * (1 + 1e-12))
        if marked.size == 0:
            break
        parent = bm.bisect(marked)
        target = target[parent]
    else:
        log.warning("bisection stopped after %d passes", max_passes)
    return bm.to_mesh(meta={"family": "adapted"})


def vertex_size_field(mesh, cell_sizes):
    """Per-vertex sizes: inverse-distance average of incident cell targets.

    Distances are measured to the vertex average of each cell.
    """
    conn = mesh.cells
    valid = conn >= 0
    c = np.maximum(conn, 0)
    X = mesh.vertices
    centre = (X[c] * valid[..., None]).sum(axis=1) / valid.sum(axis=1)[:, None]
    w = np.where(valid, 1.0 / np.maximum(np.linalg.norm(X[c] - centre[:, None], axis=-1), 1e-300), 0.0)
    num = np.bincount(c[valid], weights=(w * np.asarray(cell_sizes)[:, None])[valid], minlength=mesh.n_vertices)
    den = np.bincount(c[valid], weights=w[valid], minlength=mesh.n_vertices)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def write_size_field(path, mesh, cell_sizes, iteration):
    """JSON size field for an external mesher (per-vertex target sizes)."""
    sizes = vertex_size_field(mesh, cell_sizes)
    doc = {
        "mesh_checksum": mesh.checksum(),
        "iteration": int(iteration),
        "n_vertices": int(mesh.n_vertices),
        "sizes": sizes.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return doc


@dataclass
class AdaptState:
    eps: float
    history: list = field(default_factory=list)
    iteration: int = 0
    mesh: Optional[Mesh] = None
    solution: object = None
    E: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    h_target: Optional[np.ndarray] = None
    converged: bool = False
    stopped: str = ""

    @property
    def efficiency(self):
        return [r["efficiency"] for r in self.history]

    def write_history(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, extrasaction="ignore")
            w.writeheader()
            w.writerows(self.history)


def _solve(problem, mesh, geom):
    from .poisson import PoissonProblem, solve_poisson
    from .stokes import solve_stokes

    if isinstance(problem, PoissonProblem):
        return solve_poisson(mesh, problem, geom)
    return solve_stokes(mesh, problem, geom)


def adapt_loop(
    problem,
    mesh,
    eps,
    max_iter=10,
    exact: Optional[Callable] = None,
    tag_rule: Optional[Callable] = None,
    min_size=1e-6,
    relative=False,
    size_field_path=None,
):
    """Solve, indicate, size and remesh until ``max E <= eps``.

    ``exact`` (the exact primal field) enables the exact-error columns and
    the efficiency ``max err(u*) / max E``.  With ``relative=True`` the
    tolerance is scaled by the maximum of ``|u*|``.  Non-triangular meshes
    stop after the first indicator pass and write the size field to
    ``size_field_path``.
    """
    state = AdaptState(float(eps))
    for it in range(1, max_iter + 1):
        if tag_rule is not None:
            mesh = mesh.retag(tag_rule)
        geom = compute_geometry(mesh)
        sol = _solve(problem, mesh, geom)
        E = error_indicator(geom, sol.coeffs, sol.u_star)
        tol = eps * float(np.abs(sol.u_star).max()) if relative else eps
        row = {"iter": it, "n_cells": mesh.n_cells, "max_E": float(E.max())}
        if exact is not None:
            e_star = cell_rms_errors(geom, sol.u_star, exact)
            e_u = cell_rms_errors(geom, LinearField(sol.coeffs), exact)
            row["max_err_u_star"] = float(e_star.max())
            row["max_err_u"] = float(e_u.max())
            row["efficiency"] = float(e_star.max() / E.max()) if E.max() > 0 else float("nan")
        state.history.append(row)
        state.iteration, state.mesh, state.solution, state.E, state.h = it, mesh, sol, E, geom.h
        log.info("iteration %d: %d cells, max E %.3e", it, mesh.n_cells, E.max())
        if E.max() <= tol:
            state.converged = True
            state.stopped = "tolerance reached"
            return state
        state.h_target = target_size(geom.h, E, tol, mesh.nsd, min_size=min_size)
        is_tri = mesh.nsd == 2 and np.all(mesh.cell_types == CellType.TRI)
        if not is_tri:
            if size_field_path is not None:
                write_size_field(size_field_path, mesh, state.h_target, it)
            state.stopped = "remesher unavailable; size field written"
            return state
        if it < max_iter:
            mesh = refine_triangular_mesh(mesh, state.h_target, min_size=min_size)
    state.stopped = "max_iter reached"
    return state
