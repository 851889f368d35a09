"""Random distortion and graded stretching of structured meshes.

Distortion keeps every quadrilateral face planar.  Meshes whose quadrilateral
faces all lie in grid planes (hexahedra, pyramids, hybrids) are first
distorted by perturbing the interior grid planes themselves and placing each
grid vertex at the intersection of its three planes; vertices on the
boundary slide within their boundary plane.  A second stage moves each
interior vertex randomly within the null space of the normals of its
incident quadrilateral faces (a full move when it has none).
"""
import logging

import numpy as np
from scipy.optimize import brentq

from .geometry import compute_geometry
from .mesh import CELL_EDGES, CELL_NVERTS, CellType, DegenerateCellError, MeshError

log = logging.getLogger(__name__)


def edge_lengths(mesh, vertices=None):
    """Per-cell (min, max) edge length, each of shape (ne,)."""
    X = mesh.vertices if vertices is None else vertices
    lo = np.full(mesh.n_cells, np.inf)
    hi = np.zeros(mesh.n_cells)
    for t in np.unique(mesh.cell_types):
        t = CellType(t)
        idx = np.flatnonzero(mesh.cell_types == t)
        conn = mesh.cells[idx]
        ed = np.array(CELL_EDGES[t])
        L = np.linalg.norm(X[conn[:, ed[:, 0]]] - X[conn[:, ed[:, 1]]], axis=-1)
        lo[idx] = L.min(axis=1)
        hi[idx] = L.max(axis=1)
    return lo, hi


def stretching_factor(mesh, vertices=None):
    """Max over cells of the max/min edge ratio."""
    lo, hi = edge_lengths(mesh, vertices)
    return float((hi / lo).max())


def boundary_vertices(mesh):
    bf = mesh.boundary_faces
    fv = mesh.face_vertices[bf]
    return np.unique(fv[fv >= 0])


def _quad_faces(mesh):
    if mesh.nsd != 3:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(mesh.face_vertices[:, 3] >= 0)


def _grid_plane_faces(mesh):
    """True if every quadrilateral face lies in a plane of the structured grid."""
    gi = mesh.meta.get("grid_index")
    if gi is None:
        return False
    q = _quad_faces(mesh)
    if q.size == 0:
        return False
    idx = np.asarray(gi)[mesh.face_vertices[q]]  # (nq, 4, 3)
    if np.any(idx < 0):
        return False
    same = (idx == idx[:, :1, :]).all(axis=1)
    return bool(same.any(axis=1).all())


def _plane_stage(mesh, rng, budget):
    """Displacements from perturbing interior grid planes, scaled to ``budget``."""
    gi = np.asarray(mesh.meta["grid_index"])
    shape = mesh.meta["grid_shape"]
    nsd = mesh.nsd
    X = mesh.vertices
    grid = np.flatnonzero((gi >= 0).all(axis=1))
    # plane a_k: x_a = k/n_a + off + sum_b tilt_b (x_b - 1/2), boundary planes fixed
    offs = [rng.uniform(-1.0, 1.0, m + 1) for m in shape]
    tilts = [rng.uniform(-1.0, 1.0, (m + 1, nsd)) for m in shape]
    for a, m in enumerate(shape):
        offs[a][[0, m]] = 0.0
        tilts[a][[0, m]] = 0.0
        tilts[a][:, a] = 0.0

    def place(scale):
        A = np.zeros((len(grid), nsd, nsd))
        rhs = np.zeros((len(grid), nsd))
        for a, m in enumerate(shape):
            k = gi[grid, a]
            t = scale * tilts[a][k]
            A[:, a, :] = -t
            A[:, a, a] = 1.0
            rhs[:, a] = k / m + scale * offs[a][k] - 0.5 * t.sum(axis=1)
        return np.linalg.solve(A, rhs[..., None])[..., 0]

    # displacement grows ~linearly with scale; rescale to meet the budget
    d0 = np.linalg.norm(place(1e-3) - X[grid], axis=1).max()
    if d0 == 0:
        return np.zeros_like(X)
    scale = 1e-3 * budget / d0
    for _ in range(50):
        Y = place(scale)
        if np.linalg.norm(Y - X[grid], axis=1).max() <= budget:
            break
        scale *= 0.9
    disp = np.zeros_like(X)
    disp[grid] = Y - X[grid]
    return disp


def _recentre_extra(mesh, Y):
    """Move non-grid vertices (cell centres) to the mean of their host cell's grid vertices."""
    gi = mesh.meta.get("grid_index")
    if gi is None:
        return Y
    gi = np.asarray(gi)
    extra = np.flatnonzero((gi < 0).any(axis=1))
    if extra.size == 0:
        return Y
    Y = Y.copy()
    acc = np.zeros((mesh.n_vertices, mesh.nsd))
    cnt = np.zeros(mesh.n_vertices)
    for e in range(mesh.n_cells):
        vs = mesh.cell_vertices(e)
        isx = np.isin(vs, extra)
        if isx.any():
            c = vs[isx][0]
            others = vs[~isx]
            acc[c] += Y[others].sum(axis=0)
            cnt[c] += len(others)
    # each centre is shared by the cells of one box; all their grid vertices are the box corners
    ok = cnt > 0
    Y[ok] = acc[ok] / cnt[ok, None]
    return Y


def _null_space_stage(mesh, rng, budget, movable):
    nsd = mesh.nsd
    X = mesh.vertices
    disp = np.zeros_like(X)
    raw = rng.normal(size=X.shape)
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    raw *= budget * rng.uniform(0.0, 1.0, size=(len(X), 1))
    q = _quad_faces(mesh)
    normals = [[] for _ in range(len(X))]
    if q.size:
        Xq = X[mesh.face_vertices[q]]
        nq = np.cross(Xq[:, 2] - Xq[:, 0], Xq[:, 3] - Xq[:, 1])
        nq /= np.linalg.norm(nq, axis=1, keepdims=True)
        for f, n in zip(mesh.face_vertices[q], nq):
            for v in f:
                normals[v].append(n)
    stuck = 0
    for v in movable:
        if not normals[v]:
            disp[v] = raw[v]
            continue
        N = np.array(normals[v])
        _, sv, vt = np.linalg.svd(N)
        rank = int((sv > 1e-10).sum())
        if rank >= nsd:
            stuck += 1
            continue
        basis = vt[rank:]
        disp[v] = basis.T @ (basis @ raw[v])
    if stuck:
        log.info("%d interior vertices left unmoved (quad-face planarity constraints)", stuck)
    return disp


def distort_mesh(mesh, seed, fraction=0.25):
    """Randomly distort ``mesh`` keeping quadrilateral faces planar.

    Each vertex moves by at most ``fraction * h_min`` where ``h_min`` is the
    minimum edge length of the input.  The result is deterministic for a
    given ``seed``.
    """
    rng = np.random.default_rng(seed)
    h_min = float(edge_lengths(mesh)[0].min())
    total = fraction * h_min
    bnd = boundary_vertices(mesh)
    interior = np.setdiff1d(np.arange(mesh.n_vertices), bnd)
    plane = _grid_plane_faces(mesh)
    stage2_budget = total / 2 if plane else total

    disp = np.zeros_like(mesh.vertices)
    if plane:
        disp += _plane_stage(mesh, rng, total / 2)
    disp += _null_space_stage(mesh, rng, stage2_budget, interior)

    for _ in range(20):
        Y = mesh.vertices + disp
        if plane:
            Y = _recentre_extra(mesh, Y)
        try:
            out = mesh.with_vertices(Y)
            compute_geometry(out)
            return out
        except DegenerateCellError:
            disp *= 0.5
            log.info("distortion produced an inverted cell; halving displacements")
    raise MeshError("could not distort mesh without inverting cells")


def graded_map(z, kappa, z_b=0.5):
    """Piecewise-linear map of [0, 1] with slope ``kappa`` below ``z_b``.

    Above ``z_b`` the slope is constant so that 1 maps to 1.  The map does
    not depend on the mesh, so stretched meshes of successive levels are
    refinements of one another.
    """
    z = np.asarray(z, dtype=float)
    zb = kappa * z_b
    upper = (1.0 - zb) / (1.0 - z_b)
    return np.where(z <= z_b, kappa * z, zb + upper * (z - z_b))


def _stretch_vertices(mesh, kappa):
    Y = mesh.vertices.copy()
    Y[:, -1] = graded_map(Y[:, -1], kappa)
    return Y


def stretch_mesh(mesh, s, tol=1e-3):
    """Compress the lower half of the last coordinate so the stretching factor equals ``s``.

    The last coordinate is mapped by :func:`graded_map`; its slope ``kappa``
    on ``[0, 1/2]`` is found by root finding on the measured max/min edge
    ratio.  ``s = 1`` (or the mesh's own ratio) returns the mesh unchanged.
    """
    if s < 1:
        raise ValueError("stretching factor must be >= 1")
    base = stretching_factor(mesh)
    if s <= base * (1 + tol):
        if s < base * (1 - tol):
            raise ValueError(f"stretching factor {s} below the mesh's intrinsic value {base:.4f}")
        return mesh

    def g(log_k):
        return np.log(stretching_factor(mesh, _stretch_vertices(mesh, np.exp(log_k)))) - np.log(s)

    lo = -1.0
    while g(lo) < 0:
        lo -= 1.0
        if lo < np.log(1e-12):
            raise ValueError(f"cannot reach stretching factor {s}")
    log_k = brentq(g, lo, 0.0, xtol=1e-12)
    return mesh.with_vertices(_stretch_vertices(mesh, np.exp(log_k)))
