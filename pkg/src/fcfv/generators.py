"""Structured meshes of the unit square/cube for every supported cell type.

``n`` is the number of divisions along ``x_1``.  For the 3D hybrid family the
cube is split into ``n x n x 2n`` boxes; the top layer of boxes (touching
``x_3 = 1``) is filled with five pyramids and two tetrahedra around the box
centre, every other box is a hexahedron.  ``n = 1`` gives one hexahedron, two
tetrahedra and five pyramids.
"""
import itertools

import numpy as np

from .mesh import CellType, Mesh, MeshError, cell_type_from_name

HYBRID = "HYBRID"

_SUPPORTED = {
    2: {CellType.TRI, CellType.QUA, HYBRID},
    3: {CellType.TET, CellType.HEX, CellType.PRI, CellType.PYR, HYBRID},
}


def _grid_vertices(shape):
    axes = [np.linspace(0.0, 1.0, m + 1) for m in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.meshgrid(*[np.arange(m + 1) for m in shape], indexing="ij")
    # x fastest
    coords = np.column_stack([g.transpose().ravel() for g in mesh])
    gidx = np.column_stack([g.transpose().ravel() for g in idx])
    return coords, gidx


def _vid2(n):
    def v(i, j):
        return i + (n + 1) * j

    return v


def _vid3(nx, ny):
    def v(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    return v


def _square_cells(n):
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.T.ravel(), j.T.ravel()
    v = _vid2(n)
    return i, j, v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)


def _cube_corners(nx, ny, nz):
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    v = _vid3(nx, ny)
    corners = {}
    for a, b, c in itertools.product((0, 1), repeat=3):
        corners[(a, b, c)] = v(i + a, j + b, k + c)
    return (i, j, k), corners


def _hex_conn(c):
    keys = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    return np.column_stack([c[k] for k in keys])


def _pad(conn):
    out = np.full((conn.shape[0], 8), -1, dtype=np.int64)
    out[:, : conn.shape[1]] = conn
    return out


def generate_structured_mesh(cell_type, nsd, n):
    """Structured mesh of ``[0, 1]^nsd``.

    Parameters
    ----------
    cell_type : CellType, str
        One of TRI, QUA (2D), TET, HEX, PRI, PYR (3D) or ``"HYBRID"``.
    nsd : int
        2 or 3.
    n : int
        Divisions along ``x_1`` (>= 1).

    All boundary faces are tagged Dirichlet; use :meth:`Mesh.retag` to apply
    a problem's boundary split.
    """
    if isinstance(cell_type, str) and cell_type.upper() == HYBRID:
        ct = HYBRID
    else:
        ct = cell_type_from_name(cell_type) if isinstance(cell_type, str) else CellType(cell_type)
    if nsd not in _SUPPORTED or ct not in _SUPPORTED[nsd]:
        name = ct if ct == HYBRID else ct.name
        raise MeshError(f"unsupported combination: {name} in {nsd}D")
    if int(n) < 1:
        raise MeshError("n must be >= 1")
    n = int(n)

    if nsd == 2:
        verts, gidx = _grid_vertices((n, n))
        i, j, v00, v10, v11, v01 = _square_cells(n)
        if ct == CellType.QUA:
            quad = np.ones(len(i), dtype=bool)
        elif ct == CellType.TRI:
            quad = np.zeros(len(i), dtype=bool)
        else:
            quad = (i + 0.5) / n < 0.5
        types, conn = [], []
        for e in range(len(i)):
            if quad[e]:
                types.append(CellType.QUA)
                conn.append([v00[e], v10[e], v11[e], v01[e], -1, -1, -1, -1])
            else:
                types += [CellType.TRI, CellType.TRI]
                conn.append([v00[e], v10[e], v11[e], -1, -1, -1, -1, -1])
                conn.append([v00[e], v11[e], v01[e], -1, -1, -1, -1, -1])
        meta = {"grid_shape": (n, n), "grid_index": gidx, "family": _family_name(ct)}
        return Mesh.from_padded(verts, np.array(types, dtype=np.int64), np.array(conn, dtype=np.int64), meta=meta)

    if ct == HYBRID:
        return _hybrid3d(n)

    verts, gidx = _grid_vertices((n, n, n))
    _, c = _cube_corners(n, n, n)
    if ct == CellType.HEX:
        conn = _pad(_hex_conn(c))
        types = np.full(len(conn), int(CellType.HEX))
    elif ct == CellType.TET:
        tets = []
        for perm in itertools.permutations(range(3)):
            p = [0, 0, 0]
            path = [tuple(p)]
            for ax in perm:
                p[ax] = 1
                path.append(tuple(p))
            tets.append(np.column_stack([c[q] for q in path]))
        conn = _pad(np.stack(tets, axis=1).reshape(-1, 4))
        types = np.full(len(conn), int(CellType.TET))
    elif ct == CellType.PRI:
        a = np.column_stack([c[(0, 0, 0)], c[(1, 0, 0)], c[(1, 1, 0)], c[(0, 0, 1)], c[(1, 0, 1)], c[(1, 1, 1)]])
        b = np.column_stack([c[(0, 0, 0)], c[(1, 1, 0)], c[(0, 1, 0)], c[(0, 0, 1)], c[(1, 1, 1)], c[(0, 1, 1)]])
        conn = _pad(np.stack([a, b], axis=1).reshape(-1, 6))
        types = np.full(len(conn), int(CellType.PRI))
    else:  # PYR
        hexes = _hex_conn(c)
        nc = len(hexes)
        centres = verts[hexes].mean(axis=1)
        cid = len(verts) + np.arange(nc)
        verts = np.vstack([verts, centres])
        gidx = np.vstack([gidx, np.full((nc, 3), -1)])
        from .mesh import CELL_FACES

        pyrs = [np.column_stack([hexes[:, list(f)], cid]) for f in CELL_FACES[CellType.HEX]]
        conn = _pad(np.stack(pyrs, axis=1).reshape(-1, 5))
        types = np.full(len(conn), int(CellType.PYR))
    meta = {"grid_shape": (n, n, n), "grid_index": gidx, "family": ct.name}
    return Mesh.from_padded(verts, types.astype(np.int64), conn, meta=meta)


def _family_name(ct):
    return ct if ct == HYBRID else ct.name


def _hybrid3d(n):
    shape = (n, n, 2 * n)
    verts, gidx = _grid_vertices(shape)
    (i, j, k), c = _cube_corners(*shape)
    hexes = _hex_conn(c)
    top = k == shape[2] - 1
    types = [np.full(int((~top).sum()), int(CellType.HEX))]
    conn = [_pad(hexes[~top])]

    th = hexes[top]
    nc = len(th)
    centres = verts[th].mean(axis=1)
    cid = len(verts) + np.arange(nc)
    verts = np.vstack([verts, centres])
    gidx = np.vstack([gidx, np.full((nc, 3), -1)])
    from .mesh import CELL_FACES

    hex_faces = CELL_FACES[CellType.HEX]
    pyr = []
    for fi, f in enumerate(hex_faces):
        if fi == 1:  # top face (4, 5, 6, 7) is split into two tetrahedra
            continue
        pyr.append(np.column_stack([th[:, list(f)], cid]))
    pyr = np.stack(pyr, axis=1).reshape(-1, 5)
    t1 = np.column_stack([th[:, 4], th[:, 5], th[:, 6], cid])
    t2 = np.column_stack([th[:, 4], th[:, 6], th[:, 7], cid])
    tets = np.stack([t1, t2], axis=1).reshape(-1, 4)
    types += [np.full(len(pyr), int(CellType.PYR)), np.full(len(tets), int(CellType.TET))]
    conn += [_pad(pyr), _pad(tets)]
    meta = {"grid_shape": shape, "grid_index": gidx, "family": HYBRID}
    return Mesh.from_padded(verts, np.concatenate(types).astype(np.int64), np.vstack(conn), meta=meta)
