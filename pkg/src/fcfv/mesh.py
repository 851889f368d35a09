"""Unstructured mesh data model for mixed 2D/3D cell types.

Local vertex numbering follows the VTK/CGNS convention for every cell type.
Local face templates list face vertices so that a positively oriented cell
has outward normals; reflected cells are detected geometrically and their
faces flipped, so generators need not care about orientation.
"""
from dataclasses import dataclass, field
from enum import IntEnum
import hashlib

import numpy as np


class CellType(IntEnum):
    TRI = 0
    QUA = 1
    TET = 2
    HEX = 3
    PRI = 4
    PYR = 5


class Tag(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2


CELL_DIM = {
    CellType.TRI: 2,
    CellType.QUA: 2,
    CellType.TET: 3,
    CellType.HEX: 3,
    CellType.PRI: 3,
    CellType.PYR: 3,
}

CELL_NVERTS = {
    CellType.TRI: 3,
    CellType.QUA: 4,
    CellType.TET: 4,
    CellType.HEX: 8,
    CellType.PRI: 6,
    CellType.PYR: 5,
}

CELL_FACES = {
    CellType.TRI: ((0, 1), (1, 2), (2, 0)),
    CellType.QUA: ((0, 1), (1, 2), (2, 3), (3, 0)),
    CellType.TET: ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2)),
    CellType.HEX: (
        (0, 3, 2, 1),
        (4, 5, 6, 7),
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    ),
    CellType.PRI: ((0, 2, 1), (3, 4, 5), (0, 1, 4, 3), (1, 2, 5, 4), (2, 0, 3, 5)),
    CellType.PYR: ((0, 3, 2, 1), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)),
}

SIMPLICES = (CellType.TRI, CellType.TET)


def _edges_of(ctype):
    if CELL_DIM[ctype] == 2:
        return tuple(tuple(sorted(f)) for f in CELL_FACES[ctype])
    edges = set()
    for f in CELL_FACES[ctype]:
        for a, b in zip(f, f[1:] + f[:1]):
            edges.add((min(a, b), max(a, b)))
    return tuple(sorted(edges))


CELL_EDGES = {ct: _edges_of(ct) for ct in CellType}

_TYPE_NAMES = {ct.name: ct for ct in CellType}


def cell_type_from_name(name):
    try:
        return _TYPE_NAMES[name.upper()]
    except KeyError:
        raise ValueError(f"unknown cell type {name!r}") from None


class MeshError(ValueError):
    """Raised for invalid or degenerate mesh input."""


class DegenerateCellError(MeshError):
    def __init__(self, cell, message="degenerate cell"):
        super().__init__(f"{message} (cell {cell})")
        self.cell = cell


def face_area_vectors(X):
    """Area-weighted normals and centroids of faces given by vertex coordinates.

    ``X`` has shape ``(..., nv, nsd)`` with ``nv`` = 2 (2D edge), 3 or 4.
    Returns ``(area_vector, centroid)``; the area vector follows the vertex
    ordering (right-hand rule in 3D, clockwise rotation in 2D).
    """
    nv, nsd = X.shape[-2], X.shape[-1]
    if nsd == 2:
        d = X[..., 1, :] - X[..., 0, :]
        av = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return av, 0.5 * (X[..., 0, :] + X[..., 1, :])
    if nv == 3:
        av = 0.5 * np.cross(X[..., 1, :] - X[..., 0, :], X[..., 2, :] - X[..., 0, :])
        return av, X.mean(axis=-2)
    a, b, c, d = (X[..., i, :] for i in range(4))
    av = 0.5 * np.cross(c - a, d - b)
    nrm = av / np.linalg.norm(av, axis=-1, keepdims=True)
    a1 = 0.5 * np.einsum("...i,...i->...", np.cross(b - a, c - a), nrm)
    a2 = 0.5 * np.einsum("...i,...i->...", np.cross(c - a, d - a), nrm)
    cen = (a1[..., None] * (a + b + c) + a2[..., None] * (a + c + d)) / (
        3.0 * (a1 + a2)[..., None]
    )
    return av, cen


def _signed_volumes(X, ctype):
    """Signed volume of cells with coordinates ``X`` (n, nv, nsd)."""
    nsd = X.shape[-1]
    x0 = X.mean(axis=1)
    vol = np.zeros(X.shape[0])
    for f in CELL_FACES[ctype]:
        av, cen = face_area_vectors(X[:, list(f), :])
        vol += np.einsum("ni,ni->n", av, cen - x0)
    return vol / nsd


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming mesh with derived faces.

    Use :meth:`Mesh.build` to construct one; the face arrays are derived from
    the cells.  All arrays are read-only.

    Attributes
    ----------
    vertices : (nv, nsd) float array
    cell_types : (ne,) int array of :class:`CellType`
    cells : (ne, 8) int array, padded with -1
    face_vertices : (nf, nvf) int array, padded with -1; ordered so the area
        vector points out of the left cell
    face_cells : (nf, 2) int array ``(left, right)``; right is -1 on the boundary
    face_tags : (nf,) int array of :class:`Tag`
    cell_faces : (ne, maxf) int array, padded with -1, in local face order
    """

    vertices: np.ndarray
    cell_types: np.ndarray
    cells: np.ndarray
    face_vertices: np.ndarray
    face_cells: np.ndarray
    face_tags: np.ndarray
    cell_faces: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def nsd(self):
        return self.vertices.shape[1]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def n_faces(self):
        return self.face_cells.shape[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def cell_vertices(self, e):
        return self.cells[e, : CELL_NVERTS[CellType(self.cell_types[e])]]

    def face_vertex_list(self, f):
        fv = self.face_vertices[f]
        return fv[fv >= 0]

    def type_counts(self):
        return {CellType(t).name: int(c) for t, c in zip(*np.unique(self.cell_types, return_counts=True))}

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def checksum(self):
        h = hashlib.sha256()
        for a in (self.vertices, self.cell_types, self.cells, self.face_tags):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    # ------------------------------------------------------------------ #

    @classmethod
    def build(cls, vertices, cell_types, cells, boundary=None, meta=None):
        """Create a mesh and derive its faces.

        Parameters
        ----------
        vertices : array_like (nv, nsd)
        cell_types : sequence of CellType (or names)
        cells : sequence of vertex-index sequences
        boundary : optional iterable of ``(verts, tag)`` pairs tagging boundary
            faces; untagged boundary faces are Dirichlet.
        meta : optional dict carried along (e.g. structured-grid indices).
        """
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must have shape (nv, 2) or (nv, 3)")
        nsd = vertices.shape[1]
        ctypes = np.array(
            [cell_type_from_name(t) if isinstance(t, str) else int(t) for t in cell_types],
            dtype=np.int64,
        )
        ne = len(ctypes)
        conn = np.full((ne, 8), -1, dtype=np.int64)
        for e, (t, c) in enumerate(zip(ctypes, cells)):
            t = CellType(t)
            if CELL_DIM[t] != nsd:
                raise MeshError(f"cell {e}: type {t.name} incompatible with nsd={nsd}")
            if len(c) != CELL_NVERTS[t]:
                raise MeshError(f"cell {e}: expected {CELL_NVERTS[t]} vertices")
            conn[e, : len(c)] = c
        if ne and (conn.max() >= len(vertices)):
            raise MeshError("cell vertex index out of range")
        return cls.from_padded(vertices, ctypes, conn, boundary, meta)

    @classmethod
    def from_padded(cls, vertices, ctypes, conn, boundary=None, meta=None):
        nsd = vertices.shape[1]
        ne = len(ctypes)
        width = 2 if nsd == 2 else 4
        maxf = 4 if nsd == 2 else 6

        orient = np.ones(ne)
        rows_cell, rows_loc, rows_fv = [], [], []
        for t in np.unique(ctypes):
            t = CellType(t)
            idx = np.flatnonzero(ctypes == t)
            nv = CELL_NVERTS[t]
            X = vertices[conn[idx, :nv]]
            vol = _signed_volumes(X, t)
            bad = np.flatnonzero(~(np.abs(vol) > 0.0))
            if bad.size:
                raise DegenerateCellError(int(idx[bad[0]]), "zero-volume cell")
            orient[idx] = np.sign(vol)
            for j, f in enumerate(CELL_FACES[t]):
                fv = np.full((len(idx), width), -1, dtype=np.int64)
                fv[:, : len(f)] = conn[idx][:, list(f)]
                rows_cell.append(idx)
                rows_loc.append(np.full(len(idx), j))
                rows_fv.append(fv)
        rc = np.concatenate(rows_cell) if rows_cell else np.zeros(0, dtype=np.int64)
        rl = np.concatenate(rows_loc) if rows_loc else np.zeros(0, dtype=np.int64)
        rfv = np.concatenate(rows_fv) if rows_fv else np.zeros((0, width), dtype=np.int64)
        order = np.lexsort((rl, rc))
        rc, rl, rfv = rc[order], rl[order], rfv[order]
        keys = np.sort(rfv, axis=1)
        _, first, inverse, counts = np.unique(
            keys, axis=0, return_index=True, return_inverse=True, return_counts=True
        )
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: a face is shared by more than two cells")
        nf = len(first)
        # renumber faces by first appearance for a stable, cell-ordered numbering
        fo = np.argsort(first, kind="stable")
        renum = np.empty(nf, dtype=np.int64)
        renum[fo] = np.arange(nf)
        first = first[fo]
        inverse = renum[inverse]

        face_vertices = rfv[first].copy()
        face_cells = np.full((nf, 2), -1, dtype=np.int64)
        face_cells[:, 0] = rc[first]
        is_second = np.ones(len(rc), dtype=bool)
        is_second[first] = False
        face_cells[inverse[is_second], 1] = rc[is_second]
        # left cell reflected -> reverse vertex order so normals point outward
        flip = orient[face_cells[:, 0]] < 0
        nfv = (face_vertices >= 0).sum(axis=1)
        for n in np.unique(nfv):
            sel = flip & (nfv == n)
            face_vertices[sel, :n] = face_vertices[sel, :n][:, ::-1]

        cell_faces = np.full((ne, maxf), -1, dtype=np.int64)
        cell_faces[rc, rl] = inverse

        tags = np.where(face_cells[:, 1] < 0, int(Tag.DIRICHLET), int(Tag.INTERIOR))
        if boundary:
            lookup = {tuple(k): i for i, k in enumerate(keys[first].tolist())}
            for verts, tag in boundary:
                key = sorted(int(v) for v in verts)
                key = [-1] * (width - len(key)) + key
                f = lookup.get(tuple(key))
                if f is None or face_cells[f, 1] >= 0:
                    raise MeshError(f"boundary entry {list(verts)} is not a boundary face")
                tags[f] = int(tag) if not isinstance(tag, str) else int(Tag[tag.upper()])

        arrays = dict(
            vertices=vertices,
            cell_types=ctypes,
            cells=conn,
            face_vertices=face_vertices,
            face_cells=face_cells,
            face_tags=tags.astype(np.int64),
            cell_faces=cell_faces,
        )
        for a in arrays.values():
            a.setflags(write=False)
        return cls(meta=dict(meta or {}), **arrays)

    # ------------------------------------------------------------------ #

    def with_vertices(self, vertices, meta=None):
        """Same topology and tags, new coordinates."""
        vertices = np.array(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise MeshError("vertex array shape mismatch")
        bnd = self.boundary_spec()
        m = Mesh.from_padded(
            vertices, self.cell_types.copy(), self.cells.copy(), bnd, self.meta if meta is None else meta
        )
        return m

    def boundary_spec(self):
        """List of ``(verts, tag)`` for the non-default boundary tags."""
        out = []
        for f in self.boundary_faces:
            if self.face_tags[f] != Tag.DIRICHLET:
                out.append((self.face_vertex_list(f).tolist(), int(self.face_tags[f])))
        return out

    def retag(self, rule):
        """Return a copy with boundary faces re-tagged.

        ``rule(centroids, normals)`` receives arrays for the boundary faces and
        returns an array of :class:`Tag` values.
        """
        from .geometry import compute_geometry

        geom = compute_geometry(self)
        bf = self.boundary_faces
        tags = np.asarray(rule(geom.face_centroid[bf], geom.face_normal[bf]), dtype=np.int64)
        if np.any(tags == Tag.INTERIOR):
            raise MeshError("boundary faces cannot be tagged INTERIOR")
        new_tags = self.face_tags.copy()
        new_tags[bf] = tags
        new_tags.setflags(write=False)
        return Mesh(
            vertices=self.vertices,
            cell_types=self.cell_types,
            cells=self.cells,
            face_vertices=self.face_vertices,
            face_cells=self.face_cells,
            face_tags=new_tags,
            cell_faces=self.cell_faces,
            meta=dict(self.meta),
        )

    def quad_face_planarity(self):
        """Max over 3D quadrilateral faces of (plane deviation / face diameter)."""
        if self.nsd != 3:
            return 0.0
        fv = self.face_vertices
        quads = np.flatnonzero(fv[:, 3] >= 0)
        if len(quads) == 0:
            return 0.0
        X = self.vertices[fv[quads]]
        Xc = X - X.mean(axis=1, keepdims=True)
        _, _, vt = np.linalg.svd(Xc)
        n = vt[:, -1, :]
        dev = np.abs(np.einsum("fvi,fi->fv", Xc, n)).max(axis=1)
        diam = np.max(np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=-1), axis=(1, 2))
        return float((dev / diam).max())


def neumann_on_plane(axis, value=0.0, tol=1e-10):
    """Tagging rule: Neumann on the plane ``x[axis] == value``, Dirichlet elsewhere."""

    def rule(centroids, normals):
        on = np.abs(centroids[:, axis] - value) < tol
        on &= np.abs(np.abs(normals[:, axis]) - 1.0) < 1e-8
        return np.where(on, int(Tag.NEUMANN), int(Tag.DIRICHLET))

    return rule


def all_dirichlet(centroids, normals):
    return np.full(len(centroids), int(Tag.DIRICHLET))
