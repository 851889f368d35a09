"""Cell and face geometry: measures, centroids, outward normals, sub-simplices."""
from dataclasses import dataclass

import numpy as np

from .mesh import (
    CELL_EDGES,
    CELL_FACES,
    CELL_NVERTS,
    SIMPLICES,
    CellType,
    DegenerateCellError,
    face_area_vectors,
)

# sub-simplex counts per cell when fanned from the vertex average
_NSUB = {
    CellType.TRI: 1,
    CellType.QUA: 4,
    CellType.TET: 1,
    CellType.HEX: 12,
    CellType.PRI: 8,
    CellType.PYR: 6,
}


@dataclass(frozen=True, eq=False)
class MeshGeometry:
    """Geometric quantities of a mesh.

    Cell-face arrays are indexed ``[cell, local_face]`` and zero-padded where
    ``cf_mask`` is False, so padded faces contribute nothing to sums.
    """

    volume: np.ndarray  # (ne,)
    centroid: np.ndarray  # (ne, nsd)
    h: np.ndarray  # (ne,) cell diameter
    cell_stretch: np.ndarray  # (ne,) max/min edge length
    cf_mask: np.ndarray  # (ne, F)
    cf_area: np.ndarray  # (ne, F)
    cf_centroid: np.ndarray  # (ne, F, nsd)
    cf_normal: np.ndarray  # (ne, F, nsd), outward from the cell
    face_area: np.ndarray  # (nf,)
    face_centroid: np.ndarray  # (nf, nsd)
    face_normal: np.ndarray  # (nf, nsd), outward from the left cell
    sub_simplices: np.ndarray  # (ne, S, nsd + 1, nsd)
    sub_mask: np.ndarray  # (ne, S)

    @property
    def h_max(self):
        return float(self.h.max())

    @property
    def stretching_factor(self):
        return float(self.cell_stretch.max())

    @property
    def nsd(self):
        return self.centroid.shape[1]

    def second_moments(self):
        """Exact ``int (x - xc)(x - xc)^T`` over each cell, shape (ne, nsd, nsd)."""
        S = self.sub_simplices - self.centroid[:, None, None, :]
        d = self.nsd
        edges = S[:, :, 1:, :] - S[:, :, :1, :]
        vol = np.abs(np.linalg.det(edges)) / (2.0 if d == 2 else 6.0)
        vol = np.where(self.sub_mask, vol, 0.0)
        ssum = S.sum(axis=2)
        outer = np.einsum("esvi,esvj->esij", S, S) + np.einsum("esi,esj->esij", ssum, ssum)
        return np.einsum("es,esij->eij", vol / ((d + 1) * (d + 2)), outer)


def compute_geometry(mesh):
    """Compute :class:`MeshGeometry` for ``mesh``.

    Raises :class:`DegenerateCellError` for a cell with non-positive volume or
    a face of zero measure.
    """
    nsd = mesh.nsd
    ne = mesh.n_cells
    F = mesh.cell_faces.shape[1]
    S = max(_NSUB[CellType(t)] for t in np.unique(mesh.cell_types)) if ne else 1

    volume = np.zeros(ne)
    centroid = np.zeros((ne, nsd))
    h = np.zeros(ne)
    stretch = np.ones(ne)
    cf_mask = mesh.cell_faces >= 0
    cf_area = np.zeros((ne, F))
    cf_cen = np.zeros((ne, F, nsd))
    cf_nrm = np.zeros((ne, F, nsd))
    subs = np.zeros((ne, S, nsd + 1, nsd))
    sub_mask = np.zeros((ne, S), dtype=bool)

    for t in np.unique(mesh.cell_types):
        t = CellType(t)
        idx = np.flatnonzero(mesh.cell_types == t)
        nv = CELL_NVERTS[t]
        X = mesh.vertices[mesh.cells[idx, :nv]]
        x0 = X.mean(axis=1)
        faces = CELL_FACES[t]

        avs, cens = [], []
        for f in faces:
            av, cen = face_area_vectors(X[:, list(f), :])
            avs.append(av)
            cens.append(cen)
        avs = np.stack(avs, axis=1)
        cens = np.stack(cens, axis=1)
        raw = np.einsum("nfi,nfi->n", avs, cens - x0[:, None, :]) / nsd
        sign = np.sign(raw)
        vol = np.abs(raw)
        bad = np.flatnonzero(~(vol > 0.0))
        if bad.size:
            raise DegenerateCellError(int(idx[bad[0]]), "non-positive cell volume")
        avs = avs * sign[:, None, None]

        # sub-simplex decomposition (cell itself for simplices)
        if t in SIMPLICES:
            sub = X[:, None, :, :]
        else:
            parts = []
            for f in faces:
                if len(f) == 2:
                    tris = [(f[0], f[1])]
                elif len(f) == 3:
                    tris = [tuple(f)]
                else:
                    tris = [(f[0], f[1], f[2]), (f[0], f[2], f[3])]
                for tri in tris:
                    parts.append(np.concatenate([x0[:, None, :], X[:, list(tri), :]], axis=1))
            sub = np.stack(parts, axis=1)
        ns = sub.shape[1]
        edges = sub[:, :, 1:, :] - sub[:, :, :1, :]
        svol = np.abs(np.linalg.det(edges)) / (2.0 if nsd == 2 else 6.0)
        cen = np.einsum("ns,nsi->ni", svol, sub.mean(axis=2)) / svol.sum(axis=1)[:, None]

        areas = np.linalg.norm(avs, axis=-1)
        badf = np.flatnonzero(~(areas > 0.0).all(axis=1))
        if badf.size:
            raise DegenerateCellError(int(idx[badf[0]]), "zero-measure face")

        volume[idx] = vol
        centroid[idx] = cen
        nf = len(faces)
        cf_area[idx, :nf] = areas
        cf_cen[idx, :nf] = cens
        cf_nrm[idx, :nf] = avs / areas[..., None]
        subs[idx, :ns] = sub
        sub_mask[idx, :ns] = True

        d = np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=-1)
        h[idx] = d.max(axis=(1, 2))
        el = np.stack([np.linalg.norm(X[:, a] - X[:, b], axis=-1) for a, b in CELL_EDGES[t]], axis=1)
        stretch[idx] = el.max(axis=1) / el.min(axis=1)

    nfaces = mesh.n_faces
    face_area = np.zeros(nfaces)
    face_cen = np.zeros((nfaces, nsd))
    face_nrm = np.zeros((nfaces, nsd))
    left = mesh.face_cells[:, 0]
    rows, cols = np.nonzero(cf_mask)
    gf = mesh.cell_faces[rows, cols]
    is_left = left[gf] == rows
    face_area[gf[is_left]] = cf_area[rows[is_left], cols[is_left]]
    face_cen[gf[is_left]] = cf_cen[rows[is_left], cols[is_left]]
    face_nrm[gf[is_left]] = cf_nrm[rows[is_left], cols[is_left]]

    return MeshGeometry(
        volume=volume,
        centroid=centroid,
        h=h,
        cell_stretch=stretch,
        cf_mask=cf_mask,
        cf_area=cf_area,
        cf_centroid=cf_cen,
        cf_normal=cf_nrm,
        face_area=face_area,
        face_centroid=face_cen,
        face_normal=face_nrm,
        sub_simplices=subs,
        sub_mask=sub_mask,
    )


def cell_quadrature(geom, degree):
    """Quadrature points and weights per cell from the sub-simplex split.

    Returns ``(points, weights)`` of shapes (ne, Q, nsd) and (ne, Q); padded
    sub-simplices carry zero weight.
    """
    from .quadrature import map_simplex_rule

    pts, w = map_simplex_rule(geom.sub_simplices, degree)
    w = np.where(geom.sub_mask[..., None], w, 0.0)
    ne, S, nq, nsd = pts.shape
    return pts.reshape(ne, S * nq, nsd), w.reshape(ne, S * nq)
