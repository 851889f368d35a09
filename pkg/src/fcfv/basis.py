"""Per-cell linear basis ``N_1 = 1, N_k = x_{k-1} - xc_{k-1}`` and its integrals.

All routines are vectorised over cells; cell-face arrays follow the padded
``(ne, F, ...)`` layout of :class:`~fcfv.geometry.MeshGeometry`.
"""
import numpy as np

from .geometry import cell_quadrature
from .quadrature import square_rule


def n_basis(nsd):
    return nsd + 1


def evaluate_basis(x, centroid):
    """Basis values at points ``x`` (..., nsd) for cells with ``centroid`` (..., nsd)."""
    x = np.asarray(x, dtype=float)
    off = x - centroid
    return np.concatenate([np.ones(off.shape[:-1] + (1,)), off], axis=-1)


def face_projection_vectors(geom):
    """``p[e, j] = (1, xf_j - xc_e)``; zero rows on padded faces."""
    off = geom.cf_centroid - geom.centroid[:, None, :]
    p = np.concatenate([np.ones(off.shape[:-1] + (1,)), off], axis=-1)
    return np.where(geom.cf_mask[..., None], p, 0.0)


def _quad_face_moments(Xq, centroid):
    """Integrals of the basis over bilinear quadrilaterals by 2x2 Gauss.

    Xq has shape (n, 4, 3); centroid (n, 3).  Returns (n, 4).
    """
    pts, w = square_rule(2)
    xi, eta = pts[:, 0], pts[:, 1]
    a, b, c, d = (Xq[:, None, i, :] for i in range(4))
    xi_, eta_ = xi[None, :, None], eta[None, :, None]
    x = (1 - xi_) * (1 - eta_) * a + xi_ * (1 - eta_) * b + xi_ * eta_ * c + (1 - xi_) * eta_ * d
    dxi = (1 - eta_) * (b - a) + eta_ * (c - d)
    deta = (1 - xi_) * (d - a) + xi_ * (c - b)
    jac = np.linalg.norm(np.cross(dxi, deta), axis=-1)
    wj = w[None, :] * jac
    mom = np.einsum("nq,nqi->ni", wj, x - centroid[:, None, :])
    return mom


def face_integrals(mesh, geom):
    """Face integrals of the basis.

    Returns
    -------
    r : ndarray (ne, F, M)
        ``r[e, j, I] = int_{face j} N_I``.
    p : ndarray (ne, F, M)
        Projection vectors (basis values at face centroids).

    Edges and triangular faces use the exact centroid rule ``r = |face| p``.
    Quadrilateral faces in 3D integrate ``N_k`` (k >= 2) by 2x2 Gauss on the
    bilinear map, which is exact for planar faces; ``int N_1`` is the area.
    """
    p = face_projection_vectors(geom)
    r = geom.cf_area[..., None] * p
    if mesh.nsd == 3:
        fids = np.where(geom.cf_mask, mesh.cell_faces, 0)
        is_quad = geom.cf_mask & (mesh.face_vertices[fids, 3] >= 0)
        ee, jj = np.nonzero(is_quad)
        if ee.size:
            fv = mesh.face_vertices[mesh.cell_faces[ee, jj]]
            # outward/inward ordering does not matter for unsigned measures
            Xq = mesh.vertices[fv]
            r[ee, jj, 1:] = _quad_face_moments(Xq, geom.centroid[ee])
    return r, p


def cell_integrals(geom, source=None, degree=2):
    """Cell integrals of the basis and source moments.

    Parameters
    ----------
    geom : MeshGeometry
    source : callable, optional
        ``source(x)`` with ``x`` of shape (..., nsd) returning (...) for a
        scalar or (..., nsd) for a vector field.
    degree : int
        Quadrature degree per sub-simplex (2 to 6 is typical).

    Returns
    -------
    basis_moments : ndarray (ne, M)
    source_moments : ndarray (ne, M) or (ne, M, nsd), or None
    """
    pts, w = cell_quadrature(geom, degree)
    N = evaluate_basis(pts, geom.centroid[:, None, :])
    basis_moments = np.einsum("eq,eqI->eI", w, N)
    basis_moments[:, 0] = geom.volume
    if source is None:
        return basis_moments, None
    s = np.asarray(source(pts), dtype=float)
    if s.ndim == 2:
        moments = np.einsum("eq,eqI,eq->eI", w, N, s)
    else:
        moments = np.einsum("eq,eqI,eqk->eIk", w, N, s)
    return basis_moments, moments


def projection_matrix(p, nsd):
    """Block-diagonal projection ``I_nsd (x) p^T`` of shape (nsd, nsd * M).

    Velocity coefficients are ordered component by component.
    """
    p = np.asarray(p, dtype=float)
    return np.kron(np.eye(nsd), p[None, :])
