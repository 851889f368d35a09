"""Face classification and the per-cell matrix shared by Poisson and Stokes."""
from dataclasses import dataclass

import numpy as np

from .basis import cell_integrals, face_integrals
from .mesh import DegenerateCellError, Tag

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class FaceSets:
    """Boolean (ne, F) masks for the Dirichlet, non-Dirichlet and Neumann faces
    of each cell, and the trace numbering.

    ``dof[f]`` numbers the non-Dirichlet faces (``-1`` on Dirichlet faces) and
    ``cf_dof`` is its gather onto the cell-face layout (``-1`` on padding).
    """

    dirichlet: np.ndarray
    free: np.ndarray
    neumann: np.ndarray
    dof: np.ndarray
    cf_dof: np.ndarray
    n_dof: int
    face_index: np.ndarray  # (ne, F) global face ids, 0 on padding


def face_sets(mesh, geom):
    mask = geom.cf_mask
    fid = np.where(mask, mesh.cell_faces, 0)
    tags = np.where(mask, mesh.face_tags[fid], -1)
    dirichlet = tags == Tag.DIRICHLET
    free = mask & ~dirichlet
    neumann = tags == Tag.NEUMANN
    is_free = mesh.face_tags != Tag.DIRICHLET
    dof = np.full(mesh.n_faces, -1, dtype=np.int64)
    dof[is_free] = np.arange(int(is_free.sum()))
    cf_dof = np.where(free, dof[fid], -1)
    return FaceSets(dirichlet, free, neumann, dof, cf_dof, int(is_free.sum()), fid)


def boundary_values(mesh, geom, fn, faces_mask, with_normal=False):
    """Evaluate ``fn`` at the centroids of masked cell faces.

    Returns an array of shape (ne, F) or (ne, F, k), zero where unmasked.
    ``fn(x)`` or ``fn(x, n)`` receives (n, nsd) arrays; the normal is the
    cell's outward one.
    """
    ee, jj = np.nonzero(faces_mask)
    x = geom.cf_centroid[ee, jj]
    if with_normal:
        vals = np.asarray(fn(x, geom.cf_normal[ee, jj]), dtype=float)
    else:
        vals = np.asarray(fn(x), dtype=float)
    if vals.ndim == 0:
        vals = np.full(len(ee), float(vals))
    out = np.zeros(faces_mask.shape + vals.shape[1:])
    out[ee, jj] = vals
    return out


@dataclass(frozen=True, eq=False)
class CellMatrices:
    """Face integrals ``r``, projections ``p``, ``m = sum_j tau r_j p_j^T`` and its inverse."""

    r: np.ndarray  # (ne, F, M)
    p: np.ndarray  # (ne, F, M)
    m: np.ndarray  # (ne, M, M)
    minv: np.ndarray  # (ne, M, M)


def cell_matrices(mesh, geom, tau):
    """Build and invert the cell matrix; ill-conditioned cells raise."""
    r, p = face_integrals(mesh, geom)
    m = tau * np.einsum("efI,efJ->eIJ", r, p)
    cond = np.linalg.cond(m)
    bad = np.flatnonzero(~(cond < COND_LIMIT))
    if bad.size:
        raise DegenerateCellError(int(bad[0]), f"cell matrix condition number {cond[bad[0]]:.3e}")
    minv = np.linalg.inv(m)
    return CellMatrices(r, p, m, minv)


def source_moments(geom, source, degree):
    if source is None:
        return None
    return cell_integrals(geom, source, degree)[1]


def scalar_trace_blocks(geom, cm, tau, nu=1.0):
    """Per-cell dense blocks ``K^e_{ij}`` over all local faces (ne, F, F)."""
    A = geom.cf_area
    n = geom.cf_normal
    pmr = np.einsum("eiI,eIJ,ejJ->eij", cm.p, cm.minv, cm.r)
    nn = np.einsum("eik,ejk->eij", n, n)
    F = A.shape[1]
    K = A[:, :, None] * (
        tau * tau * pmr - nu * nn * A[:, None, :] / geom.volume[:, None, None] - tau * np.eye(F)[None]
    )
    return K
