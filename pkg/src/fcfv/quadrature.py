"""Quadrature rules on simplices and the reference square.

Simplex rules are collapsed (conical) Gauss-Jacobi products.  They use more
points than the optimal symmetric rules but every weight is positive and any
requested degree is available.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def simplex_rule(dim, degree):
    """Return ``(points, weights)`` on the reference simplex.

    The reference simplex is ``{x_i >= 0, sum(x) <= 1}``.  Weights are
    normalised to sum to one, so integrals are ``volume * sum(w * f)``.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported simplex dimension {dim}")
    k = max(1, (degree + 2) // 2)
    axes = []
    for i in range(dim):
        alpha = dim - 1 - i
        x, w = roots_jacobi(k, alpha, 0.0)
        axes.append(((1.0 + x) / 2.0, w / 2.0 ** (alpha + 1)))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    xi = [g.ravel() for g in grids]
    w = np.prod([g.ravel() for g in wgrids], axis=0)
    pts = np.empty((xi[0].size, dim))
    scale = np.ones_like(xi[0])
    for i in range(dim):
        pts[:, i] = scale * xi[i]
        scale = scale * (1.0 - xi[i])
    pts.setflags(write=False)
    w = w / w.sum()
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def square_rule(npts):
    """Tensor Gauss-Legendre rule on ``[0, 1]^2`` (weights sum to one)."""
    x, w = roots_legendre(npts)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    xx, yy = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return pts, ww.ravel()


def map_simplex_rule(simplices, degree):
    """Map the reference rule onto a batch of simplices.

    Parameters
    ----------
    simplices : ndarray, shape (..., dim + 1, dim)
        Vertex coordinates.
    degree : int
        Polynomial degree integrated exactly.

    Returns
    -------
    points : ndarray, shape (..., nq, dim)
    weights : ndarray, shape (..., nq)
        Physical weights (unsigned volume already included).
    """
    simplices = np.asarray(simplices, dtype=float)
    dim = simplices.shape[-1]
    ref, w = simplex_rule(dim, degree)
    v0 = simplices[..., 0, :]
    edges = simplices[..., 1:, :] - v0[..., None, :]
    points = v0[..., None, :] + np.einsum("qi,...id->...qd", ref, edges)
    vol = np.abs(np.linalg.det(edges)) / (2.0 if dim == 2 else 6.0)
    return points, vol[..., None] * w
