"""L2 error norms of per-cell linear or constant fields against exact closures."""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .basis import evaluate_basis
from .geometry import cell_quadrature


@dataclass(frozen=True)
class LinearField:
    """Per-cell linear field in the centroid basis.

    ``coeffs`` has shape (ne, M) for a scalar or (ne, k, M) for a vector.
    """

    coeffs: np.ndarray

    def evaluate(self, pts, centroid):
        N = evaluate_basis(pts, centroid[:, None, :])
        if self.coeffs.ndim == 2:
            return np.einsum("eqI,eI->eq", N, self.coeffs)
        return np.einsum("eqI,ekI->eqk", N, self.coeffs)


def _values(field, pts, geom):
    if isinstance(field, LinearField):
        return field.evaluate(pts, geom.centroid)
    if callable(field):
        return np.asarray(field(pts), dtype=float)
    arr = np.asarray(field, dtype=float)
    # per-cell constants broadcast over quadrature points
    return np.broadcast_to(arr[:, None, ...], pts.shape[:2] + arr.shape[1:])


class L2Error(NamedTuple):
    value: float
    relative: bool


def _sq(v):
    return (v**2).reshape(v.shape[0], v.shape[1], -1).sum(axis=-1)


def l2_error(geom, numerical, exact, degree=4):
    """Relative L2 error over the mesh.

    ``numerical`` is a :class:`LinearField`, an array of per-cell constants
    (ne, ...) or a callable on points.  ``exact`` is a callable on points of
    shape (ne, Q, nsd).  If the exact field has zero norm the absolute error
    is returned with ``relative=False``.
    """
    pts, w = cell_quadrature(geom, degree)
    ex = np.asarray(exact(pts), dtype=float)
    num = _values(numerical, pts, geom)
    err = np.sqrt(np.einsum("eq,eq->", w, _sq(num - ex)))
    ref = np.sqrt(np.einsum("eq,eq->", w, _sq(ex)))
    if ref == 0.0:
        return L2Error(float(err), False)
    return L2Error(float(err / ref), True)


def cell_rms_errors(geom, numerical, exact, degree=4):
    """Per-cell ``sqrt(|cell|^-1 int |num - exact|^2)``; vector fields are
    averaged over components."""
    pts, w = cell_quadrature(geom, degree)
    ex = np.asarray(exact(pts), dtype=float)
    num = _values(numerical, pts, geom)
    ncomp = int(np.prod(ex.shape[2:])) if ex.ndim > 2 else 1
    return np.sqrt(np.einsum("eq,eq->e", w, _sq(num - ex)) / (geom.volume * ncomp))
