"""Sparse assembly and solution of the global trace systems."""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SingularSystemError(RuntimeError):
    """Factorisation failed or the residual is above tolerance."""

    def __init__(self, message, residual=None, null_hint=None):
        super().__init__(message)
        self.residual = residual
        self.null_hint = null_hint


@dataclass
class SparseSystem:
    """Assembled system ``A x = b``.

    ``blocks`` annotates saddle-point systems, e.g. ``{"trace": n_u, "pressure": n_p}``.
    ``parts`` holds auxiliary matrices, e.g. the scalar trace matrix whose
    Kronecker product with the identity is the velocity block.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric: bool = True
    blocks: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.matrix.shape[0]


@dataclass
class SolveResult:
    x: np.ndarray
    residual: float
    method: str
    iterations: int = 0


def compress(rows, cols, vals, n, m=None):
    """Sum triplets into a CSR matrix of shape ``(n, m)``.

    Duplicates are summed in input order, so serial results are reproducible.
    """
    m = n if m is None else m
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise IndexError("triplet index out of range")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, m)).tocsr()
    A.sum_duplicates()
    return A


def symmetry_error(A):
    """``max|A - A^T| / max|A|`` (0 for an empty or zero matrix)."""
    if A.nnz == 0:
        return 0.0
    amax = abs(A).max()
    if amax == 0:
        return 0.0
    D = (A - A.T).tocoo()
    return float(abs(D.data).max() / amax) if D.nnz else 0.0


def relative_residual(A, x, b):
    r = A @ x - b
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


def _null_hint(A):
    # columns without entries are the cheapest null directions to detect
    empty = np.flatnonzero(np.diff(A.tocsc().indptr) == 0)
    return empty[:10].tolist() if empty.size else None


def solve_direct(A, b, tol=RESIDUAL_TOL):
    """Sparse LU with partial pivoting and a COLAMD fill-reducing ordering.

    Handles symmetric indefinite (saddle-point) matrices with zero diagonal
    blocks.  Raises :class:`SingularSystemError` on failure or when the
    relative residual exceeds ``tol``.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n == 0:
        return SolveResult(np.zeros(0), 0.0, "direct")
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(f"factorisation failed: {exc}", null_hint=_null_hint(A)) from exc
    x = lu.solve(b)
    res = relative_residual(A, x, b)
    if not np.isfinite(res) or res > tol:
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - A @ x)
        res = relative_residual(A, x, b)
    if not np.isfinite(res) or res > tol:
        raise SingularSystemError(f"relative residual {res:.3e} above {tol:.1e}", residual=res)
    return SolveResult(x, res, "direct")


def solve_cg(A, b, tol=RESIDUAL_TOL, maxiter=None):
    """Conjugate gradients on ``-A`` for the negative definite trace matrix.

    The SPD property of ``-A`` is checked numerically (symmetry and positive
    diagonal) before iterating; Jacobi preconditioning is used.
    """
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return SolveResult(np.zeros(0), 0.0, "cg")
    B = -sp.csr_matrix(A)
    if symmetry_error(B) > 1e-12:
        raise SingularSystemError("matrix not symmetric; CG not applicable")
    d = B.diagonal()
    if np.any(d <= 0):
        raise SingularSystemError("-A has non-positive diagonal; CG not applicable")
    M = sp.diags(1.0 / d)
    it = [0]

    def cb(_):
        it[0] += 1

    x, info = spla.cg(B, -b, rtol=tol * 0.1, atol=0.0, M=M, maxiter=maxiter, callback=cb)
    res = relative_residual(A, x, b)
    if info != 0 or res > tol:
        raise SingularSystemError(f"CG did not converge (info={info}, residual {res:.3e})", residual=res)
    return SolveResult(x, res, "cg", it[0])


def solve_block_saddle(system, tol=RESIDUAL_TOL, maxiter=2000):
    """Pressure Schur complement solve of a Stokes system.

    The velocity block is ``kron(Ks, I_nsd)`` with ``Ks`` negative definite,
    so only ``Ks`` is factorised.  ``-B K^-1 B^T`` is SPD (semi-definite
    with the constant null space when a mean-pressure multiplier is present)
    and is solved by conjugate gradients.  The residual is checked on the
    full system.
    """
    A = system.matrix
    Ks = system.parts["scalar_trace"]
    nu = system.blocks["trace"]
    ne = system.blocks["pressure"]
    mult = system.blocks.get("multiplier", 0)
    ns = Ks.shape[0]
    nsd = nu // ns if ns else 1
    b = system.rhs
    try:
        lu = spla.splu(sp.csc_matrix(Ks), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(f"factorisation failed: {exc}", null_hint=_null_hint(Ks)) from exc

    def kinv(v):
        return lu.solve(v.reshape(ns, nsd)).ravel()

    B = sp.csr_matrix(A[nu : nu + ne, :nu])
    Bt = sp.csr_matrix(B.T)
    fu, fp = b[:nu], b[nu : nu + ne].copy()
    lam = 0.0
    if mult:
        w = np.asarray(A[nu : nu + ne, -1].todense()).ravel()
        lam = fp.sum() / w.sum()
        fp -= w * lam
    g = fp - B @ kinv(fu)
    S = spla.LinearOperator((ne, ne), matvec=lambda r: -(B @ kinv(Bt @ r)), dtype=float)
    it = [0]

    def cb(_):
        it[0] += 1

    scale = np.linalg.norm(b) / max(np.linalg.norm(g), 1e-300)
    rho, info = spla.cg(S, g, rtol=min(1e-12, tol * 1e-2 * scale), atol=0.0, maxiter=maxiter, callback=cb)
    if mult:
        rho -= (w @ rho) / w.sum()
    u = kinv(fu - Bt @ rho)
    x = np.concatenate([u, rho, [lam]] if mult else [u, rho])
    res = relative_residual(A, x, b)
    if info != 0 or not np.isfinite(res) or res > tol:
        raise SingularSystemError(f"block solve failed (info={info}, residual {res:.3e})", residual=res)
    return SolveResult(x, res, "block", it[0])


def solve(system, method="direct", dump=None):
    """Solve a :class:`SparseSystem`; optionally dump it in Matrix Market format."""
    if dump is not None:
        scipy.io.mmwrite(str(dump), system.matrix)
        log.info("matrix written to %s", dump)
    if method == "direct":
        return solve_direct(system.matrix, system.rhs)
    if method == "cg":
        if system.blocks.get("pressure", 0):
            raise ValueError("CG is only available for the Poisson trace system")
        return solve_cg(system.matrix, system.rhs)
    if method == "block":
        if "scalar_trace" not in system.parts:
            raise ValueError("block solver needs a Stokes system with its scalar trace matrix")
        return solve_block_saddle(system)
    raise ValueError(f"unknown solver {method!r}")
