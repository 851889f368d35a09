"""Second-order face-centred finite volume scheme for incompressible Stokes flow.

Mixed form ``L = -sqrt(nu) grad u`` with ``(grad u)_ik = d_i u_k``.  Global
unknowns are the face velocities on non-Dirichlet faces and one mean
pressure ``rho_e`` per cell; the cell pressure equals ``rho_e``.  The
Neumann datum is the pseudo-traction ``t = nu n . grad u - p n``.
"""
from dataclasses import dataclass, field
import logging
import time
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .geometry import compute_geometry
from .linsys import SparseSystem, compress, solve, symmetry_error
from .mesh import Tag
from .local import (
    boundary_values,
    cell_matrices,
    face_sets,
    scalar_trace_blocks,
    source_moments,
)

log = logging.getLogger(__name__)


@dataclass
class StokesProblem:
    """Data of a Stokes problem; vector callables return arrays (n, nsd)."""

    nu: float = 1.0
    source: Optional[Callable] = None
    dirichlet: Optional[Callable] = None
    neumann: Optional[Callable] = None
    tau: float = 1.0
    source_degree: int = 2

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True, eq=False)
class StokesLocalOperators:
    faces: object
    cm: object  # scalar block m; the velocity matrix is I_nsd (x) m
    B: np.ndarray  # (ne, M, nsd) coefficient right-hand side per component
    Z: np.ndarray  # (ne, nsd, nsd)
    u_d: np.ndarray  # (ne, F, nsd)
    t: np.ndarray  # (ne, F, nsd)
    nu: float
    tau: float
    geom: object

    def velocity_matrix(self, e):
        """Full ``I_nsd (x) m_e`` for cell ``e``."""
        return np.kron(np.eye(self.geom.nsd), self.cm.m[e])


@dataclass
class StokesSolution:
    trace: np.ndarray  # (n_dof, nsd)
    coeffs: np.ndarray  # (ne, nsd, M); component-major
    pressure: np.ndarray  # (ne,)
    L: np.ndarray  # (ne, nsd, nsd)
    u_star: np.ndarray  # (ne, nsd)
    info: dict = field(default_factory=dict)

    @property
    def rho(self):
        return self.pressure


def assemble_local_stokes(mesh, geom, problem):
    fs = face_sets(mesh, geom)
    tau = float(problem.tau)
    nsd = mesh.nsd
    cm = cell_matrices(mesh, geom, tau)
    ne, F, M = cm.r.shape
    u_d = np.zeros((ne, F, nsd))
    if problem.dirichlet is not None and fs.dirichlet.any():
        u_d = boundary_values(mesh, geom, problem.dirichlet, fs.dirichlet)
    t = np.zeros((ne, F, nsd))
    if problem.neumann is not None and fs.neumann.any():
        t = boundary_values(mesh, geom, problem.neumann, fs.neumann, with_normal=True)
    B = tau * np.einsum("efk,efI->eIk", u_d, cm.r)
    f = source_moments(geom, problem.source, problem.source_degree)
    if f is not None:
        B = B + f
    Z = np.einsum("ef,efi,efk->eik", geom.cf_area, geom.cf_normal, u_d)
    return StokesLocalOperators(fs, cm, B, Z, u_d, t, float(problem.nu), tau, geom)


def cell_face_velocity(ops, trace):
    cf = ops.faces.cf_dof
    if trace.size == 0:
        return np.zeros(cf.shape + (ops.geom.nsd,))
    return np.where((cf >= 0)[..., None], trace[np.maximum(cf, 0)], 0.0)


def solve_local_stokes(ops, uhat_cf, rho):
    """Recover ``(coeffs, p, L)``; ``coeffs`` has shape (ne, nsd, M)."""
    g = ops.geom
    uh = np.where(ops.faces.free[..., None], uhat_cf, 0.0)
    sq = np.sqrt(ops.nu)
    L = -sq * (ops.Z + np.einsum("ef,efi,efk->eik", g.cf_area, g.cf_normal, uh)) / g.volume[:, None, None]
    rhs = ops.B + ops.tau * np.einsum("efk,efI->eIk", uh, ops.cm.r)
    c = np.einsum("eIJ,eJk->ekI", ops.cm.minv, rhs)
    return c, np.asarray(rho, dtype=float).copy(), L


def recover_first_order_stokes(ops, uhat_cf, source_centroid=None):
    """Componentwise constant recovery ``u*`` (ne, nsd)."""
    g = ops.geom
    w = g.cf_area * ops.tau
    alpha = w.sum(axis=1)
    beta = np.einsum("ef,efk->ek", w, np.where(ops.faces.dirichlet[..., None], ops.u_d, 0.0))
    if source_centroid is not None:
        beta = beta + g.volume[:, None] * source_centroid
    uh = np.where(ops.faces.free[..., None], uhat_cf, 0.0)
    return (beta + np.einsum("ef,efk->ek", w, uh)) / alpha[:, None]


def incompressibility_residual(ops, uhat_cf):
    """Per-cell ``sum_B |face| u^.n + sum_D |face| u_D.n``."""
    g = ops.geom
    vel = np.where(ops.faces.free[..., None], uhat_cf, 0.0) + np.where(
        ops.faces.dirichlet[..., None], ops.u_d, 0.0
    )
    return np.einsum("ef,efk,efk->e", g.cf_area, g.cf_normal, vel)


def assemble_global_stokes(mesh, geom, problem, ops=None):
    """Saddle-point system in (face velocities, cell mean pressures).

    Unknown ordering: ``nsd * dof + k`` for the velocity component ``k`` of
    trace ``dof``, followed by one pressure per cell.  If no face is Neumann
    the constant-pressure null space is removed by a Lagrange multiplier
    enforcing ``sum_e |cell_e| rho_e = 0`` (last unknown).
    """
    if ops is None:
        ops = assemble_local_stokes(mesh, geom, problem)
    fs, cm = ops.faces, ops.cm
    nsd = mesh.nsd
    ne = mesh.n_cells
    tau, nu = ops.tau, ops.nu
    Ks = scalar_trace_blocks(geom, cm, tau, nu)
    A = geom.cf_area
    nu_dofs = nsd * fs.n_dof

    pair = fs.free[:, :, None] & fs.free[:, None, :]
    ee, ii, jj = np.nonzero(pair)
    di, dj, kv = fs.cf_dof[ee, ii], fs.cf_dof[ee, jj], Ks[ee, ii, jj]
    rows = [nsd * di + k for k in range(nsd)]
    cols = [nsd * dj + k for k in range(nsd)]
    vals = [kv] * nsd

    e1, i1 = np.nonzero(fs.free)
    d1 = fs.cf_dof[e1, i1]
    an = A[e1, i1, None] * geom.cf_normal[e1, i1]  # (nb, nsd)
    for k in range(nsd):
        rows += [nsd * d1 + k, nu_dofs + e1]
        cols += [nu_dofs + e1, nsd * d1 + k]
        vals += [an[:, k], an[:, k]]

    pure_dirichlet = not (mesh.face_tags[mesh.boundary_faces] != Tag.DIRICHLET).any()
    n = nu_dofs + ne + (1 if pure_dirichlet else 0)
    if pure_dirichlet:
        rows += [np.full(ne, n - 1), nu_dofs + np.arange(ne)]
        cols += [nu_dofs + np.arange(ne), np.full(ne, n - 1)]
        vals += [geom.volume, geom.volume]
    Kmat = compress(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n)

    mb = np.einsum("eIJ,eJk->eIk", cm.minv, ops.B)
    nz = np.einsum("efi,eik->efk", geom.cf_normal, ops.Z)
    fe = A[..., None] * (
        nu * nz / geom.volume[:, None, None]
        - tau * np.einsum("efI,eIk->efk", cm.p, mb)
        - np.where(fs.neumann[..., None], ops.t, 0.0)
    )
    rhs = np.zeros(n)
    for k in range(nsd):
        rhs[:nu_dofs] += np.bincount(nsd * d1 + k, weights=fe[e1, i1, k], minlength=nu_dofs)
    rhs[nu_dofs : nu_dofs + ne] = -np.einsum(
        "ef,efk,efk->e", A, geom.cf_normal, np.where(fs.dirichlet[..., None], ops.u_d, 0.0)
    )
    blocks = {"trace": nu_dofs, "pressure": ne, "multiplier": int(pure_dirichlet)}
    Kscalar = compress(di, dj, kv, fs.n_dof)
    return SparseSystem(Kmat, rhs, symmetric=True, blocks=blocks, parts={"scalar_trace": Kscalar}), ops


def velocity_block(system):
    n = system.blocks["trace"]
    return system.matrix[:n, :n]


BLOCK_THRESHOLD = 12000


def solve_stokes(mesh, problem, geom=None, solver="auto", dump=None):
    """Assemble, solve the saddle-point system and recover ``(u, p, L, u*)``.

    ``solver`` is ``"direct"`` (sparse LU of the full system), ``"block"``
    (pressure Schur complement) or ``"auto"``, which uses the block solver
    above ``BLOCK_THRESHOLD`` unknowns.
    """
    if geom is None:
        geom = compute_geometry(mesh)
    t0 = time.perf_counter()
    system, ops = assemble_global_stokes(mesh, geom, problem)
    t1 = time.perf_counter()
    if system.blocks["multiplier"]:
        log.info("all boundary faces Dirichlet: mean-zero pressure constraint appended")
    if solver == "auto":
        solver = "block" if system.n > BLOCK_THRESHOLD else "direct"
    res = solve(system, method=solver, dump=dump)
    t2 = time.perf_counter()
    nsd = mesh.nsd
    nu_dofs = system.blocks["trace"]
    trace = res.x[:nu_dofs].reshape(-1, nsd)
    rho = res.x[nu_dofs : nu_dofs + mesh.n_cells]
    uh = cell_face_velocity(ops, trace)
    c, p, L = solve_local_stokes(ops, uh, rho)
    s_c = None
    if problem.source is not None:
        s_c = np.asarray(problem.source(geom.centroid), dtype=float)
    u_star = recover_first_order_stokes(ops, uh, s_c)
    div = incompressibility_residual(ops, uh)
    info = {
        "n_dof": system.n,
        "residual": res.residual,
        "solver": res.method,
        "iterations": res.iterations,
        "symmetry_error": symmetry_error(sp.csr_matrix(velocity_block(system))),
        "incompressibility": float(np.abs(div).max()) if div.size else 0.0,
        "pressure_constraint": bool(system.blocks["multiplier"]),
        "t_assemble_s": t1 - t0,
        "t_solve_s": t2 - t1,
    }
    return StokesSolution(trace, c, p, L, u_star, info)
