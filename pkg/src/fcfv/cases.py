"""Manufactured solutions with symbolically derived data.

Each case stores its exact fields as sympy expressions; sources, gradients
and boundary data are derived symbolically and compiled with ``lambdify``.
All callables take points of shape (..., nsd).
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy

from .mesh import all_dirichlet, neumann_on_plane


def _compile(expr, xs):
    f = sympy.lambdify(xs, expr, modules="numpy")

    def call(x):
        x = np.asarray(x, dtype=float)
        val = f(*[x[..., i] for i in range(len(xs))])
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape[:-1]).copy()

    return call


def _compile_vec(exprs, xs):
    fs = [_compile(e, xs) for e in exprs]

    def call(x):
        return np.stack([f(x) for f in fs], axis=-1)

    return call


def _compile_mat(rows, xs):
    fs = [[_compile(e, xs) for e in row] for row in rows]

    def call(x):
        return np.stack([np.stack([f(x) for f in row], axis=-1) for row in fs], axis=-2)

    return call


@dataclass
class ManufacturedCase:
    """Exact solution and derived data of a Poisson or Stokes problem.

    For Poisson: ``u`` scalar, ``grad`` (..., nsd), ``source = -lap u`` and
    ``neumann(x, n) = n . grad u``.  For Stokes: ``u`` (..., nsd), ``grad``
    (..., nsd, nsd) with ``grad[i, k] = d_i u_k``, ``p`` scalar,
    ``source = -nu lap u + grad p`` and ``neumann = nu n . grad u - p n``.
    """

    name: str
    kind: str  # "poisson" | "stokes"
    nsd: int
    params: dict
    u: Callable
    grad: Callable
    source: Callable
    neumann: Callable
    tag_rule: Callable
    p: Optional[Callable] = None
    nu: float = 1.0
    exprs: dict = field(default_factory=dict)

    def dirichlet(self, x):
        return self.u(x)

    def poisson_problem(self, tau, source_degree=2):
        from .poisson import PoissonProblem

        return PoissonProblem(self.source, self.u, self.neumann, tau, source_degree)

    def stokes_problem(self, tau, source_degree=2):
        from .stokes import StokesProblem

        return StokesProblem(self.nu, self.source, self.u, self.neumann, tau, source_degree)

    def problem(self, tau, source_degree=2):
        if self.kind == "poisson":
            return self.poisson_problem(tau, source_degree)
        return self.stokes_problem(tau, source_degree)


def _symbols(nsd):
    return sympy.symbols(" ".join(f"x{i + 1}" for i in range(nsd)), real=True)


def poisson_case(name, u_expr, xs, params, tag_rule):
    nsd = len(xs)
    grad = [sympy.diff(u_expr, x) for x in xs]
    lap = sum(sympy.diff(g, x) for g, x in zip(grad, xs))
    src = sympy.simplify(-lap) if nsd == 2 else -lap
    u = _compile(u_expr, xs)
    g = _compile_vec(grad, xs)
    s = _compile(src, xs)

    def neumann(x, n):
        return np.einsum("...i,...i->...", n, g(x))

    return ManufacturedCase(
        name, "poisson", nsd, params, u, g, s, neumann, tag_rule,
        exprs={"u": u_expr, "source": src},
    )


def stokes_case(name, u_exprs, p_expr, xs, nu, params, tag_rule):
    nsd = len(xs)
    grad = [[sympy.diff(uk, xi) for uk in u_exprs] for xi in xs]
    src = [
        -nu * sum(sympy.diff(u_exprs[k], xi, 2) for xi in xs) + sympy.diff(p_expr, xs[k])
        for k in range(nsd)
    ]
    u = _compile_vec(u_exprs, xs)
    g = _compile_mat(grad, xs)
    p = _compile(p_expr, xs)
    s = _compile_vec(src, xs)

    def neumann(x, n):
        return nu * np.einsum("...i,...ik->...k", n, g(x)) - p(x)[..., None] * n

    return ManufacturedCase(
        name, "stokes", nsd, params, u, g, s, neumann, tag_rule, p=p, nu=nu,
        exprs={"u": u_exprs, "p": p_expr, "source": src},
    )


POISSON_PARAMS = dict(alpha=0.1, beta=0.3, a=5.1, b=4.3, c=-6.2, d=3.4, e=1.8, f=1.7)


def poisson_2d():
    x1, x2 = xs = _symbols(2)
    P = POISSON_PARAMS
    u = sympy.exp(P["alpha"] * sympy.sin(P["a"] * x1 + P["c"] * x2) + P["beta"] * sympy.cos(P["b"] * x1 + P["d"] * x2))
    return poisson_case("poisson2d", u, xs, dict(P), neumann_on_plane(1))


def poisson_3d():
    x1, x2, x3 = xs = _symbols(3)
    P = POISSON_PARAMS
    u = sympy.exp(
        P["alpha"] * sympy.sin(P["a"] * x1 + P["c"] * x2 + P["e"] * x3)
        + P["beta"] * sympy.cos(P["b"] * x1 + P["d"] * x2 + P["f"] * x3)
    )
    return poisson_case("poisson3d", u, xs, dict(P), neumann_on_plane(2))


def gaussian_2d(a=100.0, b=0.7):
    x1, x2 = xs = _symbols(2)
    u = 1 + sympy.exp(-a * ((x1 - b) ** 2 + (x2 - b) ** 2))
    return poisson_case("gaussian", u, xs, {"a": a, "b": b}, all_dirichlet)


def stokes_2d(nu=1.0):
    x1, x2 = xs = _symbols(2)
    u1 = x1**2 * (1 - x1) ** 2 * (2 * x2 - 6 * x2**2 + 4 * x2**3)
    u2 = -(x2**2) * (1 - x2) ** 2 * (2 * x1 - 6 * x1**2 + 4 * x1**3)
    p = x1 * (1 - x1)
    return stokes_case("stokes2d", [u1, u2], p, xs, nu, {"nu": nu}, neumann_on_plane(1))


def stokes_3d(nu=1.0):
    x1, x2, x3 = xs = _symbols(3)
    h = sympy.Rational(1, 2)
    u1 = h + (x3 - x2) * sympy.sin(x1 - h)
    u2 = 1 - x2 * (x3 - h * x2) * sympy.cos(x1 - h) - x2 * (x1 - h * x2) * sympy.cos(x3 - h)
    u3 = h + (x1 - x2) * sympy.sin(x3 - h)
    p = x1 * (1 - x1) + x2 * (1 - x2) + x3 * (1 - x3)
    return stokes_case("stokes3d", [u1, u2, u3], p, xs, nu, {"nu": nu}, neumann_on_plane(2))


CASES = {
    "poisson2d": poisson_2d,
    "poisson3d": poisson_3d,
    "stokes2d": stokes_2d,
    "stokes3d": stokes_3d,
    "gaussian": gaussian_2d,
}


def get_case(name):
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None


def default_tau(nsd):
    return 1e4 if nsd == 2 else 1e2
