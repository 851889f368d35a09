"""Parametric surface of a helical microswimmer.

``S(lam, theta) = C(lam) + R_n sin(theta) n_1 + R_b cos(theta) n_2`` with a
helical centreline ``C`` and cross-section axes obtained by rotating the
Serret-Frenet normal and binormal by ``gamma F_1(lam)``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import erf


@dataclass(frozen=True)
class SwimmerParams:
    """Geometric parameters; defaults derive from ``L``.

    ``None`` fields are filled from ``L``: ``A_b = L/27``, ``kappa = 4 pi/L``,
    ``beta = sqrt(1 - alpha^2)/kappa``, ``lam0 = (1 - 9/54.2) L``,
    ``lam1 = (1 - 11/54.2) L`` and ``sigma = 0.02 L``.
    """

    L: float = 1.0
    C1: float = 1.75
    C2: float = 2.75
    alpha: float = 0.7
    gamma: float = 0.0
    A_b: float = None
    kappa: float = None
    beta: float = None
    lam0: float = None
    lam1: float = None
    sigma: float = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        L = self.L
        fill = {
            "A_b": L / 27.0,
            "kappa": 4.0 * math.pi / L,
            "lam0": (1.0 - 9.0 / 54.2) * L,
            "lam1": (1.0 - 11.0 / 54.2) * L,
            "sigma": 0.02 * L,
        }
        for k, v in fill.items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)
        if self.beta is None:
            if abs(self.alpha) >= 1:
                raise ValueError("|alpha| must be < 1 for the default beta")
            object.__setattr__(self, "beta", math.sqrt(1.0 - self.alpha**2) / self.kappa)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def _check(p, lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam) > p.L * (1 + 1e-14)):
        raise ValueError("lambda outside [-L, L]")
    return np.clip(lam, -p.L, p.L)


def smooth_step(p, lam, s):
    """``F_s(lam) = (1 - erf((lam - lam_s) / (sqrt(2) sigma))) / 2`` for s in {0, 1}."""
    ls = p.lam0 if s == 0 else p.lam1
    return 0.5 * (1.0 - erf((np.asarray(lam, dtype=float) - ls) / (math.sqrt(2.0) * p.sigma)))


def centreline(p, lam):
    k = p.kappa
    lam = np.asarray(lam, dtype=float)
    return np.stack([p.beta * np.cos(k * lam), p.beta * np.sin(k * lam), p.alpha * lam], axis=-1)


def frenet_frame(p, lam):
    """Unit tangent, normal and binormal of the helix, each (..., 3)."""
    k = p.kappa
    lam = np.asarray(lam, dtype=float)
    c, s = np.cos(k * lam), np.sin(k * lam)
    d1 = np.stack([-p.beta * k * s, p.beta * k * c, np.full_like(lam, p.alpha)], axis=-1)
    T = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
    # second derivative is -beta k^2 (cos, sin, 0), orthogonal to the tangent
    sgn = -np.sign(p.beta) if p.beta != 0 else -1.0
    N = sgn * np.stack([c, s, np.zeros_like(lam)], axis=-1)
    B = np.cross(T, N)
    return T, N, B


def radii(p, lam):
    """``(R_b, R_n)``; the tip factor uses the normalised ``lam / L``."""
    lam = _check(p, lam)
    lh = lam / p.L
    Rb = p.A_b * (p.C1 + p.C2 * smooth_step(p, lam, 0)) * np.maximum(1.0 - lh**8, 0.0) ** 0.125
    return Rb, 0.25 * Rb


def cross_section_axes(p, lam):
    _, N, B = frenet_frame(p, lam)
    phi = (p.gamma * smooth_step(p, lam, 1))[..., None]
    n1 = np.cos(phi) * N + np.sin(phi) * B
    n2 = np.cos(phi) * B - np.sin(phi) * N
    return n1, n2


def evaluate_swimmer_surface(p, lam, theta):
    """Surface points ``S(lam, theta)``; ``lam`` and ``theta`` broadcast together.

    Raises ``ValueError`` if ``|lam| > L``.
    """
    lam, theta = np.broadcast_arrays(_check(p, lam), np.asarray(theta, dtype=float))
    Rb, Rn = radii(p, lam)
    n1, n2 = cross_section_axes(p, lam)
    return (
        centreline(p, lam)
        + (Rn * np.sin(theta))[..., None] * n1
        + (Rb * np.cos(theta))[..., None] * n2
    )


def surface_grid(p, n_lam=201, n_theta=48):
    """Points on a (lam, theta) grid, shape (n_lam, n_theta, 3)."""
    lam = np.linspace(-p.L, p.L, n_lam)
    th = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    return evaluate_swimmer_surface(p, lam[:, None], th[None, :])
