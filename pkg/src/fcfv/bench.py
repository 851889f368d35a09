"""Convergence, stabilisation and timing studies on manufactured solutions."""
import csv
from dataclasses import dataclass, field
import logging
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import LinearField, l2_error
from .generators import generate_structured_mesh
from .geometry import compute_geometry
from .linsys import SingularSystemError
from .mesh import CellType, MeshError

log = logging.getLogger(__name__)

CSV_FIELDS = [
    "level", "h", "n_cells", "n_trace_dof", "err_u", "err_q", "err_L",
    "t_assemble_s", "t_solve_s", "order_u", "order_q",
]
STOKES_FIELDS = [f if f != "err_q" else "err_p" for f in CSV_FIELDS] + ["order_L"]


def run_case(case, mesh, tau, geom=None, source_degree=2):
    """Solve ``case`` on ``mesh`` and return ``(solution, errors, geom)``.

    ``errors`` maps ``u``, ``q`` (Poisson) or ``u``, ``p``, ``L`` (Stokes)
    to relative L2 errors.
    """
    from .poisson import solve_poisson
    from .stokes import solve_stokes

    mesh = mesh.retag(case.tag_rule)
    if geom is None:
        geom = compute_geometry(mesh)
    problem = case.problem(tau, source_degree)
    if case.kind == "poisson":
        sol = solve_poisson(mesh, problem, geom)
        errs = {
            "u": l2_error(geom, LinearField(sol.coeffs), case.u).value,
            "q": l2_error(geom, sol.q, lambda x: -case.grad(x)).value,
        }
    else:
        sol = solve_stokes(mesh, problem, geom)
        sq = np.sqrt(case.nu)
        errs = {
            "u": l2_error(geom, LinearField(sol.coeffs), case.u).value,
            "p": l2_error(geom, sol.pressure, case.p).value,
            "L": l2_error(geom, sol.L, lambda x: -sq * case.grad(x)).value,
        }
    return sol, errs, geom


def observed_order(e0, e1, h0, h1):
    if not (e0 > 0 and e1 > 0) or h0 == h1:
        return float("nan")
    return float(np.log(e0 / e1) / np.log(h0 / h1))


def fitted_order(errors, hs):
    """Least-squares slope of log(error) against log(h)."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    ok = (e > 0) & np.isfinite(e)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


@dataclass
class ConvergenceReport:
    case: str
    family: str
    kind: str
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def fields(self):
        return ("u", "q") if self.kind == "poisson" else ("u", "p", "L")

    def errors(self, name):
        return [r["err_" + name] for r in self.rows]

    @property
    def hs(self):
        return [r["h"] for r in self.rows]

    def order(self, name):
        """Observed order between the two finest meshes."""
        if len(self.rows) < 2:
            return None
        a, b = self.rows[-2], self.rows[-1]
        return observed_order(a["err_" + name], b["err_" + name], a["h"], b["h"])

    def global_order(self, name):
        return fitted_order(self.errors(name), self.hs)

    def write_csv(self, path):
        fields = CSV_FIELDS if self.kind == "poisson" else STOKES_FIELDS
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fields})


def family_sizes(levels, base=2):
    """Divisions per level: ``base * 2**(level - 1)``."""
    return [int(base * 2 ** (lv - 1)) for lv in levels]


def convergence_study(
    case,
    cell_type,
    divisions: Sequence[int],
    tau: float,
    transform: Optional[Callable] = None,
    family: Optional[str] = None,
    source_degree: int = 2,
):
    """Run ``case`` on structured meshes with the given divisions.

    ``transform(mesh)`` (e.g. distortion or stretching) is applied to each
    generated mesh.  A failing level is recorded in ``failures`` and the
    study continues.
    """
    name = family or (cell_type if isinstance(cell_type, str) else CellType(cell_type).name)
    rep = ConvergenceReport(case.name, name, case.kind)
    for level, n in enumerate(divisions, start=1):
        try:
            mesh = generate_structured_mesh(cell_type, case.nsd, n)
            if transform is not None:
                mesh = transform(mesh)
            sol, errs, geom = run_case(case, mesh, tau, source_degree=source_degree)
        except (SingularSystemError, MeshError, np.linalg.LinAlgError) as exc:
            log.warning("level %d failed: %s", level, exc)
            rep.failures.append({"level": level, "error": str(exc)})
            continue
        row = {
            "level": level,
            "n": n,
            "h": geom.h_max,
            "n_cells": mesh.n_cells,
            "n_trace_dof": sol.info["n_dof"],
            "t_assemble_s": sol.info["t_assemble_s"],
            "t_solve_s": sol.info["t_solve_s"],
            "residual": sol.info["residual"],
            "symmetry_error": sol.info["symmetry_error"],
            "incompressibility": sol.info.get("incompressibility"),
            "stretching": geom.stretching_factor,
        }
        for k, v in errs.items():
            row["err_" + k] = v
        if rep.rows:
            prev = rep.rows[-1]
            second = "q" if case.kind == "poisson" else "p"
            row["order_u"] = observed_order(prev["err_u"], row["err_u"], prev["h"], row["h"])
            row["order_q"] = observed_order(prev["err_" + second], row["err_" + second], prev["h"], row["h"])
            if case.kind == "stokes":
                row["order_L"] = observed_order(prev["err_L"], row["err_L"], prev["h"], row["h"])
        if case.kind == "stokes":
            row["err_p"] = errs["p"]
        rep.rows.append(row)
    return rep


def tau_sweep(case, cell_type, divisions: Sequence[int], taus: Sequence[float], transform=None):
    """Errors of every field for each (mesh, tau) pair.

    Returns a list of dicts with keys ``n``, ``tau`` and ``err_<field>``.
    """
    rows = []
    for n in divisions:
        mesh = generate_structured_mesh(cell_type, case.nsd, n)
        if transform is not None:
            mesh = transform(mesh)
        mesh = mesh.retag(case.tag_rule)
        geom = compute_geometry(mesh)
        for tau in taus:
            if not tau > 0:
                raise ValueError("tau values must be positive")
            sol, errs, _ = run_case(case, mesh, tau, geom=geom)
            row = {"n": n, "h": geom.h_max, "tau": float(tau)}
            row.update({"err_" + k: v for k, v in errs.items()})
            row["incompressibility"] = sol.info.get("incompressibility")
            rows.append(row)
    return rows


def write_rows(rows, path, fields=None):
    fields = fields or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def cpu_time_curve(report):
    """Cumulative assemble+solve time against the error of ``u`` per level."""
    t = np.cumsum([r["t_assemble_s"] + r["t_solve_s"] for r in report.rows])
    return [
        {"family": report.family, "level": r["level"], "cumulative_time_s": float(tc), "err_u": r["err_u"]}
        for r, tc in zip(report.rows, t)
    ]


def legacy_nodal_local_matrix(cell_type, edge_lengths, tau):
    """Local matrix of the original nodal linear basis on a 2D cell.

    Triangles: ``m = tau/4 [[G1+G3, G1, G3], [G1, G1+G2, G2], [G3, G2, G2+G3]]``
    with edges ``G1 = (v1, v2)``, ``G2 = (v2, v3)``, ``G3 = (v3, v1)``.
    Quadrilaterals follow the same face-projection pattern, which couples
    each vertex only to the mean of its two edges and is singular.

    Returns ``(m, det)``.
    """
    G = np.asarray(edge_lengths, dtype=float)
    ct = cell_type if isinstance(cell_type, str) else CellType(cell_type).name
    if ct.upper() == "TRI":
        g1, g2, g3 = G
        m = tau / 4.0 * np.array([[g1 + g3, g1, g3], [g1, g1 + g2, g2], [g3, g2, g2 + g3]])
    elif ct.upper() == "QUA":
        g1, g2, g3, g4 = G
        m = tau / 4.0 * np.array(
            [
                [g1 + g4, g1, 0.0, g4],
                [g1, g1 + g2, g2, 0.0],
                [0.0, g2, g2 + g3, g3],
                [g4, 0.0, g3, g3 + g4],
            ]
        )
    else:
        raise ValueError("nodal local matrix defined for TRI and QUA only")
    return m, float(np.linalg.det(m))
