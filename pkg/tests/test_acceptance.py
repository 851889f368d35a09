"""Acceptance criteria 1-15.

Each test records one pass/fail line (printed in the terminal summary) and
then asserts.  Expensive convergence studies are computed once per module
and shared between criteria.
"""
import csv
import math
import time

import numpy as np
import pytest

from fcfv.adapt import adapt_loop, error_indicator, target_size
from fcfv.bench import convergence_study, cpu_time_curve, legacy_nodal_local_matrix, run_case, tau_sweep, write_rows
from fcfv.cases import get_case
from fcfv.generators import generate_structured_mesh
from fcfv.geometry import compute_geometry
from fcfv.local import cell_matrices
from fcfv.mesh import Mesh
from fcfv.swimmer import SwimmerParams, centreline, evaluate_swimmer_surface, radii
from fcfv.transforms import distort_mesh, stretch_mesh, stretching_factor

from conftest import ACCEPTANCE, linear_poisson_case, linear_stokes_case

pytestmark = pytest.mark.acceptance

DIVS_2D = [2, 4, 8, 16, 32]
DIVS_3D = [2, 4, 8, 16]
FAM_2D = ["TRI", "QUA", "HYBRID"]
FAM_3D = ["TET", "HEX", "PRI", "PYR", "HYBRID"]
U_WINDOW = (1.8, 2.3)
LOW_WINDOW = (0.8, 1.3)
TAUS = [1e0, 1e1, 1e2, 1e3, 1e4, 1e5]

# symmetry errors and incompressibility residuals of every acceptance solve
SYMMETRY = {}
INCOMPRESSIBILITY = {}


def record(n, checks):
    """``checks``: list of (label, passed).  Stores and asserts the criterion."""
    failed = [label for label, ok in checks if not ok]
    ok = not failed
    detail = f"{len(checks)} checks" if ok else "failed: " + "; ".join(failed)
    ACCEPTANCE[n] = (ok, detail)
    assert ok, detail


def in_window(x, window):
    return x is not None and window[0] <= x <= window[1]


def _track(tag, rep):
    for r in rep.rows:
        SYMMETRY[f"{tag}/{rep.family}/n={r['n']}"] = r["symmetry_error"]
        if r.get("incompressibility") is not None:
            INCOMPRESSIBILITY[f"{tag}/{rep.family}/n={r['n']}"] = r["incompressibility"]


def _studies(case_name, families, divs, tau, tag, transform=None):
    case = get_case(case_name)
    t0 = time.perf_counter()
    reps = {}
    for ct in families:
        rep = convergence_study(case, ct, divs, tau, transform=transform)
        _track(tag, rep)
        reps[ct] = rep
    return reps, time.perf_counter() - t0


def _order_checks(reps, fields, label):
    checks = []
    for ct, rep in reps.items():
        checks.append((f"{label} {ct} all levels solved", not rep.failures))
        for f in fields:
            window = U_WINDOW if f == "u" else LOW_WINDOW
            o = rep.order(f)
            checks.append((f"{label} {ct} order({f})={o:.3f}" if o is not None else f"{label} {ct} order({f})", in_window(o, window)))
    return checks


@pytest.fixture(scope="module")
def poisson2d():
    return _studies("poisson2d", FAM_2D, DIVS_2D, 1e4, "c3")


@pytest.fixture(scope="module")
def poisson3d():
    return _studies("poisson3d", FAM_3D, DIVS_3D, 1e2, "c4")


@pytest.fixture(scope="module")
def stokes2d():
    return _studies("stokes2d", FAM_2D, DIVS_2D, 1e4, "c5")


@pytest.fixture(scope="module")
def stokes3d():
    return _studies("stokes3d", FAM_3D, DIVS_3D, 1e2, "c5")


@pytest.fixture(scope="module")
def sweeps():
    case = get_case("stokes2d")
    out = {ct: tau_sweep(case, ct, [4, 8], TAUS) for ct in ("TRI", "QUA")}
    for ct, rows in out.items():
        for r in rows:
            INCOMPRESSIBILITY[f"c8/{ct}/n={r['n']}/tau={r['tau']:g}"] = r["incompressibility"]
    return out


# --------------------------------------------------------------------- #


def test_criterion_01_poisson_exact_on_linears():
    t0 = time.perf_counter()
    checks = []
    for nsd, types in ((2, ["TRI", "QUA", "HYBRID"]), (3, ["TET", "HEX", "PRI", "PYR", "HYBRID"])):
        case = linear_poisson_case(nsd)
        for ct in types:
            sol, errs, _ = run_case(case, generate_structured_mesh(ct, nsd, 2), 1e4 if nsd == 2 else 1e2)
            SYMMETRY[f"c1/{ct}{nsd}d"] = sol.info["symmetry_error"]
            checks.append((f"{ct} {nsd}D err_u={errs['u']:.1e}", errs["u"] <= 1e-10))
            checks.append((f"{ct} {nsd}D err_q={errs['q']:.1e}", errs["q"] <= 1e-10))
    elapsed = time.perf_counter() - t0
    checks.append((f"runtime {elapsed:.1f}s", elapsed < 5.0))
    record(1, checks)


def test_criterion_02_stokes_exact_on_linears():
    t0 = time.perf_counter()
    checks = []
    for nsd, types in ((2, ["TRI", "QUA", "HYBRID"]), (3, ["TET", "HEX", "PRI", "PYR", "HYBRID"])):
        case = linear_stokes_case(nsd)
        for ct in types:
            sol, errs, _ = run_case(case, generate_structured_mesh(ct, nsd, 2), 1e4 if nsd == 2 else 1e2)
            SYMMETRY[f"c2/{ct}{nsd}d"] = sol.info["symmetry_error"]
            INCOMPRESSIBILITY[f"c2/{ct}{nsd}d"] = sol.info["incompressibility"]
            for f in ("u", "p", "L"):
                checks.append((f"{ct} {nsd}D err_{f}={errs[f]:.1e}", errs[f] <= 1e-9))
    elapsed = time.perf_counter() - t0
    checks.append((f"runtime {elapsed:.1f}s", elapsed < 10.0))
    record(2, checks)


def test_criterion_03_poisson_2d_orders(poisson2d):
    reps, elapsed = poisson2d
    checks = _order_checks(reps, ("u", "q"), "2D")
    checks += [(f"{ct} {len(r.rows)} levels", len(r.rows) == 5) for ct, r in reps.items()]
    checks.append((f"runtime {elapsed:.1f}s", elapsed < 60.0))
    record(3, checks)


def test_criterion_04_poisson_3d_orders(poisson3d):
    reps, elapsed = poisson3d
    checks = _order_checks(reps, ("u", "q"), "3D")
    checks += [(f"{ct} {len(r.rows)} levels", len(r.rows) == 4) for ct, r in reps.items()]
    comp = generate_structured_mesh("HYBRID", 3, 1).type_counts()
    checks.append((f"hybrid composition {comp}", comp == {"HEX": 1, "TET": 2, "PYR": 5}))
    checks.append((f"runtime {elapsed:.1f}s", elapsed < 600.0))
    record(4, checks)


def test_criterion_05_stokes_orders(stokes2d, stokes3d):
    reps2, t2 = stokes2d
    reps3, t3 = stokes3d
    checks = _order_checks(reps2, ("u", "p", "L"), "2D") + _order_checks(reps3, ("u", "p", "L"), "3D")
    checks += [(f"3D {ct} {len(r.rows)} levels", len(r.rows) == 4) for ct, r in reps3.items()]
    checks.append((f"runtime {t2 + t3:.1f}s", t2 + t3 < 900.0))
    record(5, checks)


def test_criterion_06_distortion():
    planarity = []

    def distort(mesh):
        out = distort_mesh(mesh, seed=2024)
        planarity.append(out.quad_face_planarity())
        return out

    reps2, _ = _studies("stokes2d", ["TRI", "QUA"], DIVS_2D, 1e4, "c6", distort)
    reps3, _ = _studies("stokes3d", ["TET", "HEX"], DIVS_3D, 1e2, "c6", distort)
    checks = _order_checks(reps2, ("u", "p", "L"), "2D distorted")
    checks += _order_checks(reps3, ("u", "p", "L"), "3D distorted")
    checks.append((f"planarity {max(planarity):.1e}", max(planarity) <= 1e-10))
    record(6, checks)


def test_criterion_07_stretching(poisson2d, poisson3d):
    base = {**{(ct, 2): r for ct, r in poisson2d[0].items()}, **{(ct, 3): r for ct, r in poisson3d[0].items()}}
    checks = []
    for s in (10.0, 100.0):
        measured = []

        def stretch(mesh, s=s):
            out = stretch_mesh(mesh, s)
            measured.append(stretching_factor(out))
            return out

        reps = {}
        r2, _ = _studies("poisson2d", ["TRI", "QUA"], DIVS_2D, 1e4, f"c7s{s:g}", stretch)
        r3, _ = _studies("poisson3d", ["TET", "HEX", "PRI", "PYR"], DIVS_3D, 1e2, f"c7s{s:g}", stretch)
        reps.update({(ct, 2): r for ct, r in r2.items()})
        reps.update({(ct, 3): r for ct, r in r3.items()})
        checks += _order_checks({f"{ct}{nsd}D": r for (ct, nsd), r in reps.items()}, ("u", "q"), f"s={s:g}")
        checks.append((f"s={s:g} measured within 5%", all(abs(m / s - 1) <= 0.05 for m in measured)))
        for key, rep in reps.items():
            for f in ("u", "q"):
                ratio = max(
                    max(a, b) / min(a, b) for a, b in zip(rep.errors(f), base[key].errors(f))
                )
                checks.append((f"s={s:g} {key[0]}{key[1]}D err_{f} ratio {ratio:.2f}", ratio < 10.0))
    record(7, checks)


def test_criterion_08_tau_study(sweeps):
    checks = []
    for ct, rows in sweeps.items():
        for n in sorted({r["n"] for r in rows}):
            sub = [r for r in rows if r["n"] == n]
            err = {r["tau"]: r["err_u"] for r in sub}
            best = min(err.values())
            # the minimum sits at 1e4; 1e5 may tie or beat it by at most 1%
            ok = err[1e4] == best or (err[1e5] == best and err[1e4] <= 1.01 * best)
            argmin = min(err, key=err.get)
            checks.append((f"{ct} n={n} u-error minimum at tau={argmin:g} (1e4: {err[1e4]:.4e}, min {best:.4e})", ok))
            if ct == "TRI":
                for f in ("p", "L"):
                    v = [r["err_" + f] for r in sub]
                    checks.append((f"TRI n={n} err_{f} spread {max(v) / min(v):.2f}", max(v) / min(v) < 10.0))
    record(8, checks)


def test_criterion_09_nodal_singularity(rng):
    checks = []
    for _ in range(20):
        G = rng.uniform(0.1, 3.0, 3)
        tau = rng.uniform(0.1, 10.0)
        _, det = legacy_nodal_local_matrix("TRI", G, tau)
        ref = tau**3 / 16 * np.prod(G)
        checks.append((f"triangle det {det:.6e} vs {ref:.6e}", abs(det - ref) <= 1e-12 * ref))
    _, det_q = legacy_nodal_local_matrix("QUA", [1, 1, 1, 1], 1.0)
    checks.append((f"quad nodal det {det_q:.1e}", abs(det_q) <= 1e-14))
    sq = generate_structured_mesh("QUA", 2, 1)
    det_new = np.linalg.det(cell_matrices(sq, compute_geometry(sq), 1.0).m[0])
    checks.append((f"new basis det {det_new:.3e}", det_new > 1e-8))
    record(9, checks)


def test_criterion_10_indicator_analytics():
    X = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]
    g = compute_geometry(Mesh.build(X, ["QUA"], [[0, 1, 2, 3]]))
    E0 = error_indicator(g, np.array([[1.0, 0.0, 0.0]]), np.array([1.0]))[0]
    Ed = error_indicator(g, np.array([[1.25, 0.0, 0.0]]), np.array([1.0]))[0]
    El = error_indicator(g, np.array([[0.0, 1.0, 0.0]]), np.array([0.0]))[0]
    checks = [
        (f"zero {E0:.1e}", abs(E0) <= 1e-12),
        (f"constant {Ed:.15f}", abs(Ed - 0.25) <= 1e-12),
        (f"linear {El:.15f}", abs(El - math.sqrt(1 / 12)) <= 1e-12),
    ]
    h2 = target_size(0.1, 4e-2, 1e-2, 2, cap=10.0)
    h3 = target_size(1.0, 1e-2 * 2**2.5, 1e-2, 3, cap=10.0)
    checks.append((f"2D exponent 1/2: {h2}", abs(h2 - 0.05) <= 1e-12))
    checks.append((f"3D exponent 2/5: {h3}", abs(h3 - 0.5) <= 1e-12))
    checks.append(("E = eps keeps h", abs(target_size(0.3, 1e-2, 1e-2, 2) - 0.3) <= 1e-15))
    record(10, checks)


def test_criterion_11_adaptivity():
    case = get_case("gaussian")
    mesh = generate_structured_mesh("TRI", 2, 8)
    t0 = time.perf_counter()
    st = adapt_loop(case.problem(1e4), mesh, 1e-2, max_iter=10, exact=case.u, tag_rule=case.tag_rule)
    elapsed = time.perf_counter() - t0
    g = compute_geometry(st.mesh)
    near = np.linalg.norm(g.centroid - 0.7, axis=1) < 0.2
    eff = st.efficiency
    err_u = [r["max_err_u"] for r in st.history]
    checks = [
        (f"initial cells {mesh.n_cells}", mesh.n_cells == 128),
        (f"terminated at iteration {st.iteration}", st.converged and st.iteration <= 10),
        (f"max E {st.history[-1]['max_E']:.3e}", st.history[-1]["max_E"] <= 1e-2),
        (f"fraction near (0.7, 0.7) {near.mean():.3f}", near.mean() >= 0.5),
        (f"efficiency from iteration 3 {np.round(eff[2:], 3).tolist()}", all(0.7 <= e <= 1.3 for e in eff[2:])),
        (f"final efficiency {eff[-1]:.3f}", 0.9 <= eff[-1] <= 1.1),
        (f"max err(u) monotone {np.round(err_u, 5).tolist()}", all(a > b for a, b in zip(err_u, err_u[1:]))),
        (f"runtime {elapsed:.1f}s", elapsed < 300.0),
    ]
    record(11, checks)


def test_criterion_12_incompressibility(stokes2d, stokes3d, sweeps):
    test_criterion_02_stokes_exact_on_linears()
    worst = max(INCOMPRESSIBILITY.values())
    stages = {k.split("/")[0] for k in INCOMPRESSIBILITY}
    checks = [
        (f"stages {sorted(stages)}", {"c2", "c5", "c8"} <= stages),
        (f"max residual {worst:.1e} over {len(INCOMPRESSIBILITY)} solves", worst <= 1e-10),
    ]
    record(12, checks)


def test_criterion_13_symmetry(poisson2d, poisson3d, stokes2d, stokes3d):
    test_criterion_01_poisson_exact_on_linears()
    test_criterion_02_stokes_exact_on_linears()
    worst = max(SYMMETRY.values())
    record(13, [(f"max relative asymmetry {worst:.1e} over {len(SYMMETRY)} meshes", worst <= 1e-12)])


def test_criterion_14_swimmer_surface(rng):
    checks = []
    p = SwimmerParams()
    lam = rng.uniform(-p.L, p.L, 1000)
    Rb, Rn = radii(p, lam)
    checks.append(("R_n = R_b / 4", np.allclose(Rn, Rb / 4, rtol=1e-15, atol=0)))
    theta = rng.uniform(0, 2 * np.pi, 1000)
    for gamma in (0.0, math.pi / 4, math.pi / 2):
        q = SwimmerParams(gamma=gamma)
        for tip in (-q.L, q.L):
            S = evaluate_swimmer_surface(q, tip, theta[:16])
            gap = np.abs(S - centreline(q, tip)).max()
            checks.append((f"gamma={gamma:.3f} tip {tip:+.0f} gap {gap:.1e}", gap <= 1e-12))
        a = evaluate_swimmer_surface(q, lam, theta)
        b = evaluate_swimmer_surface(q, lam, theta + 2 * np.pi)
        checks.append((f"gamma={gamma:.3f} finite", bool(np.all(np.isfinite(a)))))
        checks.append((f"gamma={gamma:.3f} periodic", np.abs(a - b).max() <= 1e-12))
    record(14, checks)


def test_criterion_15_cpu_time_trend(poisson2d, poisson3d, stokes2d, stokes3d, tmp_path):
    checks = []
    rows = []
    for label, (reps, _) in (("poisson2d", poisson2d), ("poisson3d", poisson3d), ("stokes2d", stokes2d), ("stokes3d", stokes3d)):
        for ct, rep in reps.items():
            curve = cpu_time_curve(rep)
            t = [c["cumulative_time_s"] for c in curve]
            e = [c["err_u"] for c in curve]
            ok = all(a < b for a, b in zip(t, t[1:])) and all(a > b for a, b in zip(e, e[1:]))
            checks.append((f"{label} {ct} error falls as time grows", ok))
            rows += [{"case": label, **c} for c in curve]
    path = tmp_path / "cpu_time.csv"
    write_rows(rows, path)
    back = list(csv.DictReader(open(path)))
    checks.append((f"csv rows {len(back)}", len(back) == len(rows) > 0))
    record(15, checks)
