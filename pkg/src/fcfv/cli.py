"""Command-line driver.

Every command accepts ``--config file.json`` whose keys are the long option
names (with underscores); explicit command-line options override the file.
Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 mesh error.
"""
import argparse
from dataclasses import asdict, dataclass, fields
import json
import logging
import math
from pathlib import Path
import sys
import time
from typing import List, Optional

import numpy as np

from . import io
from .linsys import SingularSystemError
from .mesh import MeshError

log = logging.getLogger("fcfv")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_MESH = 0, 2, 3, 4

COMMANDS = (
    "generate-mesh",
    "solve-poisson",
    "solve-stokes",
    "converge",
    "tau-sweep",
    "adapt",
    "swimmer-surface",
    "legacy-demo",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = ""
    cell_type: str = "TRI"
    nsd: int = 2
    level: int = 4
    levels: Optional[List[int]] = None
    mesh: Optional[str] = None
    case: Optional[str] = None
    tau: Optional[float] = None
    taus: Optional[List[float]] = None
    eps: float = 1e-2
    max_iter: int = 10
    seed: Optional[int] = None
    stretch: Optional[float] = None
    solver: Optional[str] = None
    dump_matrix: bool = False
    gamma: float = 0.0
    n_lam: int = 101
    n_theta: int = 32
    out: str = "out"
    verbose: bool = False

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return doc


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def build_parser():
    p = argparse.ArgumentParser(prog="fcfv", description="Second-order face-centred finite volumes")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(sp):
        sp.add_argument("--config", help="JSON file with option values")
        sp.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
        sp.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)

    def mesh_opts(sp):
        sp.add_argument("--cell-type", default=argparse.SUPPRESS, help="TRI QUA TET HEX PRI PYR HYBRID")
        sp.add_argument("--nsd", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--level", type=int, default=argparse.SUPPRESS, help="divisions per side")
        sp.add_argument("--mesh", default=argparse.SUPPRESS, help="mesh JSON instead of a generator")
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="distort with this seed")
        sp.add_argument("--stretch", type=float, default=argparse.SUPPRESS, help="stretching factor")

    def case_opts(sp):
        sp.add_argument("--case", default=argparse.SUPPRESS)
        sp.add_argument("--tau", type=float, default=argparse.SUPPRESS)

    sp = sub.add_parser("generate-mesh", help="write a structured mesh as JSON")
    common(sp), mesh_opts(sp)
    for name in ("solve-poisson", "solve-stokes"):
        sp = sub.add_parser(name, help="solve a manufactured case, write VTK and errors")
        common(sp), mesh_opts(sp), case_opts(sp)
        if name == "solve-poisson":
            sp.add_argument("--solver", choices=("direct", "cg"), default=argparse.SUPPRESS)
        else:
            sp.add_argument("--solver", choices=("auto", "direct", "block"), default=argparse.SUPPRESS)
        sp.add_argument("--dump-matrix", action="store_true", default=argparse.SUPPRESS)
    sp = sub.add_parser("converge", help="convergence study over levels")
    common(sp), mesh_opts(sp), case_opts(sp)
    sp.add_argument("--levels", type=_csv_list(int), default=argparse.SUPPRESS)
    sp = sub.add_parser("tau-sweep", help="errors against the stabilisation parameter")
    common(sp), mesh_opts(sp), case_opts(sp)
    sp.add_argument("--levels", type=_csv_list(int), default=argparse.SUPPRESS)
    sp.add_argument("--taus", type=_csv_list(float), default=argparse.SUPPRESS)
    sp = sub.add_parser("adapt", help="indicator-driven mesh adaptation")
    common(sp), mesh_opts(sp), case_opts(sp)
    sp.add_argument("--eps", type=float, default=argparse.SUPPRESS)
    sp.add_argument("--max-iter", type=int, default=argparse.SUPPRESS)
    sp = sub.add_parser("swimmer-surface", help="sample the microswimmer surface")
    common(sp)
    sp.add_argument("--gamma", type=float, default=argparse.SUPPRESS)
    sp.add_argument("--n-lam", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--n-theta", type=int, default=argparse.SUPPRESS)
    sp = sub.add_parser("legacy-demo", help="nodal-basis local matrices and their determinants")
    common(sp)
    sp.add_argument("--tau", type=float, default=argparse.SUPPRESS)
    return p


def resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(RunConfig.load(args.config))
        if values.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {values['command']!r}, not {args.command!r}")
    values.update({k: v for k, v in vars(args).items() if k != "config"})
    cfg = RunConfig(**values)
    if cfg.mesh is not None and not Path(cfg.mesh).is_file():
        raise ConfigError(f"mesh file {cfg.mesh} not found")
    if cfg.tau is not None and not cfg.tau > 0:
        raise ConfigError("tau must be positive")
    if cfg.taus is not None and any(not t > 0 for t in cfg.taus):
        raise ConfigError("tau values must be positive")
    if not cfg.eps > 0:
        raise ConfigError("eps must be positive")
    if cfg.level < 1 or any(l < 1 for l in cfg.levels or []):
        raise ConfigError("levels must be positive")
    return cfg


def _nsd(cfg):
    ct = cfg.cell_type.upper()
    if ct in ("TET", "HEX", "PRI", "PYR"):
        return 3
    if ct in ("TRI", "QUA"):
        return 2
    return cfg.nsd


def _transform(cfg):
    from .transforms import distort_mesh, stretch_mesh

    def apply(mesh):
        if cfg.seed is not None:
            mesh = distort_mesh(mesh, cfg.seed)
        if cfg.stretch is not None:
            mesh = stretch_mesh(mesh, cfg.stretch)
        return mesh

    return apply if (cfg.seed is not None or cfg.stretch is not None) else None


def _mesh(cfg, n=None):
    from .generators import generate_structured_mesh

    if cfg.mesh is not None:
        mesh = io.read_mesh_json(cfg.mesh)
    else:
        mesh = generate_structured_mesh(cfg.cell_type.upper(), _nsd(cfg), n or cfg.level)
    tr = _transform(cfg)
    return tr(mesh) if tr else mesh


def _case(cfg, default, nsd):
    from .cases import get_case

    name = cfg.case or default
    try:
        case = get_case(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if case.nsd != nsd:
        raise ConfigError(f"case {name} is {case.nsd}D but the mesh is {nsd}D")
    return case


def _tau(cfg, nsd):
    from .cases import default_tau

    return cfg.tau if cfg.tau is not None else default_tau(nsd)


def cmd_generate_mesh(cfg, out):
    mesh = _mesh(cfg)
    path = out / "mesh.json"
    io.write_mesh_json(path, mesh)
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices -> {path}")
    return [path], {}


def _solve(cfg, out, kind):
    from .geometry import compute_geometry
    from .poisson import solve_poisson
    from .stokes import solve_stokes

    mesh = _mesh(cfg)
    case = _case(cfg, f"{kind}{mesh.nsd}d", mesh.nsd)
    if case.kind != kind:
        raise ConfigError(f"case {case.name} is not a {kind} case")
    tau = _tau(cfg, mesh.nsd)
    mesh = mesh.retag(case.tag_rule)
    geom = compute_geometry(mesh)
    dump = out / "matrix.mtx" if cfg.dump_matrix else None
    problem = case.problem(tau)
    if kind == "poisson":
        sol = solve_poisson(mesh, problem, geom, solver=cfg.solver or "direct", dump=dump)
    else:
        sol = solve_stokes(mesh, problem, geom, solver=cfg.solver or "auto", dump=dump)
    errs = _errors(case, sol, geom)
    vtk = out / "solution.vtk"
    io.write_vtk(vtk, mesh, io.solution_cell_data(sol))
    csv_path = out / "errors.csv"
    with open(csv_path, "w") as fh:
        fh.write("field,relative_l2_error\n")
        for k, v in errs.items():
            fh.write(f"{k},{v!r}\n")
    print(", ".join(f"err_{k} = {v:.4e}" for k, v in errs.items()))
    outputs = [vtk, csv_path] + ([dump] if dump else [])
    timings = {"assemble_s": sol.info["t_assemble_s"], "solve_s": sol.info["t_solve_s"]}
    return outputs, timings


def _errors(case, sol, geom):
    from .errors import LinearField, l2_error

    errs = {"u": l2_error(geom, LinearField(sol.coeffs), case.u).value}
    if case.kind == "poisson":
        errs["q"] = l2_error(geom, sol.q, lambda x: -case.grad(x)).value
    else:
        sq = math.sqrt(case.nu)
        errs["p"] = l2_error(geom, sol.pressure, case.p).value
        errs["L"] = l2_error(geom, sol.L, lambda x: -sq * case.grad(x)).value
    return errs


def cmd_solve_poisson(cfg, out):
    return _solve(cfg, out, "poisson")


def cmd_solve_stokes(cfg, out):
    if cfg.solver == "cg":
        raise ConfigError("cg is not available for Stokes")
    return _solve(cfg, out, "stokes")


def _study_case(cfg):
    nsd = _nsd(cfg)
    return _case(cfg, f"poisson{nsd}d", nsd), nsd


def cmd_converge(cfg, out):
    from .bench import convergence_study, cpu_time_curve, write_rows

    case, nsd = _study_case(cfg)
    levels = cfg.levels or ([2, 4, 8, 16, 32] if nsd == 2 else [2, 4, 8, 16])
    rep = convergence_study(case, cfg.cell_type.upper(), levels, _tau(cfg, nsd), transform=_transform(cfg))
    path = out / "convergence.csv"
    rep.write_csv(path)
    cpu = out / "cpu_time.csv"
    if rep.rows:
        write_rows(cpu_time_curve(rep), cpu)
    for r in rep.rows:
        print(f"n={r['n']:4d} h={r['h']:.4e} err_u={r['err_u']:.4e} order_u={r.get('order_u')}")
    if rep.failures:
        print(f"{len(rep.failures)} level(s) failed", file=sys.stderr)
    timings = {"total_s": sum(r["t_assemble_s"] + r["t_solve_s"] for r in rep.rows)}
    return [path, cpu], timings


def cmd_tau_sweep(cfg, out):
    from .bench import tau_sweep, write_rows

    case, nsd = _study_case(cfg)
    levels = cfg.levels or [4, 8]
    taus = cfg.taus or [1e0, 1e1, 1e2, 1e3, 1e4, 1e5]
    rows = tau_sweep(case, cfg.cell_type.upper(), levels, taus, transform=_transform(cfg))
    path = out / "tau_sweep.csv"
    write_rows(rows, path)
    for r in rows:
        print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return [path], {}


def cmd_adapt(cfg, out):
    from .adapt import adapt_loop

    mesh = _mesh(cfg)
    case = _case(cfg, "gaussian", mesh.nsd)
    size_path = out / "size_field.json"
    state = adapt_loop(
        case.problem(_tau(cfg, mesh.nsd)),
        mesh,
        cfg.eps,
        cfg.max_iter,
        exact=case.u,
        tag_rule=case.tag_rule,
        size_field_path=size_path,
    )
    hist = out / "adapt_history.csv"
    state.write_history(hist)
    vtk = out / "adapted.vtk"
    io.write_vtk(vtk, state.mesh, io.solution_cell_data(state.solution, state.E))
    for r in state.history:
        print(f"iter {r['iter']}: {r['n_cells']} cells, max E = {r['max_E']:.4e}")
    print(state.stopped)
    outputs = [hist, vtk] + ([size_path] if size_path.exists() else [])
    return outputs, {}


def cmd_swimmer_surface(cfg, out):
    from .swimmer import SwimmerParams, surface_grid

    p = SwimmerParams(gamma=cfg.gamma)
    S = surface_grid(p, cfg.n_lam, cfg.n_theta)
    lam = np.linspace(-p.L, p.L, cfg.n_lam)
    th = np.linspace(0.0, 2 * np.pi, cfg.n_theta, endpoint=False)
    path = out / "swimmer_surface.csv"
    with open(path, "w") as fh:
        fh.write("lambda,theta,x,y,z\n")
        for i, li in enumerate(lam):
            for j, tj in enumerate(th):
                fh.write(",".join(format(v, ".17g") for v in (li, tj, *S[i, j])) + "\n")
    print(f"{S.shape[0] * S.shape[1]} surface points -> {path}")
    return [path], {}


def cmd_legacy_demo(cfg, out):
    from .basis import face_integrals
    from .bench import legacy_nodal_local_matrix
    from .generators import generate_structured_mesh
    from .geometry import compute_geometry
    from .local import cell_matrices

    tau = cfg.tau if cfg.tau is not None else 1.0
    m_tri, d_tri = legacy_nodal_local_matrix("TRI", [1.0, 1.0, math.sqrt(2.0)], tau)
    m_qua, d_qua = legacy_nodal_local_matrix("QUA", [1.0, 1.0, 1.0, 1.0], tau)
    mesh = generate_structured_mesh("QUA", 2, 1)
    cm = cell_matrices(mesh, compute_geometry(mesh), tau)
    d_new = float(np.linalg.det(cm.m[0]))
    doc = {
        "tau": tau,
        "nodal_triangle_det": d_tri,
        "nodal_triangle_det_formula": tau**3 / 16 * math.sqrt(2.0),
        "nodal_quad_det": d_qua,
        "linear_basis_quad_det": d_new,
        "nodal_triangle_matrix": m_tri.tolist(),
        "nodal_quad_matrix": m_qua.tolist(),
        "linear_basis_quad_matrix": cm.m[0].tolist(),
    }
    path = out / "legacy_demo.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(f"nodal quad det = {d_qua:.3e}, linear-basis quad det = {d_new:.3e}")
    return [path], {}


HANDLERS = {
    "generate-mesh": cmd_generate_mesh,
    "solve-poisson": cmd_solve_poisson,
    "solve-stokes": cmd_solve_stokes,
    "converge": cmd_converge,
    "tau-sweep": cmd_tau_sweep,
    "adapt": cmd_adapt,
    "swimmer-surface": cmd_swimmer_surface,
    "legacy-demo": cmd_legacy_demo,
}


def run(cfg):
    """Execute ``cfg``; returns the exit status and writes a manifest."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status, message, outputs, timings = EXIT_OK, "", [], {}
    try:
        outputs, timings = HANDLERS[cfg.command](cfg, out)
    except ConfigError as exc:
        status, message = EXIT_CONFIG, str(exc)
    except SingularSystemError as exc:
        status, message = EXIT_SOLVER, str(exc)
    except MeshError as exc:
        status, message = EXIT_MESH, str(exc)
    timings["wall_s"] = time.perf_counter() - t0
    if message:
        print(f"error: {message}", file=sys.stderr)
    io.write_manifest(out / "manifest.json", asdict(cfg), outputs, timings, status, message)
    return status


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    try:
        cfg = resolve_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
