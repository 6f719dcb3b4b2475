"""Command-line driver: tensor, solve, dd-solve, verify, mesh-info.

Exit codes: 0 success, 2 configuration, 3 I/O (files, mesh parsing),
4 solver (factorisation, residual, GMRES, size guard), 5 property failure
(including a non-absorbing medium). Failures print a JSON error object on
stderr and, when an output directory is known, write it to error.json.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import load_config
from .errors import (AbsorptionMissingError, ConfigError, ConvergenceError, InvalidParameterError,
                     MeshParseError, MeshStructureError, PlasmaFemError, SingularResonanceError,
                     SizeGuardError, SolverError, UnsupportedGeometryError)

log = logging.getLogger("plasmafem")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4, 5
THREADS_ENV = "PLASMAFEM_THREADS"


class PropertyFailure(PlasmaFemError):
    def __init__(self, message, failed):
        super().__init__(message)
        self.failed = failed


def exit_code_for(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (AbsorptionMissingError, PropertyFailure)):
        return EXIT_PROPERTY
    if isinstance(exc, (SolverError, SizeGuardError)):
        return EXIT_SOLVER
    if isinstance(exc, (OSError, MeshParseError, MeshStructureError, UnsupportedGeometryError)):
        return EXIT_IO
    if isinstance(exc, (InvalidParameterError, SingularResonanceError)):
        return EXIT_CONFIG
    return EXIT_SOLVER


def _error_payload(exc, code):
    out = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        out["path"] = exc.path
    if isinstance(exc, AbsorptionMissingError):
        out["kind"] = "absorption-missing"
    if isinstance(exc, PropertyFailure):
        out["failed_suites"] = exc.failed
    if isinstance(exc, ConvergenceError):
        out["iterations"] = max(len(exc.history) - 1, 0)
    return out


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {env!r}") from None
    return 1


def _outdir(args, cfg):
    d = Path(args.output) if args.output else Path(cfg.output["dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(obj):
    sys.stdout.write(io.to_json(obj) + "\n")
    sys.stdout.flush()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def tensor_report(cfg, points=None):
    """S, D, P, gamma_e, eigenvalues and (zeta, eta) at the requested points."""
    from .plasma import response_tensor, tensor_eigenvalues
    pts = np.asarray(points if points is not None else (cfg.points or [[0.5, 0.5, 0.5]]), float)
    rt = response_tensor(cfg.environment, pts)
    lam = np.stack(tensor_eigenvalues(rt), axis=-1)
    c = rt.coeffs
    rows = []
    for k, x in enumerate(pts):
        rows.append({"x": x, "S": c.S[k], "D": c.D[k], "P": c.P[k],
                     "gamma_e": float(np.real(c.gamma_e[k])), "nu_c": float(np.real(c.nu_c[k])),
                     "eigenvalues": lam[k], "K": rt.K[k]})
    return {"points": rows, "zeta": float(lam.imag.min()), "eta": float(np.abs(lam).max())}


def cmd_tensor(args, cfg):
    rep = tensor_report(cfg)
    if args.json:
        _emit(rep)
    else:
        for r in rep["points"]:
            x = ", ".join(f"{v:g}" for v in r["x"])
            print(f"x = ({x})")
            for key in ("S", "D", "P"):
                print(f"  {key:8s} {complex(r[key]):.6g}")
            print(f"  gamma_e  {r['gamma_e']:.6g}")
            print(f"  nu_c     {r['nu_c']:.6g}")
            print("  lambda   " + "  ".join(f"{complex(v):.6g}" for v in r["eigenvalues"]))
            for row in np.asarray(r["K"]):
                print("  K  " + "  ".join(f"{complex(v):.6g}" for v in row))
        print(f"zeta = {rep['zeta']:.6g}  eta = {rep['eta']:.6g}")
    if args.output:
        io.write_json(Path(args.output) / "tensor.json", rep)
    return EXIT_OK


def run_solve(cfg):
    from .fem import FeSpace, assemble_system
    from .solvers import solve
    mesh = cfg.load_mesh()
    space = FeSpace(mesh)
    src, case = cfg.source_data(mesh)
    system = assemble_system(space, cfg.environment, src, cfg.s)
    sol = solve(system, cfg.formulation)
    err = space.l2_error_vector(sol.E, case.E_exact) if case is not None else None
    return sol, err


def _pop_timings(report):
    # wall-clock times go to their own file so the other artifacts are reproducible
    return {k: report.pop(k) for k in ("factor_time", "solve_time") if k in report}


def cmd_solve(args, cfg):
    sol, err = run_solve(cfg)
    out = _outdir(args, cfg)
    p = sol.p if cfg.formulation.startswith("mixed") else None
    io.write_vtk(out / "solution.vtk", sol.space, sol.E, p, title=f"plasmafem {cfg.formulation}")
    report = sol.report.to_dict()
    if err is not None:
        report["l2_error"] = err
    io.write_json(out / "timing.json", _pop_timings(report))
    io.write_json(out / "report.json", report)
    print(f"{cfg.formulation}: {sol.report.n_free} unknowns, residual {sol.residual_norm:.3e}")
    if err is not None:
        print(f"L2 error vs analytic solution: {err:.6e}")
    return EXIT_OK


def cmd_dd_solve(args, cfg):
    from .dd import build_decomposed, interpret_multiplier, solve_decomposed
    from .mesh import build_partition
    if cfg.bc["mode"] != "dirichlet":
        raise ConfigError("bc.mode", "dd-solve supports the Dirichlet mode only")
    if cfg.formulation != "mixed_aug":
        log.info("dd-solve always uses the mixed augmented formulation")
    mesh = cfg.load_mesh()
    _check_cuts(cfg.dd["partition"], mesh)
    try:
        part = build_partition(mesh, cfg.partition_rule())
    except (MeshStructureError, InvalidParameterError, ValueError) as exc:
        raise ConfigError("dd.partition", str(exc)) from exc
    src, case = cfg.source_data(mesh)
    problem = build_decomposed(mesh, part, cfg.environment, src, cfg.s,
                               workers=_threads(args))
    out = _outdir(args, cfg)
    try:
        sol, lam, rep = solve_decomposed(problem, cfg.gmres_config())
    except ConvergenceError as exc:
        io.write_history(out / "gmres_history.csv", exc.history)
        raise
    io.write_history(out / "gmres_history.csv", rep.history)
    io.write_multipliers(out / "multipliers.csv", problem, lam)
    io.write_vtk(out / "solution.vtk", sol.space, sol.E, sol.p, title="plasmafem dd glued")
    for sub, (El, pl) in zip(problem.subdomains, sol.local_fields):
        io.write_vtk(out / f"subdomain_{sub.index}.vtk", sub.space, El, pl,
                     title=f"plasmafem subdomain {sub.index}")
    summary = {"subdomains": part.n_subdomains, "multipliers": rep.n_multipliers,
               "iterations": rep.iterations, "residual": rep.residual,
               "jump_residual": rep.jump_residual, "subdomain_unknowns": rep.subdomain_unknowns,
               "factor_time": rep.factor_time, "solve_time": rep.solve_time}
    if case is not None:
        summary["l2_error"] = sol.space.l2_error_vector(sol.E, case.E_exact)
    if args.compare_mono:
        mono, _ = run_solve(_as_mixed_aug(cfg))
        d = float(np.abs(sol.E - mono.E).max() / np.abs(mono.E).max())
        summary["dd_vs_mono"] = d
    if args.interpret and problem.n_rows:
        mi = interpret_multiplier(problem, sol, lam)
        summary["multiplier"] = vars(mi)
    io.write_json(out / "timing.json", _pop_timings(summary))
    io.write_json(out / "dd_report.json", summary)
    print(f"{part.n_subdomains} subdomains, {rep.n_multipliers} multipliers, "
          f"{rep.iterations} GMRES iterations, residual {rep.residual:.3e}, "
          f"jump {rep.jump_residual:.3e}")
    if "l2_error" in summary:
        print(f"L2 error vs analytic solution: {summary['l2_error']:.6e}")
    if "dd_vs_mono" in summary:
        print(f"DD vs monodomain relative difference: {summary['dd_vs_mono']:.3e}")
    return EXIT_OK


def _check_cuts(spec, mesh):
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    if spec["type"] == "axis":
        per_axis = {spec["axis"]: spec["cuts"]}
    else:
        per_axis = dict(enumerate(spec["cuts"]))
    for axis, cuts in per_axis.items():
        for i, c in enumerate(cuts):
            if not lo[axis] < c < hi[axis]:
                raise ConfigError(f"dd.partition.cuts[{i}]",
                                  f"cut {c} outside the mesh extent ({lo[axis]}, {hi[axis]})")


def _as_mixed_aug(cfg):
    from dataclasses import replace
    return replace(cfg, formulation="mixed_aug")


def cmd_verify(args, cfg):
    from .verification import (check_discrete_infsup, compare_formulations, make_mms_case,
                               run_convergence, spectral_report)
    from .fem import FeSpace
    from .mesh import unit_cube_mesh
    v = cfg.verify
    out = _outdir(args, cfg)
    failed = []
    results = {}
    for suite in v["suites"]:
        if suite == "spectral":
            rep = spectral_report(cfg.environment, cfg.load_mesh())
            results[suite] = rep
            ok = rep["absorbing"]
            print(f"spectral: zeta = {rep['zeta']:.4e}, eta = {rep['eta']:.4e} "
                  f"-> {'pass' if ok else 'FAIL'}")
            if not ok:
                raise AbsorptionMissingError(rep["zeta"])
        elif suite == "convergence":
            case = make_mms_case(cfg.environment, v["variant"])
            tables = run_convergence(case, v["formulations"], tuple(v["levels"]), cfg.s)
            ok = True
            for f, tab in tables.items():
                (out / f"convergence_{f}_{v['variant']}.csv").write_text(tab.to_csv())
                print(tab.to_text())
                ok &= tab.orders()[-1] >= v["min_order"]
            results[suite] = {f: t.orders() for f, t in tables.items()}
            print(f"convergence: final orders >= {v['min_order']} -> {'pass' if ok else 'FAIL'}")
        elif suite == "equivalence":
            case = make_mms_case(cfg.environment, v["variant"])
            rep = compare_formulations(case, v["levels"][-1], cfg.s)
            rows = [(f"{a}|{b}", d) for (a, b), d in rep.distances.items()]
            io.write_csv(out / "equivalence.csv", ["pair", "l2_distance"], rows)
            ok = rep.max_distance <= 5 * rep.max_error
            results[suite] = {"max_distance": rep.max_distance, "max_error": rep.max_error}
            print(f"equivalence: max distance {rep.max_distance:.3e} <= 5 x max error "
                  f"{5 * rep.max_error:.3e} -> {'pass' if ok else 'FAIL'}")
        else:  # infsup
            rows = []
            for n in v["levels"]:
                space = FeSpace(unit_cube_mesh(n))
                rows.append((n, check_discrete_infsup(space, cfg.environment, "b"),
                             check_discrete_infsup(space, cfg.environment, "beta")))
            io.write_csv(out / "infsup.csv", ["n", "beta_b", "beta_beta"], rows)
            # asserted: both positive, b-form non-collapse; the beta decay is reported only
            b = [r[1] for r in rows]
            ok = all(r[1] > 0 and r[2] > 0 for r in rows) and \
                all(y >= 0.5 * x for x, y in zip(b, b[1:]))
            results[suite] = rows
            for r in rows:
                print(f"infsup n={r[0]}: b {r[1]:.4e}  beta {r[2]:.4e}")
            print(f"infsup: positive, b-form non-collapse -> {'pass' if ok else 'FAIL'}")
        if not ok:
            failed.append(suite)
    io.write_json(out / "verify.json", {"results": results, "failed": failed})
    if failed:
        raise PropertyFailure(f"failed suites: {', '.join(failed)}", failed)
    return EXIT_OK


def cmd_mesh_info(args, cfg):
    from .fem import FeSpace, classify_nodes
    from .mesh import read_mesh, validate_mesh
    if args.mesh:
        mesh = read_mesh(args.mesh)
    elif cfg is not None:
        mesh = cfg.load_mesh()
    else:
        raise ConfigError("mesh", "give --mesh PATH or --config with a mesh block")
    info = mesh.summary()
    info["problems"] = validate_mesh(mesh)
    kinds, counts = np.unique(classify_nodes(FeSpace(mesh)), return_counts=True)
    info["node_classes"] = {str(k): int(c) for k, c in zip(kinds, counts)}
    if args.json:
        _emit(info)
    else:
        for k, val in info.items():
            print(f"{k:14s} {val}")
    if info["problems"]:
        raise MeshStructureError("; ".join(info["problems"]))
    return EXIT_OK


COMMANDS = {"tensor": cmd_tensor, "solve": cmd_solve, "dd-solve": cmd_dd_solve,
            "verify": cmd_verify, "mesh-info": cmd_mesh_info}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads for subdomain solves (env {THREADS_ENV})")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser = argparse.ArgumentParser(prog="plasmafem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("tensor", parents=[common], help="plasma tensor report at points")
    p.add_argument("--json", action="store_true")
    sub.add_parser("solve", parents=[common], help="monodomain solve")
    p = sub.add_parser("dd-solve", parents=[common], help="domain-decomposed solve")
    p.add_argument("--compare-mono", action="store_true",
                   help="also solve the monodomain problem and print the difference")
    p.add_argument("--interpret", action="store_true", help="report the multiplier analysis")
    sub.add_parser("verify", parents=[common], help="run verification suites")
    p = sub.add_parser("mesh-info", parents=[common], help="mesh summary and checks")
    p.add_argument("--mesh", help="mesh file (gmsh .msh or native dump)")
    p.add_argument("--json", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = args.output
    try:
        cfg = None
        if args.config:
            cfg = load_config(args.config)
            out_dir = out_dir or cfg.output["dir"]
        elif args.command != "mesh-info":
            raise ConfigError("--config", "a configuration file is required")
        _threads(args)
        return COMMANDS[args.command](args, cfg)
    except Exception as exc:  # mapped to exit codes
        code = exit_code_for(exc)
        payload = _error_payload(exc, code)
        sys.stderr.write(json.dumps(payload) + "\n")
        if out_dir and not isinstance(exc, OSError):
            try:
                io.write_json(Path(out_dir) / "error.json", payload)
            except OSError:
                pass
        log.debug("failure", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
