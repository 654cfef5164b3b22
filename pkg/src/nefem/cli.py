"""Command-line interface: ``nefem check|quadrature|interpolate|converge|solve``.

Exit codes: 0 success, 1 failed check, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import format_report, run_checks
from .errors import (
    GeometryError,
    IllConditionedTransformError,
    InvertedElementError,
    PointLocationError,
    QuadratureError,
    SchemaError,
    SolverError,
)
from .geomfile import resolve_geometry
from .interpolation import error_norms, global_interpolate
from .mesh import build_hierarchy
from .quadrature import bezier_greville_rule, element_hybrid_rule, gauss_legendre, greville_weights
from .solver import ManufacturedSolution, assemble, fit_rate, manufactured_solve, solve
from .spaces import HybridLocalBasis, build_dof_map
from .spline import KnotVector

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
MAX_LEVELS = 4
SOLUTIONS = {
    "sine_product": ManufacturedSolution.sine_product,
    "smooth_exponential": ManufacturedSolution.smooth_exponential,
    "quadratic": ManufacturedSolution.quadratic,
}


class InputError(Exception):
    pass


def _zeta_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad zeta-tilde list {text!r}") from None
    if not vals or any(not 0.0 < z < 1.0 for z in vals):
        raise argparse.ArgumentTypeError("zeta-tilde values must lie in (0, 1)")
    return vals


def _resolution(text):
    try:
        parts = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad resolution {text!r}") from None
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError("resolution must be three positive integers nx,ny,nz")
    return parts


def build_parser():
    parser = argparse.ArgumentParser(prog="nefem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geometry", default="flat_cube",
                        help="preset name (flat_cube, bump_cube, cylinder_sector) or JSON file")
    common.add_argument("--levels", type=int, default=1, help=f"refinement levels (1..{MAX_LEVELS})")
    common.add_argument("--resolution", type=_resolution, default=None,
                        help="level-0 resolution nx,ny,nz (default: from the geometry)")
    common.add_argument("--zeta-tilde", type=_zeta_list, default=[0.5],
                        help="blend parameter(s) in (0,1), comma separated")
    common.add_argument("--quad-mode", default="gauss",
                        choices=["gauss", "hybrid", "hybrid2", "diagnostic_no_normalize"],
                        help="boundary-element quadrature used in assembly")
    common.add_argument("--solution", default="sine_product", choices=sorted(SOLUTIONS),
                        help="manufactured solution for converge/solve")
    common.add_argument("--tol", type=float, default=1e-10, help="CG relative residual tolerance")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--workers", type=int, default=1, help="threads for element computations")
    common.add_argument("--timings", action="store_true",
                        help="write wall-clock timings (makes output non-reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("check", "run the invariant battery"),
        ("quadrature", "export Greville, Gauss and hybrid rules as CSV"),
        ("interpolate", "interpolation error study"),
        ("converge", "manufactured-solution convergence study"),
        ("solve", "solve once on the finest level and export DOF values"),
    ]:
        sub.add_parser(name, parents=[common], help=helptext)
    return parser


def _header(args):
    cfg = {
        "command": args.command,
        "geometry": args.geometry,
        "levels": args.levels,
        "resolution": "default" if args.resolution is None else ",".join(map(str, args.resolution)),
        "zeta_tilde": ",".join(repr(z) for z in args.zeta_tilde),
        "quad_mode": args.quad_mode,
        "solution": args.solution,
        "tol": repr(args.tol),
        "workers": args.workers,
    }
    lines = [f"# nefem {__version__}"] + [f"# {k}: {v}" for k, v in cfg.items()]
    return "\n".join(lines) + "\n"


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _meshes(args):
    domain = resolve_geometry(args.geometry)
    return domain, build_hierarchy(domain, args.levels, args.resolution)


def cmd_check(args):
    _, meshes = _meshes(args)
    results = run_checks(meshes)
    report = format_report(results)
    _emit(args, _header(args) + report + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_quadrature(args):
    _, meshes = _meshes(args)
    mesh = meshes[-1]
    p, q = mesh.patch.degrees
    rows = []
    for d in sorted({p, q}):
        r = greville_weights(KnotVector.uniform(1, d)).to_symmetric()
        for k, (x, w) in enumerate(zip(r.points[:, 0], r.weights)):
            rows.append(("greville_1d", f"p={d}", k, x, 0.0, 0.0, w, "greville", r.residual))
    r2 = bezier_greville_rule(p, q)
    for k, (pt, w) in enumerate(zip(r2.points, r2.weights)):
        rows.append(("greville_2d", "cell", k, pt[0], pt[1], 0.0, w, "greville", ""))
    g = gauss_legendre(2, 3)
    for k, (pt, w) in enumerate(zip(g.points, g.weights)):
        rows.append(("gauss", "interior", k, pt[0], pt[1], pt[2], w, "gauss", ""))
    mode = "hybrid" if args.quad_mode == "gauss" else args.quad_mode
    hb = HybridLocalBasis(mesh)
    for e in mesh.boundary_ids:
        r = element_hybrid_rule(hb, e, mode)
        for k, (pt, w) in enumerate(zip(r.points, r.weights)):
            rows.append(("hybrid", f"element={e}", k, pt[0], pt[1], pt[2], w, mode, r.residual))
    cols = ["section", "owner", "index", "x", "y", "z", "weight", "tag", "lsq_residual"]
    _emit(args, _header(args) + _csv(rows, cols))
    return EXIT_OK


def cmd_interpolate(args):
    domain, meshes = _meshes(args)
    sol = SOLUTIONS[args.solution]()
    rows = []
    for zt in args.zeta_tilde:
        errs = []
        for mesh in meshes:
            uh = global_interpolate(sol.u, mesh, zt)
            errs.append(error_norms(sol.u, uh, sol.grad))
        hs = [m.h for m in meshes]
        for k, (mesh, (l2, h1)) in enumerate(zip(meshes, errs)):
            rl2 = rh1 = float("nan")
            if k > 0:
                dh = np.log(hs[k - 1] / hs[k])
                rl2 = np.log(errs[k - 1][0] / l2) / dh
                rh1 = np.log(errs[k - 1][1] / h1) / dh
            rows.append((zt, mesh.level, mesh.h, l2, h1, rl2, rh1))
        if len(meshes) >= 2:
            n = min(3, len(meshes))
            rows.append((zt, "fit", "", "", "", fit_rate(hs, [e[0] for e in errs], n),
                         fit_rate(hs, [e[1] for e in errs], n)))
    cols = ["zeta_tilde", "level", "h", "l2", "h1", "rate_l2", "rate_h1"]
    _emit(args, _header(args) + _csv(rows, cols))
    return EXIT_OK


def cmd_converge(args):
    domain, meshes = _meshes(args)
    sol = SOLUTIONS[args.solution]()
    rep = manufactured_solve(domain, sol, len(meshes), quad_mode=args.quad_mode, tol=args.tol,
                             workers=args.workers, meshes=meshes)
    rows = []
    for r in rep.rows():
        r = list(r)
        if not args.timings:
            r[7] = r[8] = ""
        rows.append(r)
    if len(rep.levels) >= 2:
        rows.append(["fit", "", "", "", "", rep.rate_l2, rep.rate_h1, "", ""])
    cols = ["level", "h", "ndof", "l2", "h1", "rate_l2", "rate_h1", "assemble_s", "solve_s"]
    _emit(args, _header(args) + _csv(rows, cols))
    return EXIT_OK


def cmd_solve(args):
    _, meshes = _meshes(args)
    mesh = meshes[-1]
    sol = SOLUTIONS[args.solution]()
    dm = build_dof_map(mesh, sol.u)
    system = assemble(mesh, dm, sol.source, args.quad_mode, args.workers)
    res = solve(system, args.tol)
    rows = [(k, dm.kinds[k], *dm.positions[k], res.x[k], sol.u(dm.positions[k:k + 1])[0])
            for k in range(dm.n_global)]
    cols = ["dof", "kind", "x", "y", "z", "value", "exact"]
    text = _header(args) + f"# cg_iterations: {res.iterations}\n" + _csv(rows, cols)
    _emit(args, text)
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "quadrature": cmd_quadrature,
    "interpolate": cmd_interpolate,
    "converge": cmd_converge,
    "solve": cmd_solve,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not 1 <= args.levels <= MAX_LEVELS:
        print(f"nefem: error: --levels must be in 1..{MAX_LEVELS}", file=sys.stderr)
        return EXIT_INPUT
    if args.workers < 1 or args.tol <= 0:
        print("nefem: error: --workers must be >= 1 and --tol > 0", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (SchemaError, FileNotFoundError, GeometryError, InputError) as exc:
        print(f"nefem: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, QuadratureError, PointLocationError, InvertedElementError,
            IllConditionedTransformError, np.linalg.LinAlgError) as exc:
        print(f"nefem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
