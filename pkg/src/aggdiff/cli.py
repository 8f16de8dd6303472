"""Command-line front end.

Every subcommand writes CSV or JSON to stdout, or to ``--out PATH`` together
with ``PATH.manifest.json`` (command line, parameters, quadrature settings,
wall time and the sha256 of the output). Exit codes: 0 success, 2 invalid
input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .core import ParameterError, ProblemParams, alpha_from_q, classify_regime, is_even_lambda, q_from_alpha
from .even_lambda import (NonMonotoneError, critical_q_even, density_even, mass_curve, mass_even,
                          monotonicity_scan, solve_betas)
from .general_lambda import (critical_q_general, density_from_f, solve_general)
from .quadrature import QuadMode, QuadratureRule
from .quartic import (critical_q4, density_eval_quartic, mass_at, solve_B, solve_minimizer_quartic)
from .specfun import KernelMethod, applicable_methods, kernel_K

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


def fmt(x) -> str:
    """Locale-independent number text with 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def to_json(obj, indent: int = 0) -> str:
    """JSON with floats at full precision; non-finite floats become null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(v, indent + 1) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


def to_csv(header: list[str], rows: list[list], comments: list[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def quad_rule(args) -> QuadratureRule:
    mode = QuadMode(args.quad_mode)
    if mode is QuadMode.UNIFORM_RIEMANN:
        return QuadratureRule(mode=mode, npoints=args.quad_points or 1000, r_max=args.quad_rmax)
    return QuadratureRule(mode=mode, npoints=args.quad_points or 64, rel_tol=args.quad_rtol)


def grid_rule(args) -> QuadratureRule:
    mode = QuadMode(args.grid_mode)
    if mode is QuadMode.UNIFORM_RIEMANN:
        return QuadratureRule.riemann(args.grid_points, args.grid_rmax)
    return QuadratureRule()


def _even_n(lam: float) -> int:
    if not is_even_lambda(lam):
        raise UsageError(f"--lambda must be an even integer for this command, got {lam}")
    return int(round(lam / 2))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("AGGDIFF_THREADS", "1")))
    except ValueError:
        return 1


def cmd_quartic(args):
    N, q = args.N, args.q
    p = ProblemParams(N, 4.0, q)
    regime = classify_regime(p)
    rule = quad_rule(args)
    if args.L is not None:
        if regime.value == "UnboundedBelow":
            raise ParameterError(f"regime {regime.value}")
        B = solve_B(N, q, args.L, rule)
        m = mass_at(N, q, args.L, rule, B=B)
        out = {"N": N, "q": q, "regime": regime.value, "branch": None, "L": args.L, "B": B,
               "mass": m, "atom": None, "q_crit4": critical_q4(N)}
    else:
        sol = solve_minimizer_quartic(N, q, allow_formal=args.allow_formal, rule=rule)
        out = sol.as_dict()
    return "json", out


def cmd_mass_curve(args):
    n = _even_n(args.lam)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if not args.alpha_min <= args.alpha_max:
        raise UsageError("--alpha-min must not exceed --alpha-max")
    grid = np.linspace(args.alpha_min, args.alpha_max, args.steps)
    pts = mass_curve(args.N, n, grid, quad_rule(args))
    rows = [[pt.alpha, pt.q, pt.m0, pt.residual, pt.converged] for pt in pts]
    ok = sum(pt.converged for pt in pts) >= 0.9 * len(pts)
    return "csv", (["alpha", "q", "m0", "residual", "converged"], rows, []), (EXIT_OK if ok else EXIT_NUMERIC)


def cmd_critical_q(args):
    method = "general" if (args.general or not is_even_lambda(args.lam)) else "even"
    if method == "even":
        res = critical_q_even(args.N, _even_n(args.lam), args.tol, quad_rule(args))
    else:
        res = critical_q_general(args.N, args.lam, args.tol, args.degree, grid_rule(args))
    out = {"N": args.N, "lambda": args.lam, "concentration": res is not None,
           "q_crit": res[0] if res else None, "alpha_crit": res[1] if res else None,
           "tol": args.tol, "method": method}
    return "json", out


def _curve_point(job):
    N, lam, tol, degree, grid = job
    try:
        res, sol = critical_q_general(N, lam, tol, degree, grid, details=True)
    except NonMonotoneError:
        return [lam, None, None, None, False]
    except (ArithmeticError, ValueError):
        return [lam, None, None, None, False]
    if res is None:
        return [lam, None, None, None, True]
    l1 = sol.l1_error if sol is not None else None
    return [lam, res[0], res[1], l1, True]


def cmd_critical_curve(args):
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if not 0 < args.lambda_min <= args.lambda_max:
        raise UsageError("need 0 < --lambda-min <= --lambda-max")
    lams = np.linspace(args.lambda_min, args.lambda_max, args.steps)
    jobs = [(args.N, float(lam), args.tol, args.degree, grid_rule(args)) for lam in lams]
    workers = _threads()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_curve_point, jobs))
    else:
        rows = [_curve_point(j) for j in jobs]
    ok = all(r[4] for r in rows)
    return "csv", (["lambda", "q_crit", "alpha_crit", "l1_error", "converged"], rows, []), \
        (EXIT_OK if ok else EXIT_NUMERIC)


def cmd_general_solve(args):
    p = ProblemParams(args.N, args.lam, args.q)
    sol = solve_general(p, args.degree, grid_rule(args), allow_formal=args.allow_formal)
    return "json", sol.as_dict(), (EXIT_OK if sol.converged else EXIT_NUMERIC)


def cmd_profile(args):
    if not 0 < args.r_min < args.r_max:
        raise UsageError("need 0 < --r-min < --r-max")
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    r = np.geomspace(args.r_min, args.r_max, args.points)
    rule = quad_rule(args)
    lam, N, q = args.lam, args.N, args.q
    if abs(lam - 4) < 1e-12 and not args.L:
        sol = solve_minimizer_quartic(N, q, allow_formal=args.allow_formal, rule=rule)
        rho, atom, mass = density_eval_quartic(sol, r), sol.atom, sol.mass
    elif is_even_lambda(lam):
        st = solve_betas(N, _even_n(lam), q, args.L or 0.0, rule=rule)
        if not st.converged:
            raise ArithmeticError(f"fixed point not converged: {st.message}")
        rho, mass = density_even(st, r), float(mass_even(st, rule))
        atom = max(0.0, 1.0 - mass) if not args.L else 0.0
    else:
        if args.L:
            raise UsageError("non-even lambda profiles are only available at L = 0")
        sol = solve_general(ProblemParams(N, lam, q), args.degree, grid_rule(args), allow_formal=args.allow_formal)
        if not sol.converged:
            raise ArithmeticError(f"general solve not converged (l1 error {sol.l1_error:.3g})")
        rho, mass = density_from_f(sol.params, sol.ansatz, r), sol.mass
        atom = max(0.0, 1.0 - mass)
    rows = [[a, b] for a, b in zip(r, np.atleast_1d(rho))]
    return "csv", (["r", "rho"], rows, [f"atom={fmt(atom)}", f"mass={fmt(mass)}"])


def cmd_kernel(args):
    N, lam = args.N, args.lam
    if args.method == "auto":
        methods = applicable_methods(N, lam)
        values = {m.value: kernel_K(N, lam, args.r, args.s, m) for m in methods}
        vals = list(values.values())
        ref = max(abs(v) for v in vals) or 1.0
        dev = max(abs(a - b) for a in vals for b in vals) / ref
        out = {"N": N, "lambda": lam, "r": args.r, "s": args.s, "method": methods[0].value,
               "value": values[methods[0].value], "methods": values, "max_rel_deviation": dev}
    else:
        m = KernelMethod(args.method)
        out = {"N": N, "lambda": lam, "r": args.r, "s": args.s, "method": m.value,
               "value": kernel_K(N, lam, args.r, args.s, m)}
    return "json", out


def cmd_monotonicity(args):
    n = _even_n(args.lam)
    q = args.q if args.q is not None else q_from_alpha(args.N, args.lam, args.alpha)
    L = sorted(float(x) for x in args.L)
    rep = monotonicity_scan(args.N, n, q, L, quad_rule(args))
    out = {"N": args.N, "lambda": args.lam, "q": q, "alpha": alpha_from_q(ProblemParams(args.N, args.lam, q)),
           "L": rep.L, "mass": rep.masses, "converged": rep.converged, "monotone": rep.monotone,
           "failures": rep.failures}
    return "json", out, (EXIT_OK if all(rep.converged) else EXIT_NUMERIC)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggdiff", description="Stationary states with mass concentration "
                                     "for aggregation-diffusion free energies.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write output here and a manifest next to it")
    common.add_argument("--quad-mode", choices=[m.value for m in QuadMode], default="gauss")
    common.add_argument("--quad-points", type=int, default=None)
    common.add_argument("--quad-rmax", type=float, default=20.0)
    common.add_argument("--quad-rtol", type=float, default=1e-10)
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--degree", type=int, default=10)
    grid.add_argument("--grid-mode", choices=[m.value for m in QuadMode], default="riemann")
    grid.add_argument("--grid-points", type=int, default=1000)
    grid.add_argument("--grid-rmax", type=float, default=20.0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quartic", parents=[common], help="minimizer for lambda = 4")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--L", type=float, default=None, help="report B(L), m(L) at this multiplier instead")
    p.add_argument("--allow-formal", action="store_true")
    p.set_defaults(func=cmd_quartic)

    p = sub.add_parser("mass-curve", parents=[common], help="m(0) against alpha for even lambda")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--alpha-min", type=float, required=True)
    p.add_argument("--alpha-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.set_defaults(func=cmd_mass_curve)

    p = sub.add_parser("critical-q", parents=[common, grid], help="critical exponent for one lambda")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--general", action="store_true", help="use the polynomial ansatz solver")
    p.set_defaults(func=cmd_critical_q)

    p = sub.add_parser("critical-curve", parents=[common, grid], help="critical exponent over a lambda range")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda-min", type=float, required=True)
    p.add_argument("--lambda-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_critical_curve)

    p = sub.add_parser("general-solve", parents=[common, grid], help="polynomial ansatz solve at L = 0")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--allow-formal", action="store_true")
    p.set_defaults(func=cmd_general_solve)

    p = sub.add_parser("profile", parents=[common, grid], help="density profile on a log grid")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--r-min", type=float, default=1e-3)
    p.add_argument("--r-max", type=float, default=1e3)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--allow-formal", action="store_true")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("kernel", parents=[common], help="radial interaction kernel K(r, s)")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--method", choices=["auto"] + [m.value for m in KernelMethod], default="auto")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("monotonicity", parents=[common], help="m(L) along a grid of multipliers")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--q", type=float)
    g.add_argument("--alpha", type=float)
    p.add_argument("--L", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_monotonicity)
    return parser


def _manifest(argv, args, text: str, elapsed: float) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    return {
        "command_line": ["aggdiff"] + list(argv),
        "version": __version__,
        "parameters": params,
        "quadrature": quad_rule(args).as_dict(),
        "grid": grid_rule(args).as_dict() if hasattr(args, "grid_mode") else None,
        "wall_time_s": elapsed,
        "artifacts": {os.path.basename(args.out): hashlib.sha256(text.encode()).hexdigest()},
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        result = args.func(args)
    except (UsageError, ParameterError) as exc:
        print(f"aggdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"aggdiff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    kind, payload = result[0], result[1]
    code = result[2] if len(result) > 2 else EXIT_OK
    text = to_json(payload) + "\n" if kind == "json" else to_csv(*payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        man = _manifest(argv, args, text, time.perf_counter() - t0)
        with open(args.out + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(to_json(man) + "\n")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
