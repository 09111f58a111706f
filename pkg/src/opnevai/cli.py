"""Command-line front end.

Every subcommand writes CSV (header row, RFC-4180 quoting) or JSON to stdout
or ``--out``.  Exit status: 0 on success, 2 on invalid input, 3 when a
numerical procedure does not converge.  Errors are one line on stderr:

    error: <validation|numerical>: <reason>
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import io
import json
import math
import os
import re
import sys
from typing import Callable

import numpy as np

from . import cd_kernel, jacobi_core, nevai, ope, quadrature, spectral_class
from .errors import ConvergenceError
from .jacobi_core import DEFAULT_RESOLUTION, FamilySpec, PeriodicProfile

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# Expressions


_FUNCS = {"abs": np.abs, "exp": np.exp, "sin": np.sin, "atan": np.arctan}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def parse_expression(text: str) -> Callable:
    """Compile an arithmetic expression in x into a vectorized callable.

    Allowed: numbers, x, pi, e, + - * / ** ^, unary minus, abs, exp, sin, atan.
    """
    try:
        # ^ is read as a power; substituting keeps the usual precedence
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError:
        raise UsageError(f"cannot parse expression {text!r}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            value = float(node.value)
            return lambda x: value
        if isinstance(node, ast.Name):
            if node.id == "x":
                return lambda x: x
            if node.id in _CONSTS:
                value = _CONSTS[node.id]
                return lambda x: value
            raise UsageError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, left, right = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda x: op(left(x), right(x))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
            return lambda x: sign * inner(x)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and len(node.args) == 1 and not node.keywords:
            fn, inner = _FUNCS[node.func.id], build(node.args[0])
            return lambda x: fn(inner(x))
        raise UsageError(f"unsupported construct {type(node).__name__} in expression {text!r}")

    body = build(tree)

    def func(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(body(x), dtype=float), x.shape)

    return func


def test_function(selector: str, bound: float | None = None) -> nevai.TestFunction:
    """A battery entry by name, or an expression with an optional declared bound."""
    if selector in nevai.BATTERY:
        return nevai.BATTERY[selector]
    return nevai.TestFunction(parse_expression(selector), bound or math.inf, selector)


# --------------------------------------------------------------------------
# Argument types


def int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def grid_spec(text: str) -> np.ndarray:
    parts = str(text).split(":")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"grid must look like lo:hi:count, got {text!r}") from None
    if count < 1 or hi < lo:
        raise argparse.ArgumentTypeError("grid needs count >= 1 and lo <= hi")
    return np.linspace(lo, hi, count)


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def boolean(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# --------------------------------------------------------------------------
# Family handling


def family_spec(args) -> FamilySpec:
    if args.family is None:
        raise UsageError("--family is required")
    profile = None
    if args.alpha is not None or args.beta is not None:
        if args.alpha is None or args.beta is None:
            raise UsageError("--alpha and --beta must be given together")
        profile = PeriodicProfile(tuple(args.alpha), tuple(args.beta))
    return FamilySpec(
        args.family, gamma=args.gamma, s=args.s, p=args.p, t=args.t, kappa=args.kappa,
        profile=profile, exponent=args.exponent, path=args.table,
    )


def parameters(args, need: int = 0):
    spec = family_spec(args)
    return jacobi_core.jacobi_parameters(spec, max(args.resolution, need))


def profile_of(args) -> PeriodicProfile:
    if args.family is None:
        if args.alpha is None or args.beta is None:
            raise UsageError("give --family or both --alpha and --beta")
        return PeriodicProfile(tuple(args.alpha), tuple(args.beta))
    return spectral_class.family_profile(family_spec(args))


# --------------------------------------------------------------------------
# Output


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Subcommands


def cmd_coeffs(args):
    params = parameters(args, args.count)
    a, b = params.arrays(args.count)
    return to_csv(["n", "a_n", "b_n"], zip(range(args.count), a, b))


def cmd_eval(args):
    params = parameters(args, args.n + 1)
    pair = jacobi_core.eval_pair(params, args.n, np.array(args.x))
    return to_csv(["x", "u", "v", "log_scale"], zip(args.x, pair.u, pair.v, pair.log_scale))


def cmd_kernel(args):
    params = parameters(args, args.n + 1)
    ys = args.y if args.y is not None else args.x
    if len(ys) not in (1, len(args.x)):
        raise UsageError("--y must have one value or as many as --x")
    ys = ys * len(args.x) if len(ys) == 1 else ys
    rows = []
    for x, y in zip(args.x, ys):
        kv = cd_kernel.kernel(params, args.n, x, y)
        rows.append((x, y, kv.value, kv.method))
    return to_csv(["x", "y", "value", "method"], rows)


def cmd_quad(args):
    params = parameters(args, args.M)
    dm = quadrature.gauss_rule(params, args.M)
    if args.g is not None:
        dm = quadrature.modify_measure(dm, test_function(args.g))
    return dm.to_csv()


def cmd_nevai_trace(args):
    f = test_function(args.f, args.f_bound)
    grid = args.grid
    for point in args.exclude or []:
        grid = grid[np.abs(grid - point) > args.radius]
    params = parameters(args, 16 * max(args.n))
    trace = nevai.uniform_trace(params, f, grid, args.n)
    if args.summary:
        with open(args.summary, "w", newline="") as fh:
            fh.write(trace.summary_csv())
    return trace.to_csv()


def cmd_concentration(args):
    params = parameters(args, 4 * max(args.n))
    rows = []
    for n in args.n:
        dm = quadrature.gauss_rule(params, max(4 * n, 8))
        for eta in args.eta:
            rows.append((n, args.x, eta, nevai.concentration(params, n, args.x, eta, dm)))
    return to_csv(["n", "x", "eta", "mass"], rows)


def cmd_ratio(args):
    g = test_function(args.g, args.g_bound)
    params = parameters(args, 4 * max(args.n))
    rows = []
    for n in args.n:
        dm = quadrature.gauss_rule(params, max(4 * n, 16))
        lo, ratio, hi = nevai.ratio_bounds(params, g, n, args.x, dm, normalize=args.normalize)
        hard_lo, hard_hi = nevai.hard_bounds(g, dm)
        rows.append((n, args.x, lo, ratio, hi, hard_lo, hard_hi))
    return to_csv(["n", "x", "lower", "ratio", "upper", "hard_lower", "hard_upper"], rows)


def cmd_classify(args):
    profile = profile_of(args)
    report = spectral_class.classify(profile, args.tol)
    if report.label in ("IIa", "IIb") and args.family is not None:
        params = parameters(args)
        coeffs, bands, roots = spectral_class.h_report(
            params, profile, report.label, window=(args.window_lo, args.window_hi)
        )
        report.h_coeffs, report.lambda_minus, report.boundary_roots = coeffs, bands, roots
    return report.to_json() + "\n"


def _case_for(args, profile):
    if args.family == "periodic-blend":
        return "blend"
    return spectral_class.classify(profile).label


def cmd_asymptotics(args):
    spec = family_spec(args)
    profile = profile_of(args)
    case = _case_for(args, profile)
    params = parameters(args, max(args.n) + 1)
    asym = spectral_class.asymptotic_profile(params, profile, case, h_coeffs=args.h_coeffs)
    out = {
        "case": case,
        "rho": [{"n": n, "rho_n": asym.rho(n)} for n in args.n],
        "upsilon": [{"x": x, "value": float(asym.upsilon(x))} for x in args.x],
        "support": [[lo, hi] for lo, hi in asym.support],
    }
    if spec.family == "freud":
        out["rho_ratio_to_reference"] = [
            {"n": n, "ratio": asym.rho(n) / spectral_class.freud_rho_reference(spec.gamma, n)}
            for n in args.n
        ]
    try:
        density = spectral_class.family_density(spec)
    except ValueError:
        density = None
    if density is not None:
        out["kernel_limit"] = [
            {"x": x, "rows": spectral_class.kernel_limit_check(params, asym, x, args.n, density,
                                                              args.radius)}
            for x in args.x
        ]
    return to_json(out)


def cmd_h_limit(args):
    profile = profile_of(args)
    case = spectral_class.classify(profile).label
    params = parameters(args, (max(args.j) + 1) * profile.period + 1)
    out = []
    for x in args.x:
        res = spectral_class.h_limit(params, profile, x, args.j, case=case)
        out.append({"x": x, "j": res.j_list, "values": res.values, "stabilized": res.stabilized,
                    "estimate": res.estimate})
    return to_json({"case": case, "limits": out})


def cmd_weak_limit(args):
    f = test_function(args.f, args.f_bound)
    profile = profile_of(args)
    case = _case_for(args, profile)
    M = args.M or 4 * args.n
    params = parameters(args, M)
    asym = spectral_class.asymptotic_profile(params, profile, case, h_coeffs=args.h_coeffs)
    dm = quadrature.gauss_rule(params, M)
    res = spectral_class.weak_limit_check(params, asym, f, args.n, dm)
    out = {"case": case, "n": args.n, "nodes": M, "lhs": res.lhs, "rhs": res.rhs, "gap": res.gap}
    if case == "blend":
        out["exploratory"] = True
    if args.g is not None:
        mod = spectral_class.weak_limit_check(params, asym, f, args.n, dm,
                                              g=test_function(args.g, args.g_bound))
        out.update({"lhs_modified": mod.lhs, "gap_modified": mod.gap,
                    "lhs_difference": abs(mod.lhs - res.lhs)})
    return to_json(out)


def cmd_blend(args):
    if args.alpha is None or args.beta is None:
        raise UsageError("blend needs --alpha and --beta")
    profile = PeriodicProfile(tuple(args.alpha), tuple(args.beta))
    points = []
    for x in args.x:
        m = spectral_class.blend_transfer(profile, x)
        points.append({"x": x, "matrix": m.tolist(), "discriminant": jacobi_core.discriminant(m)})
    bands, roots = spectral_class.blend_bands(profile)
    return to_json({"points": points, "lambda_minus": [[lo, hi] for lo, hi in bands],
                    "boundary_roots": roots})


def _sampler(args):
    params = parameters(args, args.M)
    dm = quadrature.gauss_rule(params, args.M)
    return ope.EnsembleSampler(dm, args.n, params)


def cmd_ope_sample(args):
    return ope.sample(_sampler(args), args.seed, args.draws).to_csv()


def cmd_ope_stats(args):
    f = test_function(args.f, args.f_bound)
    return ope.statistic_report(_sampler(args), f, args.seed, args.draws).to_json() + "\n"


def cmd_lln(args):
    f = test_function(args.f, args.f_bound)
    profile = profile_of(args)
    case = _case_for(args, profile)
    params = parameters(args, 4 * max(args.n))
    asym = spectral_class.asymptotic_profile(params, profile, case, h_coeffs=args.h_coeffs)
    table = ope.lln_experiment(params, asym, f, args.n, args.draws, args.seed, args.epsilon)
    return table.to_csv()


def cmd_diagnostics(args):
    out = {}
    if args.measure is not None:
        dm = quadrature.DiscretizedMeasure.from_csv(args.measure)
        n_list = args.n or list(range(1, dm.size + 1))
        values = nevai.atom_limit_check(dm, args.atom, n_list)
        out["atom"] = {"index": args.atom, "x": float(dm.nodes[args.atom]),
                       "n": n_list, "kernel_times_mass": values}
    else:
        params = parameters(args, args.n_max + 1)
        rep = jacobi_core.regularity_diagnostics(params, args.r, args.period, args.n_max)
        out["regularity"] = {
            "r": rep.order,
            "period": rep.period,
            "n_max": rep.n_max,
            "sums": {name: s.tolist() for name, s in rep.sums.items()},
            "carleman": [{"n": n, "partial_sum": v} for n, v in rep.carleman_checkpoints],
            "carleman_growing": rep.carleman_growing,
        }
    return to_json(out)


# --------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(threads_default):
    common = _Parser(add_help=False, argument_default=None)
    g = common.add_argument_group("family")
    g.add_argument("--family", choices=jacobi_core.FAMILIES, help="family name (default: %(default)s)")
    g.add_argument("--gamma", type=float, help="freud exponent or laguerre-type power (default: %(default)s)")
    g.add_argument("--s", type=float, help="meixner s (default: %(default)s)")
    g.add_argument("--p", type=float, help="meixner p (default: %(default)s)")
    g.add_argument("--t", type=float, help="generalized-hermite t (default: %(default)s)")
    g.add_argument("--kappa", type=int, help="laguerre-type kappa (default: %(default)s)")
    g.add_argument("--alpha", type=float_list, help="periodic alpha, comma-separated (default: %(default)s)")
    g.add_argument("--beta", type=float_list, help="periodic beta, comma-separated (default: %(default)s)")
    g.add_argument("--exponent", type=float, help="envelope exponent of periodic families (default: %(default)s)")
    g.add_argument("--table", help="custom coefficient table file (default: %(default)s)")
    g.add_argument("--resolution", type=positive_int, default=DEFAULT_RESOLUTION,
                   help="coefficients resolved for weight-defined families (default: %(default)s)")
    r = common.add_argument_group("run")
    r.add_argument("--config", help="INI file of option values; flags override (default: %(default)s)")
    r.add_argument("--out", help="output file instead of stdout (default: %(default)s)")
    r.add_argument("--threads", type=positive_int, default=threads_default,
                   help="worker threads for linear algebra (default: %(default)s)")
    return common


def build_parser() -> argparse.ArgumentParser:
    threads = os.cpu_count() or 1
    common = _common(threads)
    parser = _Parser(prog="opnevai", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    def fn_opts(p, name="f", default="one"):
        p.add_argument(f"--{name}", default=default,
                       help="battery name (one, cauchy, sin, arctan, ratio) or expression in x (default: %(default)s)")
        p.add_argument(f"--{name}-bound", type=float, default=None,
                       help="declared sup-norm of an expression (default: %(default)s)")

    p = add("coeffs", cmd_coeffs, "Jacobi parameters a_n, b_n")
    p.add_argument("--count", type=positive_int, default=10, help="number of coefficients (default: %(default)s)")

    p = add("eval", cmd_eval, "scaled pair (p_{n-1}(x), p_n(x))")
    p.add_argument("--n", type=positive_int, required=True, help="degree n >= 1 (default: %(default)s)")
    p.add_argument("--x", type=float_list, default=[0.0], help="points (default: %(default)s)")

    p = add("kernel", cmd_kernel, "Christoffel-Darboux kernel K_n(x, y)")
    p.add_argument("--n", type=positive_int, required=True, help="degree n >= 1 (default: %(default)s)")
    p.add_argument("--x", type=float_list, default=[0.0], help="first arguments (default: %(default)s)")
    p.add_argument("--y", type=float_list, default=None, help="second arguments (default: same as x)")

    p = add("quad", cmd_quad, "Gauss rule as CSV x,w")
    p.add_argument("--M", type=positive_int, required=True, help="node count (default: %(default)s)")
    p.add_argument("--g", default=None, help="optional density to modify by (default: %(default)s)")

    p = add("nevai-trace", cmd_nevai_trace, "deviation |G_n[f](x) - f(x)| on a grid")
    fn_opts(p)
    p.add_argument("--grid", type=grid_spec, default=grid_spec("-1:1:41"), help="lo:hi:count (default: -1:1:41)")
    p.add_argument("--n", type=int_list, default=[8, 32, 128], help="ascending degrees (default: %(default)s)")
    p.add_argument("--exclude", type=float_list, default=None, help="exceptional points to avoid (default: %(default)s)")
    p.add_argument("--radius", type=float, default=nevai.EXCLUSION_RADIUS, help="exclusion radius (default: %(default)s)")
    p.add_argument("--summary", default=None, help="file for the n,sup_deviation summary (default: %(default)s)")

    p = add("concentration", cmd_concentration, "mass of omega_n^x on [x - eta, x + eta]")
    p.add_argument("--n", type=int_list, default=[4, 16, 64], help="degrees (default: %(default)s)")
    p.add_argument("--x", type=float, default=0.0, help="centre (default: %(default)s)")
    p.add_argument("--eta", type=float_list, default=[0.5], help="half-widths (default: %(default)s)")

    p = add("ratio", cmd_ratio, "Christoffel ratio under g dmu with its sandwich bounds")
    fn_opts(p, "g", "ratio")
    p.add_argument("--x", type=float, default=1.0, help="point (default: %(default)s)")
    p.add_argument("--n", type=int_list, default=[16, 64, 256], help="degrees (default: %(default)s)")
    p.add_argument("--normalize", type=boolean, default=False, help="divide g by its mean (default: %(default)s)")

    p = add("classify", cmd_classify, "case I/IIa/IIb/III of the periodic profile")
    p.add_argument("--tol", type=float, default=spectral_class.TOL, help="trace tolerance (default: %(default)s)")
    p.add_argument("--window-lo", type=float, default=-4.0, help="left end of the h-root scan (default: %(default)s)")
    p.add_argument("--window-hi", type=float, default=4.0, help="right end of the h-root scan (default: %(default)s)")

    p = add("asymptotics", cmd_asymptotics, "rho_n, upsilon and the kernel limit")
    p.add_argument("--n", type=int_list, default=[256, 1024, 4096], help="degrees (default: %(default)s)")
    p.add_argument("--x", type=float_list, default=[0.0], help="points (default: %(default)s)")
    p.add_argument("--h-coeffs", type=float_list, default=None,
                   help="ascending coefficients of h replacing the numerical fit (default: %(default)s)")
    p.add_argument("--radius", type=float, default=nevai.EXCLUSION_RADIUS, help="exclusion radius (default: %(default)s)")

    p = add("h-limit", cmd_h_limit, "rescaled discriminants converging to h(x)")
    p.add_argument("--x", type=float_list, default=[1.0], help="points (default: %(default)s)")
    p.add_argument("--j", type=int_list, default=list(spectral_class.H_JS), help="ascending j (default: %(default)s)")

    p = add("weak-limit", cmd_weak_limit, "both sides of the weak kernel limit")
    fn_opts(p)
    fn_opts(p, "g", None)
    p.add_argument("--n", type=positive_int, default=256, help="degree (default: %(default)s)")
    p.add_argument("--M", type=positive_int, default=None, help="node count, at least 4n (default: 4n)")
    p.add_argument("--h-coeffs", type=float_list, default=None, help="ascending coefficients of h (default: %(default)s)")

    p = add("blend", cmd_blend, "limit transfer matrix of a periodic blend")
    p.add_argument("--x", type=float_list, default=[0.0], help="points (default: %(default)s)")

    p = add("ope-sample", cmd_ope_sample, "draws from the discretized ensemble")
    p.add_argument("--n", type=positive_int, required=True, help="ensemble size (default: %(default)s)")
    p.add_argument("--M", type=positive_int, required=True, help="node count (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed (default: %(default)s)")
    p.add_argument("--draws", type=int, default=10, help="number of draws (default: %(default)s)")

    p = add("ope-stats", cmd_ope_stats, "mean and variance of a linear statistic")
    fn_opts(p, "f", "x")
    p.add_argument("--n", type=positive_int, required=True, help="ensemble size (default: %(default)s)")
    p.add_argument("--M", type=positive_int, required=True, help="node count (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed (default: %(default)s)")
    p.add_argument("--draws", type=int, default=0, help="Monte Carlo draws (default: %(default)s)")

    p = add("lln", cmd_lln, "law-of-large-numbers table")
    fn_opts(p, "f", "cauchy")
    p.add_argument("--n", type=int_list, default=[64, 256, 1024], help="degrees (default: %(default)s)")
    p.add_argument("--draws", type=int, default=0, help="Monte Carlo draws per n (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed (default: %(default)s)")
    p.add_argument("--epsilon", type=float, default=ope.EPSILON, help="epsilon of the bound (default: %(default)s)")
    p.add_argument("--h-coeffs", type=float_list, default=None, help="ascending coefficients of h (default: %(default)s)")

    p = add("diagnostics", cmd_diagnostics, "regularity sums, Carleman sum, or the atom check")
    p.add_argument("--r", type=positive_int, default=1, help="order r (default: %(default)s)")
    p.add_argument("--period", type=positive_int, default=1, help="period N (default: %(default)s)")
    p.add_argument("--n-max", type=positive_int, default=1000, help="last index (default: %(default)s)")
    p.add_argument("--measure", default=None, help="CSV x,w of a discrete measure for the atom check (default: %(default)s)")
    p.add_argument("--atom", type=int, default=0, help="node index of the atom (default: %(default)s)")
    p.add_argument("--n", type=int_list, default=None, help="degrees for the atom check (default: 1..M)")
    return parser


def _apply_config(parser, sub, path):
    """Set option defaults of the chosen subcommand from an INI file."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"config {path}: {str(exc).splitlines()[0]}") from None
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    values = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in actions or dest in ("config", "help"):
                raise UsageError(f"config {path}: unknown key {key!r} in [{section}]")
            if dest in values:
                raise UsageError(f"config {path}: key {key!r} given twice")
            action = actions[dest]
            try:
                value = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config {path}: bad value for {key}: {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config {path}: {key} must be one of {', '.join(action.choices)}")
            values[dest] = value
    sub.set_defaults(**values)


_NEGATIVE_VALUE = re.compile(r"^-[\d.]")


def _attach_negative_values(argv):
    """Turn ``--grid -1:1:5`` into ``--grid=-1:1:5`` so argparse sees a value."""
    out = []
    for token in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE_VALUE.match(token):
            out[-1] = f"{out[-1]}={token}"
        else:
            out.append(token)
    return out


def parse(argv):
    parser = build_parser()
    argv = _attach_negative_values(argv)
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(parser, sub, args.config)
        args = parser.parse_args(argv)
    return args


def _limit_threads(count):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=count)


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
        with _limit_threads(args.threads):
            text = args.func(args)
        if args.out:
            with open(args.out, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except (ConvergenceError, ArithmeticError) as exc:
        _report("numerical", exc)
        return EXIT_NUMERICAL
    except (ValueError, OSError, KeyError) as exc:
        _report("validation", exc)
        return EXIT_INVALID


def _report(kind, exc):
    message = " ".join(str(exc).split()) or type(exc).__name__
    sys.stderr.write(f"error: {kind}: {message}\n")


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
