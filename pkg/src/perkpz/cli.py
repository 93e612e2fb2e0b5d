"""Command-line interface: ``perkpz <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical-quality
failure (or a failed acceptance check under ``verify``).

Options may also come from a JSON file given with ``--config``; keys are
option names with dashes or underscores, and flags on the command line win.
The default seed is read from ``PERKPZ_SEED`` when ``--seed`` is absent.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, records
from .errors import ConvergenceError, DomainError, IllConditionedError, NumericalQualityError, RangeError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
SEED_ENV = "PERKPZ_SEED"
DEFAULT_SEED = 12345
_NUMERIC_ERRORS = (NumericalQualityError, IllConditionedError, ConvergenceError, RangeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _floats(text) -> list:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _grid(text):
    try:
        a, b, n = str(text).split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must be start:stop:count")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="JSON file of option values (flags win)")
    g.add_argument("--seed", type=int, help=f"random seed (default ${SEED_ENV} or {DEFAULT_SEED})")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--output", "-o", help="write records here instead of stdout")
    g.add_argument("--tol", type=float, default=None, help="special-function tolerance")
    g.add_argument("--nodes", type=int, default=64, help="quadrature nodes per circle")
    g.add_argument("--jobs", type=int, default=1, help="worker cap for parallel loops")
    g.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reruns)")

    p = _Parser(prog="perkpz", description="Periodic KPZ fixed point numerics")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cdf", parents=[common], help="joint CDF P(H(gamma_i, tau_i) <= beta_i)")
    c.add_argument("--m", type=int)
    c.add_argument("--gamma", type=_floats)
    c.add_argument("--tau", type=_floats)
    c.add_argument("--beta", type=_floats)
    c.add_argument("--p", type=float, default=1.0)
    c.add_argument("--batch", help="CSV with columns gamma,tau,beta[,p]; ';' separates levels")
    c.add_argument("--plot-data", choices=("cdf", "density-tail"),
                   help="emit an (x, y) table over --grid instead of single records")
    c.add_argument("--grid", type=_grid, default=None, help="start:stop:count for --plot-data (write --grid=-3:3:25 for a negative start)")

    c = sub.add_parser("conditional", parents=[common], help="P(events | H(0,1) = ell)")
    c.add_argument("--x", type=_floats, default=[])
    c.add_argument("--t", type=_floats, default=[])
    c.add_argument("--h", type=_floats, default=[])
    c.add_argument("--ell", type=float, required=False)
    c.add_argument("--p", type=float, required=False)
    c.add_argument("--formula", choices=("auto", "mixed", "complement"), default="auto")

    c = sub.add_parser("limit", parents=[common], help="limit law of the pinched-up field")
    c.add_argument("--case", type=int, choices=(1, 2, 3))
    c.add_argument("--x", type=_floats, default=[])
    c.add_argument("--t", type=_floats, default=[])
    c.add_argument("--h", type=_floats, default=[])
    c.add_argument("--r", type=float, default=None)

    c = sub.add_parser("mc", parents=[common], help="Monte Carlo estimate of a limit law")
    c.add_argument("--case", type=int, choices=(1, 2, 3))
    c.add_argument("--x", type=_floats, default=None)
    c.add_argument("--t", type=_floats, default=[])
    c.add_argument("--h", type=_floats, default=[])
    c.add_argument("--rho", type=float, default=None)
    c.add_argument("--paths", type=int, default=100000)
    c.add_argument("--stream", type=int, default=0)

    c = sub.add_parser("tasep", parents=[common], help="empirical scaled CDF of ring TASEP")
    c.add_argument("--a", type=int, default=16)
    c.add_argument("--gamma", type=_floats, default=[0.0])
    c.add_argument("--tau", type=_floats, default=[1.0])
    c.add_argument("--beta", type=_floats, default=[0.5])
    c.add_argument("--runs", type=int, default=10000)
    c.add_argument("--stream", type=int, default=0)
    c.add_argument("--compare", action="store_true", help="also evaluate the exact CDF at p = 1")

    c = sub.add_parser("specfun", parents=[common], help="evaluate a special function")
    c.add_argument("--fn", choices=("polylog", "A1", "A2", "c_of_rho", "wrapped_gaussian"))
    c.add_argument("--s", type=float, default=1.5)
    c.add_argument("--z", type=complex, default=0.5)
    c.add_argument("--rho", type=float, default=1.0)
    c.add_argument("--x", type=float, default=0.0)
    c.add_argument("--t", type=float, default=1.0)

    c = sub.add_parser("verify", parents=[common], help="run acceptance checks")
    c.add_argument("--suite", default="all",
                   help="all, or a comma list of: identities, equivalence, tails, scaled, "
                        "conditional, structure, tasep, reproducibility")
    return p


def _apply_config(parser, args, argv):
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"config {args.config}: {e}")
    if not isinstance(cfg, dict):
        raise UsageError(f"config {args.config}: top level must be an object")
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    known = vars(args)
    for key, val in cfg.items():
        k = key.replace("-", "_")
        if k not in known or k in ("command", "config"):
            raise UsageError(f"config {args.config}: unknown key {key!r}")
        if k in given:
            continue
        if k in ("gamma", "tau", "beta", "x", "t", "h"):
            val = _floats(val)
        elif k == "grid":
            val = _grid(val)
        setattr(args, k, val)
    return args


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}")
    return DEFAULT_SEED


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"missing required option --{n.replace('_', '-')}")


def _positive(name, v):
    if not (v is not None and math.isfinite(v) and v > 0):
        raise UsageError(f"--{name} must be positive, got {v}")


# ---------------------------------------------------------------------------
# commands

def _quad_kw(args):
    from .specfun import DEFAULT_TOL
    return {"tol": args.tol if args.tol is not None else DEFAULT_TOL}


def _cdf_points(args):
    from .distribution import EvaluationPoint
    if args.batch:
        pts = []
        try:
            with open(args.batch, newline="") as fh:
                for i, row in enumerate(csv.DictReader(fh), start=2):
                    try:
                        lv = lambda k: [float(v) for v in row[k].split(";")]
                        pts.append(EvaluationPoint(lv("gamma"), lv("tau"), lv("beta"),
                                                   float(row.get("p") or args.p)))
                    except (KeyError, ValueError, DomainError, AttributeError) as e:
                        raise UsageError(f"{args.batch}:{i}: {e}")
        except OSError as e:
            raise UsageError(str(e))
        return pts
    _need(args, "gamma", "tau", "beta")
    if args.m is not None and not (len(args.gamma) == len(args.tau) == len(args.beta) == args.m):
        raise UsageError("--gamma, --tau, --beta must each have --m entries")
    try:
        return [EvaluationPoint(args.gamma, args.tau, args.beta, args.p)]
    except DomainError as e:
        raise UsageError(str(e))


def cmd_cdf(args):
    from .distribution import EvaluationPoint, density, joint_cdf
    kw = _quad_kw(args)
    _positive("p", args.p)
    if args.plot_data:
        grid = args.grid if args.grid is not None else np.linspace(-3, 3, 25)
        g = (args.gamma or [0.0])[0]
        tau = (args.tau or [1.0])[0]
        out = []
        for b in grid:
            b = float(b)
            if args.plot_data == "cdf":
                r = joint_cdf(EvaluationPoint((g,), (tau,), (b,), args.p), nodes=args.nodes, **kw)
                extra = {}
            else:
                r = density(b, g, tau, args.p, nodes=args.nodes, **kw)
                extra = {"asymptotic": math.exp(-4.0 / 3.0 * b**1.5) / (8.0 * math.pi * b) if b > 0 else None}
            out.append(records.ResultRecord.from_quad(
                f"cdf:{args.plot_data}", {"x": b, "gamma": g, "tau": tau, "p": args.p}, r, details=extra))
        return out
    out = []
    for pt in _cdf_points(args):
        r = joint_cdf(pt, nodes=args.nodes, **kw)
        out.append(records.ResultRecord.from_quad(
            "cdf", {"gamma": list(pt.gamma), "tau": list(pt.tau), "beta": list(pt.beta), "p": pt.p}, r,
            details={"nodes": r.nodes, "terms": r.terms}))
    return out


def cmd_conditional(args):
    from .distribution import ConditionalQuery, conditional_probability
    _need(args, "ell", "p")
    _positive("ell", args.ell)
    _positive("p", args.p)
    try:
        q = ConditionalQuery(args.x, args.t, args.h, args.ell, args.p)
    except DomainError as e:
        raise UsageError(str(e))
    res = conditional_probability(q, nodes=args.nodes, formula=args.formula, **_quad_kw(args))
    det = dict(res.extra)
    if res.numerator is not None:
        det["numerator_terms"] = {k: v["value"] for k, v in res.numerator.as_dict().items()}
    det["denominator"] = res.denominator.total().value
    return [records.ResultRecord("conditional", {"x": args.x, "t": args.t, "h": args.h, "ell": args.ell, "p": args.p},
                                 value_re=res.value, value_im=0.0, quad_proxy=res.error_proxy, details=det)]


def cmd_limit(args):
    from .limits import limit_conditional_cdf
    _need(args, "case")
    try:
        v = limit_conditional_cdf(args.case, args.x, args.t, args.h, args.r)
    except DomainError as e:
        raise UsageError(str(e))
    return [records.ResultRecord("limit", {"case": args.case, "x": args.x, "t": args.t, "h": args.h, "r": args.r},
                                 value_re=v)]


def cmd_mc(args):
    from .montecarlo import RandomStream, estimate_limit_probability
    _need(args, "case")
    seed = _seed(args)
    x = args.x if args.x is not None else [0.0] * len(args.t)
    try:
        e = estimate_limit_probability(args.case, x, args.t, args.h, args.rho, args.paths,
                                       RandomStream(seed, args.stream), jobs=args.jobs)
    except DomainError as err:
        raise UsageError(str(err))
    return [records.ResultRecord("mc", {"case": args.case, "x": x, "t": args.t, "h": args.h, "rho": args.rho,
                                        "stream": args.stream},
                                 value_re=e.value, se=e.se, n_paths=e.n_paths, seed=seed)]


def cmd_tasep(args):
    from .montecarlo import RandomStream
    from .tasep import empirical_scaled_cdf
    seed = _seed(args)
    if not (len(args.gamma) == len(args.tau) == len(args.beta)):
        raise UsageError("--gamma, --tau, --beta must have equal length")
    pts = list(zip(args.gamma, args.tau, args.beta))
    try:
        est, se = empirical_scaled_cdf(pts, args.a, args.runs, RandomStream(seed, args.stream), jobs=args.jobs)
    except DomainError as e:
        raise UsageError(str(e))
    det = {}
    if args.compare:
        from .distribution import EvaluationPoint, joint_cdf
        order = np.argsort(args.tau)
        g, t, b = (tuple(np.asarray(v)[order]) for v in (args.gamma, args.tau, args.beta))
        det["exact_p1"] = joint_cdf(EvaluationPoint(g, t, b, 1.0), nodes=args.nodes).value
    return [records.ResultRecord("tasep", {"a": args.a, "points": [list(p) for p in pts], "stream": args.stream},
                                 value_re=est, se=se, n_paths=args.runs, seed=seed, details=det)]


def cmd_specfun(args):
    from . import specfun
    _need(args, "fn")
    tol = _quad_kw(args)["tol"]
    det = {}
    if args.fn == "polylog":
        v = complex(specfun.polylog(args.s, args.z, tol))
        inp = {"s": args.s, "z": [args.z.real, args.z.imag]}
    elif args.fn in ("A1", "A2"):
        v = complex(getattr(specfun, args.fn)(args.z, tol))
        inp = {"z": [args.z.real, args.z.imag]}
    elif args.fn == "c_of_rho":
        _positive("rho", args.rho)
        a, b = specfun.c_of_rho(args.rho, tol), specfun.c_of_rho_dual(args.rho, tol)
        v = complex(a)
        det = {"theta_form": a, "poisson_dual_form": b, "difference": abs(a - b)}
        inp = {"rho": args.rho}
    else:
        _positive("rho", args.rho)
        _positive("t", args.t)
        v = complex(specfun.wrapped_gaussian(args.x, args.t, args.rho, tol))
        inp = {"x": args.x, "t": args.t, "rho": args.rho}
    return [records.ResultRecord(f"specfun:{args.fn}", inp, value_re=v.real, value_im=v.imag, details=det)]


def cmd_verify(args):
    from .acceptance import SUITES
    names = list(SUITES) if args.suite == "all" else [s.strip() for s in args.suite.split(",")]
    for n in names:
        if n not in SUITES:
            raise UsageError(f"unknown suite {n!r}; choose from {', '.join(SUITES)}")
    out = []
    for n in names:
        for c in SUITES[n]():
            print(c.line(), file=sys.stderr)
            out.append(records.ResultRecord(f"verify:{n}", {"criterion": c.criterion, "check": c.name},
                                            value_re=c.measured,
                                            details={"required": c.required, "relation": c.relation,
                                                     "passed": c.passed, "note": c.note}))
    return out


COMMANDS = {
    "cdf": cmd_cdf, "conditional": cmd_conditional, "limit": cmd_limit, "mc": cmd_mc,
    "tasep": cmd_tasep, "specfun": cmd_specfun, "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        args = _apply_config(parser, args, argv)
        if args.nodes < 16 or args.nodes % 2:
            raise UsageError("--nodes must be an even integer >= 16")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        t0 = time.perf_counter()
        recs = COMMANDS[args.command](args)
        if args.timing:
            dt = time.perf_counter() - t0
            for r in recs:
                r.wall_time = dt
    except UsageError as e:
        print(f"perkpz {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as e:
        print(f"perkpz {args.command}: numerical quality failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as e:
        print(f"perkpz {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    text = records.dumps(recs, args.format)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.command == "verify" and not all(r.details["passed"] for r in recs):
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
