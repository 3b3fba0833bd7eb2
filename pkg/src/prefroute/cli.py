"""Command-line front end.

Exit status: 0 success, 1 usage error, 2 data error, 3 infeasible instance.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from typing import Sequence

from . import dataio
from .evaluation import (
    DIST,
    EvalConfig,
    build_problem,
    drift_scenario,
    format_sweep_table,
    incremental_evaluate,
    parameter_sweep,
    routing_km,
)
from .learn import Scheme, WeighingScheme, estimate_first_order, estimate_second_order
from .solve import InfeasibleError, solve
from .synthetic import SyntheticConfig, generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _theta(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"theta must be positive, got {text}")
    return v


def _values(text: str) -> list[float]:
    try:
        out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("at least one value is required")
    return out


def _model_flags(p: argparse.ArgumentParser, solver: bool = True):
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="unif")
    p.add_argument("--order", type=int, choices=(1, 2), default=1)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.7)
    if not solver:
        return
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--theta", type=_theta, default=1.0, help="softmax scale or 'auto'")
    p.add_argument("--dist-only", action="store_true", help="distance probabilities only (beta = 0)")
    p.add_argument("--baseline", choices=(DIST,), help="ignore the history and minimise kilometres")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", dest="solver", action="store_const", const="exact")
    g.add_argument("--heuristic", dest="solver", action="store_const", const="heuristic")
    p.set_defaults(solver="auto")
    p.add_argument("--fleet-equality", action="store_true", help="use exactly m tours")
    p.add_argument("--capacity-free", action="store_true", help="unit demands, capacity n")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distances", help="distance matrix CSV")
    p.add_argument("--timing", action="store_true", help="report solve times (makes output time dependent)")


def _eval_flags(p: argparse.ArgumentParser):
    p.add_argument("--split", type=float, default=0.75)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prefroute", description="Learn routing preferences from historical routings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic history and distance matrix")
    g.add_argument("--out", required=True, help="history JSON")
    g.add_argument("--distances-out", help="distance matrix CSV")
    g.add_argument("--n-regular", type=int, default=30)
    g.add_argument("--n-adhoc", type=int, default=40)
    g.add_argument("--p-regular", type=float, default=0.95)
    g.add_argument("--p-adhoc", type=float, default=0.16)
    g.add_argument("--weeks", type=int, default=40)
    g.add_argument("--weekdays", type=int, default=5)
    g.add_argument("--fleet", default="9,6", help="vehicles before,after the drift")
    g.add_argument("--drift-week", default="20", help="week of the drift or 'none'")
    g.add_argument("--post-drift-regular", type=int, default=20)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--capacity", type=int)
    g.add_argument("--seed", type=int, default=0)

    le = sub.add_parser("learn", help="estimate a transition matrix (order 1) or tensor (order 2)")
    le.add_argument("--history", required=True)
    le.add_argument("--out", help="matrix CSV (order 1) or tensor JSON (order 2); stdout if omitted")
    _model_flags(le, solver=False)

    so = sub.add_parser("solve", help="predict one instance from the instances before it")
    so.add_argument("--history", required=True)
    so.add_argument("--target", type=int, help="timestamp to predict (default: the last)")
    so.add_argument("--out", help="routing JSON; stdout if omitted")
    _model_flags(so)

    ev = sub.add_parser("evaluate", help="incremental train-and-test run")
    ev.add_argument("--history", required=True)
    ev.add_argument("--out", help="records CSV; stdout if omitted")
    ev.add_argument("--group-by", choices=("weekday",))
    _model_flags(ev)
    _eval_flags(ev)

    dr = sub.add_parser("drift", help="records around a concept drift")
    dr.add_argument("--history", required=True)
    dr.add_argument("--out", help="records CSV; stdout if omitted")
    dr.add_argument("--mode", choices=("drop", "rise", "both"), default="both")
    dr.add_argument("--drift-t", type=int, help="first timestamp after the drift (default: from the file)")
    _model_flags(dr)
    dr.add_argument("--jobs", type=int, default=1)

    sw = sub.add_parser("sweep", help="mean RD/AD/km/time per parameter value")
    sw.add_argument("--history", required=True)
    sw.add_argument("--out", help="table file; stdout if omitted")
    sw.add_argument("--axis", choices=("lambda", "alpha", "beta"), required=True)
    sw.add_argument("--values", type=_values, required=True)
    sw.add_argument("--baselines", action="store_true", help="add distance-only and actual columns")
    _model_flags(sw)
    _eval_flags(sw)
    return parser


def _check_domains(args) -> None:
    def need(cond, msg):
        if not cond:
            raise UsageError(msg)

    if hasattr(args, "lam"):
        need(args.lam >= 0, f"--lambda must be >= 0, got {args.lam}")
        need(0 < args.alpha < 1, f"--alpha must lie in (0, 1), got {args.alpha}")
    if hasattr(args, "beta"):
        need(0 <= args.beta <= 1, f"--beta must lie in [0, 1], got {args.beta}")
        need(not (args.dist_only and args.baseline), "--dist-only and --baseline exclude each other")
        need(not (args.dist_only and args.order == 2), "--dist-only is first order only")
    if hasattr(args, "split"):
        need(0 < args.split < 1, f"--split must lie in (0, 1), got {args.split}")
    if hasattr(args, "jobs"):
        need(args.jobs >= 1, f"--jobs must be >= 1, got {args.jobs}")
    if args.command == "sweep" and args.axis == "beta":
        need(all(0 <= v <= 1 for v in args.values), "beta values must lie in [0, 1]")
    if args.command == "sweep" and args.axis == "alpha":
        need(all(0 < v < 1 for v in args.values), "alpha values must lie in (0, 1)")
    if args.command == "sweep" and args.axis == "lambda":
        need(all(v >= 0 for v in args.values), "lambda values must be >= 0")
    if args.command == "generate":
        for name in ("p_regular", "p_adhoc", "noise"):
            v = getattr(args, name)
            need(0 <= v <= 1, f"--{name.replace('_', '-')} must lie in [0, 1], got {v}")


def _config(args) -> EvalConfig:
    beta = 0.0 if args.dist_only else args.beta
    return EvalConfig(
        scheme=WeighingScheme(Scheme(args.scheme), alpha=args.alpha), lam=args.lam, beta=beta,
        theta=args.theta, order=args.order, solver=args.solver, exact_fleet=args.fleet_equality,
        capacity_free=args.capacity_free, seed=args.seed, baseline=args.baseline,
    )


def _emit(text: str, out: str | None):
    if out:
        dataio.ensure_parent(out)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _distances(args):
    return dataio.load_distance_matrix(args.distances) if args.distances else None


def cmd_generate(args) -> int:
    try:
        before, after = (int(x) for x in args.fleet.split(","))
    except ValueError:
        raise UsageError(f"--fleet expects two integers 'before,after', got {args.fleet!r}") from None
    drift = None if args.drift_week == "none" else int(args.drift_week)
    try:
        cfg = SyntheticConfig(
            n_regular=args.n_regular, n_adhoc=args.n_adhoc, p_regular=args.p_regular, p_adhoc=args.p_adhoc,
            weeks=args.weeks, weekdays=args.weekdays, fleet_profile=(before, after), drift_week=drift,
            planner_noise=args.noise, seed=args.seed,
            post_drift_regular=min(args.post_drift_regular, args.n_regular), capacity=args.capacity,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds, dist, truth = generate_synthetic(cfg)
    dataio.ensure_parent(args.out)
    dataio.save_history(ds, args.out)
    if args.distances_out:
        dataio.ensure_parent(args.distances_out)
        dataio.save_distance_matrix(dist, args.distances_out)
    print(json.dumps({k: round(v, 6) for k, v in truth.report.items()}, sort_keys=True))
    return EXIT_OK


def cmd_learn(args) -> int:
    ds = dataio.load_history(args.history)
    scheme = WeighingScheme(Scheme(args.scheme), alpha=args.alpha)
    if args.order == 1:
        p = estimate_first_order(ds, scheme, args.lam)
        _emit(dataio.transition_matrix_csv(p, ds.names), args.out)
    else:
        t = estimate_second_order(ds, scheme, args.lam)
        if not args.out:
            raise UsageError("--order 2 writes a tensor file; give --out")
        dataio.ensure_parent(args.out)
        dataio.save_tensor(t, args.out, ds.names)
    return EXIT_OK


def cmd_solve(args) -> int:
    ds = dataio.load_history(args.history)
    target = len(ds) if args.target is None else args.target
    if not 1 <= target <= len(ds):
        raise UsageError(f"--target must lie in 1..{len(ds)}, got {target}")
    cfg = _config(args)
    dist = _distances(args)
    prob = build_problem(ds.prefix(target - 1), ds[target], cfg, dist, ds.names)
    report = solve(prob, cfg.solver, seed=cfg.seed, **cfg.solver_kwargs())
    if args.out:
        dataio.ensure_parent(args.out)
        dataio.save_routing(report.routing, args.out, ds.names)
    else:
        tours = [[ds.name_of(s) for s in t] for t in report.routing.tours]
        print(json.dumps({"tours": tours}, ensure_ascii=False))
    lines = [f"objective\t{report.objective:.12g}", f"optimal\t{str(report.optimal).lower()}"]
    if dist is not None:
        km = dist.aligned([ds.name_of(i) for i in range(max(ds.all_stops) + 1)])
        lines.append(f"km\t{routing_km(report.routing, km):.6f}")
    if args.timing:
        lines.append(f"seconds\t{report.wall_time:.6f}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = dataio.load_history(args.history)
    recs = incremental_evaluate(ds, _config(args), args.split, _distances(args), args.jobs, args.group_by)
    _emit(dataio.records_to_csv(recs, timing=args.timing), args.out)
    return EXIT_OK


def cmd_drift(args) -> int:
    ds = dataio.load_history(args.history)
    modes = ("drop", "rise") if args.mode == "both" else (args.mode,)
    recs = []
    for mode in modes:
        recs += drift_scenario(ds, mode, _config(args), _distances(args), args.drift_t, args.jobs)
    _emit(dataio.records_to_csv(recs, timing=args.timing), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    ds = dataio.load_history(args.history)
    dist = _distances(args)
    if args.baselines and dist is None:
        raise UsageError("--baselines needs --distances")
    rows = parameter_sweep(ds, args.axis, args.values, _config(args), args.split, dist, args.jobs,
                           with_baselines=args.baselines)
    _emit(format_sweep_table(rows, args.axis, timing=args.timing), args.out)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "learn": cmd_learn, "solve": cmd_solve, "evaluate": cmd_evaluate,
            "drift": cmd_drift, "sweep": cmd_sweep}


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_domains(args)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
