"""Prediction quality metrics and the incremental train-and-test harness."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import DEPOT, HistoryDataset, HistoryInstance, Routing
from .learn import (
    DistanceMatrix,
    TransitionMatrix,
    WeighingScheme,
    estimate_first_order,
    estimate_second_order,
    mix_matrices,
    mix_second_order,
    softmax_distance_matrix,
    solve_theta_star,
)
from .solve import (
    DEFAULT_EPSILON,
    FORBIDDEN,
    CvrpProblem,
    SolveReport,
    first_order_problem,
    second_order_problem,
    solve,
)

DIST = "dist"


def _check_same_stops(predicted: Routing, actual: Routing):
    if predicted.stop_set != actual.stop_set:
        diff = sorted(predicted.stop_set ^ actual.stop_set)
        raise ValueError(f"routings cover different stops; mismatch on {diff}")
    if not actual.stop_set:
        raise ValueError("routings without stops cannot be compared")


def route_difference(predicted: Routing, actual: Routing) -> float:
    """Percentage of stops served by a different route than in ``actual``.

    Routes are matched greedily without replacement, smallest symmetric
    difference first; unmatched actual routes count all of their stops.
    """
    _check_same_stops(predicted, actual)
    pred = [frozenset(t) for t in predicted.tours]
    act = [frozenset(t) for t in actual.tours]
    pairs = sorted((len(a ^ p), ai, pi) for ai, a in enumerate(act) for pi, p in enumerate(pred))
    used_a: set[int] = set()
    used_p: set[int] = set()
    wrong = 0
    for _, ai, pi in pairs:
        if ai in used_a or pi in used_p:
            continue
        used_a.add(ai)
        used_p.add(pi)
        wrong += len(act[ai] - pred[pi])
    wrong += sum(len(a) for ai, a in enumerate(act) if ai not in used_a)
    return 100.0 * wrong / len(actual.stop_set)


def arc_difference(predicted: Routing, actual: Routing) -> float:
    """Percentage of directed arcs of ``actual`` that ``predicted`` does not use."""
    _check_same_stops(predicted, actual)
    arcs = actual.arcs()
    return 100.0 * len(arcs - predicted.arcs()) / len(arcs)


def routing_km(routing: Routing, dist: np.ndarray) -> float:
    """Total length of ``routing`` under a distance matrix indexed by stop id."""
    return math.fsum(float(dist[i, j]) for i, j in _arc_list(routing))


def _arc_list(routing: Routing):
    for t in routing.tours:
        seq = (DEPOT, *t, DEPOT)
        yield from zip(seq, seq[1:])


@dataclass(frozen=True)
class EvalConfig:
    """Everything that determines a prediction besides the data.

    ``theta`` is a positive scale or ``"auto"`` for the depot-normalising
    scale of each instance.  ``baseline="dist"`` ignores the history and
    minimises kilometres directly.
    """

    scheme: WeighingScheme = field(default_factory=WeighingScheme)
    lam: float = 1.0
    beta: float = 1.0
    theta: float | str = 1.0
    order: int = 1
    solver: str = "auto"
    exact_fleet: bool = False
    capacity_free: bool = False
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    baseline: str | None = None
    node_limit: int = 5_000_000
    time_limit: float | None = 120.0
    heuristic_iterations: int = 30

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if self.theta != "auto" and not (isinstance(self.theta, (int, float)) and self.theta > 0):
            raise ValueError(f"theta must be positive or 'auto', got {self.theta!r}")
        if self.solver not in ("auto", "exact", "heuristic"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.baseline not in (None, DIST):
            raise ValueError(f"unknown baseline {self.baseline!r}")

    @property
    def label(self) -> str:
        return DIST if self.baseline == DIST else self.scheme.name

    def solver_kwargs(self) -> dict:
        if self.solver == "heuristic":
            return {"iterations": self.heuristic_iterations}
        if self.solver == "exact":
            return {"node_limit": self.node_limit, "time_limit": self.time_limit}
        return {}


@dataclass(frozen=True)
class EvalRecord:
    timestamp: int
    scheme: str
    order: int
    lam: float
    beta: float
    alpha: float
    rd_pct: float
    ad_pct: float
    predicted_km: float
    actual_km: float
    solve_s: float
    group: int | None = None
    mode: str | None = None
    drift_index: int | None = None

    def __post_init__(self):
        for name in ("rd_pct", "ad_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name}={v} outside [0, 100]")
        for name in ("predicted_km", "actual_km"):
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name}={v} is negative")


def _instance_distances(distances: DistanceMatrix, names: Sequence[str], nodes: Sequence[int]) -> np.ndarray:
    # unnamed datasets use the stop ids themselves as names
    return distances.aligned([names[s] if names else str(s) for s in nodes])


def distance_probabilities(distances: DistanceMatrix, names: Sequence[str], nodes: Sequence[int],
                           theta: float | str) -> TransitionMatrix:
    """Softmax distance matrix over ``nodes`` (depot first)."""
    d = _instance_distances(distances, names, nodes)
    th = solve_theta_star(d) if theta == "auto" else float(theta)
    return softmax_distance_matrix(d, th, tuple(nodes))


def build_problem(train: HistoryDataset, inst: HistoryInstance, cfg: EvalConfig,
                  distances: DistanceMatrix | None = None, names: Sequence[str] = ()) -> CvrpProblem:
    """The CVRP whose optimum is the predicted routing for ``inst``."""
    if cfg.capacity_free:
        inst = inst.without_demands()
    stops = tuple(sorted(inst.stops))
    nodes = (DEPOT,) + stops
    names = names or train.names
    args = (stops, inst.fleet, inst.capacity, inst.demands)
    if cfg.baseline == DIST:
        if distances is None:
            raise ValueError("the distance baseline needs a distance matrix")
        km = np.array(_instance_distances(distances, names, nodes))
        np.fill_diagonal(km, FORBIDDEN)
        if cfg.order == 2:
            raise ValueError("the distance baseline is first order only")
        return CvrpProblem(*args, costs=km, exact_fleet=cfg.exact_fleet, capacity_free=cfg.capacity_free)

    d = None
    if cfg.beta < 1.0:
        if distances is None:
            raise ValueError("beta < 1 mixes in distances, so a distance matrix is required")
        d = distance_probabilities(distances, names, nodes, cfg.theta)
    if cfg.beta == 0.0:
        if cfg.order == 2:
            raise ValueError("beta = 0 has no second-order preference to use; run with order 1")
        return first_order_problem(*args, d, cfg.epsilon, cfg.exact_fleet, cfg.capacity_free)

    if len(train) == 0:
        raise ValueError("no training instances precede the instance to predict")
    if cfg.order == 1:
        p = estimate_first_order(train, cfg.scheme, cfg.lam, current=inst.stops).extend(stops)
        if d is not None:
            p = mix_matrices(p.restrict(stops), d, cfg.beta)
        return first_order_problem(*args, p, cfg.epsilon, cfg.exact_fleet, cfg.capacity_free)
    t = estimate_second_order(train, cfg.scheme, cfg.lam, current=inst.stops).extend(stops)
    if d is not None:
        t = mix_second_order(t.restrict(stops), d, cfg.beta)
    return second_order_problem(*args, t, cfg.epsilon, cfg.exact_fleet, cfg.capacity_free)


def predict_routing(train: HistoryDataset, inst: HistoryInstance, cfg: EvalConfig,
                    distances: DistanceMatrix | None = None, names: Sequence[str] = ()) -> SolveReport:
    prob = build_problem(train, inst, cfg, distances, names)
    return solve(prob, cfg.solver, seed=cfg.seed, **cfg.solver_kwargs())


def _km_matrix(ds: HistoryDataset, distances: DistanceMatrix | None) -> np.ndarray | None:
    if distances is None:
        return None
    ids = range(max(ds.all_stops, default=0) + 1)
    return distances.aligned([ds.name_of(i) for i in ids])


def evaluate_step(ds: HistoryDataset, sigma: int, cfg: EvalConfig,
                  distances: DistanceMatrix | None = None) -> EvalRecord:
    """Train on t < sigma, predict instance sigma and score it."""
    inst = ds[sigma]
    train = ds.prefix(sigma - 1)
    report = predict_routing(train, inst, cfg, distances, ds.names)
    km = _km_matrix(ds, distances)
    pred_km = routing_km(report.routing, km) if km is not None else math.nan
    act_km = routing_km(inst.routing, km) if km is not None else math.nan
    return EvalRecord(
        timestamp=sigma, scheme=cfg.label, order=cfg.order, lam=cfg.lam, beta=cfg.beta,
        alpha=cfg.scheme.alpha, rd_pct=route_difference(report.routing, inst.routing),
        ad_pct=arc_difference(report.routing, inst.routing), predicted_km=pred_km,
        actual_km=act_km, solve_s=report.wall_time,
    )


def _step_job(args) -> EvalRecord:
    return evaluate_step(*args)


def initial_training_size(h: int, split: float = 0.75) -> int:
    if not 0.0 < split < 1.0:
        raise ValueError(f"split must lie strictly inside (0, 1), got {split}")
    return math.floor(split * h)


def _run_steps(ds: HistoryDataset, sigmas: Sequence[int], cfg: EvalConfig,
               distances: DistanceMatrix | None, jobs: int) -> list[EvalRecord]:
    tasks = [(ds, s, cfg, distances) for s in sigmas]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_step_job, tasks))
    return [_step_job(t) for t in tasks]


def incremental_evaluate(ds: HistoryDataset, cfg: EvalConfig = EvalConfig(), split: float = 0.75,
                         distances: DistanceMatrix | None = None, jobs: int = 1,
                         group_by: str | None = None) -> list[EvalRecord]:
    """Train on every instance before sigma, predict sigma, for sigma = eta+1..|H|.

    With ``group_by="weekday"`` each weekday is evaluated on its own history
    and records carry the original timestamps, merged in time order.
    """
    if group_by is not None:
        if group_by != "weekday":
            raise ValueError(f"can only group by weekday, got {group_by!r}")
        out: list[EvalRecord] = []
        for wd, sub in ds.group_by_weekday().items():
            original = [inst.timestamp for inst in ds if inst.weekday == wd]
            for rec in incremental_evaluate(sub, cfg, split, distances, jobs):
                out.append(replace(rec, timestamp=original[rec.timestamp - 1], group=wd))
        return sorted(out, key=lambda r: r.timestamp)
    h = len(ds)
    if h < 2:
        raise ValueError(f"incremental evaluation needs at least 2 instances, got {h}")
    eta = initial_training_size(h, split)
    if eta < 1:
        raise ValueError(f"split {split} leaves no initial training instance for {h} instances")
    if eta >= h:
        raise ValueError(f"split {split} leaves no test instance for {h} instances")
    return _run_steps(ds, range(eta + 1, h + 1), cfg, distances, jobs)


DRIFT_BEFORE = 3
DRIFT_AFTER = 10


def drift_scenario(ds: HistoryDataset, mode: str = "drop", cfg: EvalConfig = EvalConfig(),
                   distances: DistanceMatrix | None = None, drift_t: int | None = None,
                   jobs: int = 1) -> list[EvalRecord]:
    """Records for the 3 instances before and 10 after a drift, indexed -3..9.

    Index 0 is the first instance after the drift.  ``rise`` reverses the
    time ranking first, so the drift is met from the other side.
    """
    if mode not in ("drop", "rise"):
        raise ValueError(f"mode must be drop or rise, got {mode!r}")
    if drift_t is not None and not 1 <= drift_t <= len(ds):
        raise ValueError(f"drift timestamp {drift_t} outside 1..{len(ds)}")
    if drift_t is not None:
        ds = HistoryDataset(ds.instances, ds.names, drift_t)
    if mode == "rise":
        ds = ds.reversed()
    d = ds.drift_t
    if d is None:
        raise ValueError("the dataset has no marked drift timestamp")
    first, last = d - DRIFT_BEFORE, d + DRIFT_AFTER - 1
    if first < 2 or last > len(ds):
        raise ValueError(
            f"need at least {DRIFT_BEFORE} instances plus one for training before the drift and"
            f" {DRIFT_AFTER} after it; the drift sits at t={d} of {len(ds)}"
        )
    trimmed = ds.prefix(last)
    records = _run_steps(trimmed, range(first, last + 1), cfg, distances, jobs)
    return [replace(r, mode=mode, drift_index=r.timestamp - d) for r in records]


SWEEP_AXES = ("lambda", "alpha", "beta")


@dataclass(frozen=True)
class SweepRow:
    value: float | str
    rd_pct: float
    ad_pct: float
    km: float
    seconds: float


def summarize(records: Sequence[EvalRecord], value: float | str) -> SweepRow:
    if not records:
        raise ValueError("no records to summarise")

    def mean(xs):
        return math.fsum(xs) / len(xs)

    return SweepRow(value, mean([r.rd_pct for r in records]), mean([r.ad_pct for r in records]),
                    mean([r.predicted_km for r in records]), mean([r.solve_s for r in records]))


def _with_axis(cfg: EvalConfig, axis: str, value: float) -> EvalConfig:
    if axis == "lambda":
        return replace(cfg, lam=value)
    if axis == "beta":
        return replace(cfg, beta=value)
    if axis == "alpha":
        return replace(cfg, scheme=replace(cfg.scheme, alpha=value))
    raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def parameter_sweep(ds: HistoryDataset, axis: str, values: Sequence[float], cfg: EvalConfig = EvalConfig(),
                    split: float = 0.75, distances: DistanceMatrix | None = None, jobs: int = 1,
                    with_baselines: bool = False) -> list[SweepRow]:
    """Mean RD, AD, km and solve time of an incremental run per parameter value.

    ``with_baselines`` adds a leading distance-only row and a trailing row for
    the actual routings (zero differences, actual kilometres).
    """
    if not values:
        raise ValueError("the sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    configs = [_with_axis(cfg, axis, float(v)) for v in values]
    rows = []
    last: list[EvalRecord] = []
    if with_baselines:
        base = replace(cfg, baseline=DIST, order=1)
        last = incremental_evaluate(ds, base, split, distances, jobs)
        rows.append(summarize(last, DIST))
    for v, c in zip(values, configs):
        last = incremental_evaluate(ds, c, split, distances, jobs)
        rows.append(summarize(last, float(v)))
    if with_baselines:
        km = [r.actual_km for r in last]
        rows.append(SweepRow("actual", 0.0, 0.0, math.fsum(km) / len(km), math.nan))
    return rows


def _fmt(x: float, digits: int = 2) -> str:
    return "-" if math.isnan(x) else f"{x:.{digits}f}"


def format_sweep_table(rows: Sequence[SweepRow], axis: str, timing: bool = True, sep: str = "\t") -> str:
    """One column per value and one row per measure (RD, AD, km, time)."""
    def head(v):
        return f"({v.upper()})" if v in (DIST, "actual") else f"{v:g}"

    lines = [sep.join([axis] + [head(r.value) for r in rows])]
    lines.append(sep.join(["RD"] + [_fmt(r.rd_pct) for r in rows]))
    lines.append(sep.join(["AD"] + [_fmt(r.ad_pct) for r in rows]))
    lines.append(sep.join(["Avg Total Dist (km)"] + [_fmt(r.km) for r in rows]))
    secs = [_fmt(r.seconds, 4) if timing else "-" for r in rows]
    lines.append(sep.join(["Avg Time (s)"] + secs))
    return "\n".join(lines) + "\n"
