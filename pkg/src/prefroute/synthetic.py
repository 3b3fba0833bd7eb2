"""Synthetic planner histories with regular and ad hoc stops and an optional drift.

Stops lie on a plane around the depot.  Each regime (before and after the
drift) and weekday has a latent chain: the stops sorted by angle into one
sector per vehicle, visited in a random order inside each sector, with a
depot visit closing every sector.  After the drift the old stop order is
cut into sectors for the new fleet and part of them are reshuffled.  The planner follows that chain, picking
the next stop by argmax of a latent preference matrix restricted to the
unvisited stops; with probability ``planner_noise`` it instead samples the
next stop from that restricted row.  Because the in-sector order is random the preferences
are far from distance-optimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DEPOT, HistoryDataset, HistoryInstance, Routing
from .learn import DistanceMatrix, TransitionMatrix

MAX_RESAMPLE = 50


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator knobs; the defaults echo a 9-vehicle, 35-stop operation that
    shrinks to 6 vehicles and about 25 stops after the drift."""

    n_regular: int = 30
    n_adhoc: int = 40
    p_regular: float = 0.95
    p_adhoc: float = 0.16
    weeks: int = 40
    weekdays: int = 5
    fleet_profile: tuple[int, int] = (9, 6)
    drift_week: int | None = 20
    planner_noise: float = 0.1
    seed: int = 0
    post_drift_regular: int | None = 20
    demand_range: tuple[int, int] = (1, 3)
    capacity: int | None = None
    capacity_slack: float = 1.6
    radius_km: float = 40.0
    drift_reshuffle: float = 0.5
    kappa: float = 2.0

    def __post_init__(self):
        for name in ("p_regular", "p_adhoc", "planner_noise", "drift_reshuffle"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_regular < 0 or self.n_adhoc < 0 or self.n_regular + self.n_adhoc < 1:
            raise ValueError("need at least one regular or ad hoc stop")
        if self.weeks < 1 or self.weekdays < 1:
            raise ValueError("weeks and weekdays must be positive")
        if len(self.fleet_profile) != 2 or min(self.fleet_profile) < 1:
            raise ValueError("fleet_profile must be two positive vehicle counts (before, after)")
        if self.drift_week is not None and not 1 <= self.drift_week < self.weeks:
            raise ValueError(f"drift_week must lie in 1..{self.weeks - 1}, got {self.drift_week}")
        if (self.drift_week is not None and self.post_drift_regular is not None
                and not 0 <= self.post_drift_regular <= self.n_regular):
            raise ValueError("post_drift_regular must lie in 0..n_regular")
        lo, hi = self.demand_range
        if not 1 <= lo <= hi:
            raise ValueError("demand_range must satisfy 1 <= low <= high")
        if self.capacity is not None and self.capacity < hi:
            raise ValueError("capacity must fit the largest single demand")
        if self.p_regular == 0 and self.p_adhoc == 0:
            raise ValueError("all inclusion probabilities are zero, so every instance would be empty")

    @property
    def n_stops(self) -> int:
        return self.n_regular + self.n_adhoc


@dataclass(frozen=True)
class Regime:
    """Latent behaviour of one (regime, weekday) pair."""

    chain: tuple[int, ...]            # latent daisy chain over every stop, depot markers included
    preference: TransitionMatrix      # row-stochastic latent matrix over all stops
    regular: frozenset[int]
    fleet: int


@dataclass(frozen=True)
class GroundTruth:
    before: dict[int, Regime]
    after: dict[int, Regime] | None
    drift_t: int | None
    coords: np.ndarray
    report: dict[str, float] = field(default_factory=dict)


def _latent_chain(rng: np.random.Generator, angles: np.ndarray, stops: list[int], fleet: int) -> tuple[int, ...]:
    rot = rng.uniform(0, 2 * math.pi)
    by_angle = sorted(stops, key=lambda s: ((angles[s] - rot) % (2 * math.pi), s))
    sectors = np.array_split(np.array(by_angle, dtype=int), fleet)
    chain = [DEPOT]
    for sec in sectors:
        if len(sec):
            chain.extend(int(s) for s in rng.permutation(sec))
            chain.append(DEPOT)
    return tuple(chain)


def _drifted_chain(rng: np.random.Generator, chain: tuple[int, ...], fleet: int,
                   reshuffle: float) -> tuple[int, ...]:
    """Re-split the old stop order into ``fleet`` sectors from a new starting
    point and re-randomise the order inside a ``reshuffle`` share of them."""
    order = [s for s in chain if s != DEPOT]
    start = int(rng.integers(len(order)))
    order = order[start:] + order[:start]
    out = [DEPOT]
    for sec in np.array_split(np.array(order, dtype=int), fleet):
        if not len(sec):
            continue
        if rng.random() < reshuffle:
            sec = rng.permutation(sec)
        out.extend(int(s) for s in sec)
        out.append(DEPOT)
    return tuple(out)


def _preference(chain: tuple[int, ...], n_all: int, kappa: float) -> TransitionMatrix:
    """Mass decays with the forward distance along the cyclic chain.

    The depot occurs several times; from the depot the gap is measured from
    its nearest marker, with a small offset per sector so that the argmax is
    unique.
    """
    L = len(chain) - 1                      # the closing depot equals the opening one
    cyc = chain[:-1]
    pos: dict[int, list[int]] = {}
    for k, s in enumerate(cyc):
        pos.setdefault(s, []).append(k)
    mu = n_all + 1
    score = np.full((mu, mu), -np.inf)
    n_markers = len(pos[DEPOT])
    for i, pi in pos.items():
        for j, pj in pos.items():
            if i == j:
                continue
            gaps = [((b - a) % L, r) for r, a in enumerate(pi) for b in pj]
            gap, r = min(gaps)
            offset = r / (2 * n_markers) if i == DEPOT else 0.0
            score[i, j] = -kappa * (gap + offset)
    e = np.exp(score - score.max(axis=1, keepdims=True))
    return TransitionMatrix(e / e.sum(axis=1, keepdims=True), tuple(range(mu)))


def _plan(rng: np.random.Generator, regime: Regime, stops: frozenset[int], demands: dict[int, int],
          capacity: int, fleet: int, noise: float) -> Routing | None:
    """Follow the latent preferences; None when the fleet runs out of capacity."""
    p = regime.preference.probs
    unvisited = set(stops)
    tours: list[list[int]] = []
    while unvisited:
        if len(tours) == fleet:
            return None
        tour: list[int] = []
        load = 0
        cur = DEPOT
        while True:
            fits = sorted(s for s in unvisited if load + demands[s] <= capacity)
            last_vehicle = len(tours) + 1 == fleet
            options = list(fits)
            if tour and (not last_vehicle or not unvisited):
                options.append(DEPOT)
            if not options:
                if unvisited and last_vehicle:
                    return None
                break
            if noise > 0 and rng.random() < noise:
                w = p[cur, options]
                nxt = options[int(rng.choice(len(options), p=w / w.sum()))]
            else:
                nxt = max(options, key=lambda j: (p[cur, j], -j))
            if nxt == DEPOT:
                break
            tour.append(nxt)
            unvisited.discard(nxt)
            load += demands[nxt]
            cur = nxt
        tours.append(tour)
    return Routing(tours)


def generate_synthetic(cfg: SyntheticConfig) -> tuple[HistoryDataset, DistanceMatrix, GroundTruth]:
    """Deterministic under ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    n_all = cfg.n_stops
    coords = np.zeros((n_all + 1, 2))
    radius = cfg.radius_km * np.sqrt(rng.uniform(0.05, 1.0, n_all))
    theta = rng.uniform(0, 2 * math.pi, n_all)
    coords[1:, 0] = radius * np.cos(theta)
    coords[1:, 1] = radius * np.sin(theta)
    angles = np.concatenate([[0.0], theta])
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.round(np.sqrt((diff ** 2).sum(axis=2)), 3)
    names = tuple(str(i) for i in range(n_all + 1))
    distances = DistanceMatrix(dist, names)

    regular = list(range(1, cfg.n_regular + 1))
    adhoc = list(range(cfg.n_regular + 1, n_all + 1))
    all_stops = regular + adhoc

    def regime(chain: tuple[int, ...], reg, fleet: int) -> Regime:
        return Regime(chain, _preference(chain, n_all, cfg.kappa), frozenset(reg), fleet)

    before = {wd: regime(_latent_chain(rng, angles, all_stops, cfg.fleet_profile[0]), regular, cfg.fleet_profile[0])
              for wd in range(cfg.weekdays)}
    after = None
    if cfg.drift_week is not None:
        keep = cfg.n_regular if cfg.post_drift_regular is None else cfg.post_drift_regular
        post_regular = sorted(rng.choice(regular, size=keep, replace=False).tolist()) if keep else []
        fleet = cfg.fleet_profile[1]
        after = {wd: regime(_drifted_chain(rng, before[wd].chain, fleet, cfg.drift_reshuffle), post_regular, fleet)
                 for wd in range(cfg.weekdays)}

    lo, hi = cfg.demand_range
    mean_demand = (lo + hi) / 2

    def capacity_for(fleet: int, reg: frozenset[int]) -> int:
        if cfg.capacity is not None:
            return cfg.capacity
        expected = len(reg) * cfg.p_regular + cfg.n_adhoc * cfg.p_adhoc
        return max(hi, math.ceil(cfg.capacity_slack * expected * mean_demand / fleet))

    instances = []
    drift_t = None
    t = 0
    for week in range(1, cfg.weeks + 1):
        post = cfg.drift_week is not None and week >= cfg.drift_week
        for wd in range(cfg.weekdays):
            t += 1
            if post and drift_t is None:
                drift_t = t
            regime = (after if post else before)[wd]
            reg_pool = sorted(regime.regular)
            Q = capacity_for(regime.fleet, regime.regular)
            for _ in range(MAX_RESAMPLE):
                stops = frozenset(
                    [s for s in reg_pool if rng.random() < cfg.p_regular]
                    + [s for s in adhoc if rng.random() < cfg.p_adhoc]
                )
                if not stops:
                    continue
                demands = {s: int(rng.integers(lo, hi + 1)) for s in sorted(stops)}
                routing = _plan(rng, regime, stops, demands, Q, regime.fleet, cfg.planner_noise)
                if routing is not None:
                    break
            else:
                raise ValueError(f"could not draw a feasible non-empty instance for t={t}; "
                                 "raise the capacity or the inclusion probabilities")
            # the recorded fleet is the number of vehicles that actually drove
            instances.append(HistoryInstance(t, stops, len(routing), demands, Q, routing, wd))

    ds = HistoryDataset(tuple(instances), names, drift_t)
    truth = GroundTruth(before, after, drift_t, coords, _self_report(ds))
    return ds, distances, truth


def _self_report(ds: HistoryDataset) -> dict[str, float]:
    def stats(insts, tag):
        if not insts:
            return {}
        return {
            f"{tag}_instances": float(len(insts)),
            f"{tag}_mean_stops": float(np.mean([len(i.stops) for i in insts])),
            f"{tag}_mean_fleet": float(np.mean([i.fleet for i in insts])),
            f"{tag}_mean_tours": float(np.mean([len(i.routing) for i in insts])),
        }

    d = ds.drift_t
    pre = [i for i in ds if d is None or i.timestamp < d]
    post = [i for i in ds if d is not None and i.timestamp >= d]
    report = {"instances": float(len(ds)), "unique_stops": float(len(ds.all_stops))}
    report.update(stats(pre, "pre"))
    report.update(stats(post, "post"))
    return report
