"""Transition-probability estimation from historical routings.

First-order matrices count weighted arc frequencies over daisy chains and
normalise them with Laplace smoothing; second-order tensors do the same for
consecutive arc pairs inside a tour.  Distances are turned into probabilities
with a softmax so that they can be mixed with the learned preferences.

Every matrix is indexed by position in ``stops`` (``stops[0]`` is the depot).
Self-transitions are never part of the normalisation support.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import DEPOT, HistoryDataset, daisy_chain


class Scheme(str, enum.Enum):
    UNIF = "unif"
    TIME = "time"
    TIME2 = "time2"
    SIMI = "simi"
    SIMI2 = "simi2"
    EXP = "exp"


@dataclass(frozen=True)
class WeighingScheme:
    """Per-instance prior used when summing adjacency matrices.

    ``exponent`` generalises the TIME/SIMI powers; it defaults to 1 for TIME
    and SIMI and to 2 for their squared variants.  ``alpha`` is only used by
    EXP.
    """

    kind: Scheme = Scheme.UNIF
    alpha: float = 0.7
    exponent: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Scheme(self.kind))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if self.exponent is None:
            power = 2.0 if self.kind in (Scheme.TIME2, Scheme.SIMI2) else 1.0
            object.__setattr__(self, "exponent", power)
        if self.exponent <= 0:
            raise ValueError(f"exponent must be positive, got {self.exponent}")

    @property
    def name(self) -> str:
        return self.kind.value


def jaccard(a: Iterable[int], b: Iterable[int]) -> float:
    a, b = set(a), set(b)
    union = a | b
    if not union:
        raise ValueError("Jaccard similarity is undefined for two empty sets")
    return len(a & b) / len(union)


def compute_weights(ds: HistoryDataset, current: Iterable[int], scheme: WeighingScheme) -> dict[int, float]:
    """Weight of every instance when predicting the next one (rank T = len(ds) + 1).

    >>> # EXP with alpha=0.7 and two past instances: w1 = 0.063, w2 = 0.21
    """
    current = frozenset(current) - {DEPOT}
    T = len(ds) + 1
    kind, a = scheme.kind, scheme.exponent
    if kind in (Scheme.SIMI, Scheme.SIMI2) and not current:
        raise ValueError("similarity weighing needs a non-empty current stop set")
    weights = {}
    for inst in ds:
        t = inst.timestamp
        if kind is Scheme.UNIF:
            w = 1.0
        elif kind in (Scheme.TIME, Scheme.TIME2):
            w = (t / T) ** a
        elif kind is Scheme.EXP:
            w = scheme.alpha * (1.0 - scheme.alpha) ** (T - t)
        else:
            w = jaccard(inst.stops, current) ** a
        weights[t] = w
    return weights


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic first-order matrix over ``stops``.

    ``flagged`` lists row positions that had no observations and no smoothing
    and were therefore set uniform.
    """

    probs: np.ndarray
    stops: tuple[int, ...]
    lam: float = 0.0
    flagged: tuple[int, ...] = ()

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] != len(self.stops):
            raise ValueError(f"matrix shape {p.shape} does not match {len(self.stops)} stops")
        if self.stops and self.stops[0] != DEPOT:
            raise ValueError("stops[0] must be the depot")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "stops", tuple(self.stops))

    @property
    def stop_index(self) -> dict[int, int]:
        return {s: i for i, s in enumerate(self.stops)}

    @property
    def mu(self) -> int:
        return len(self.stops)

    def prob(self, i: int, j: int) -> float:
        idx = self.stop_index
        return float(self.probs[idx[i], idx[j]])

    def extend(self, new_stops: Iterable[int]) -> "TransitionMatrix":
        """Add unseen stops with uniform probability, then renormalise old rows.

        New rows are uniform over the enlarged support; every old row gets the
        same uniform mass on each new column before being renormalised.
        """
        extra = sorted(set(new_stops) - set(self.stops))
        if not extra:
            return self
        mu = self.mu + len(extra)
        u = 1.0 / (mu - 1)
        p = np.full((mu, mu), u)
        p[: self.mu, : self.mu] = self.probs
        np.fill_diagonal(p, 0.0)
        p[: self.mu] /= p[: self.mu].sum(axis=1, keepdims=True)
        return TransitionMatrix(p, self.stops + tuple(extra), self.lam, self.flagged)

    def restrict(self, stops: Iterable[int]) -> "TransitionMatrix":
        """Condition on a subset of stops: keep those rows/columns and renormalise.

        Rows that lose all their mass become uniform and are flagged.
        """
        keep = [DEPOT] + sorted(set(stops) - {DEPOT})
        idx = self.stop_index
        missing = [s for s in keep if s not in idx]
        if missing:
            raise KeyError(f"stops {missing} are not in the matrix; extend it first")
        pos = [idx[s] for s in keep]
        sub = self.probs[np.ix_(pos, pos)]
        probs, flagged = _normalize_rows(sub, 0.0)
        return TransitionMatrix(probs, tuple(keep), self.lam, flagged)


@dataclass(frozen=True)
class SecondOrderTensor:
    """Row-stochastic tensor ``probs[i, j, k] = Pr(k | i, j)`` plus the depot-departure row."""

    probs: np.ndarray
    depot_row: np.ndarray
    stops: tuple[int, ...]
    lam: float = 0.0
    flagged: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        d = np.array(self.depot_row, dtype=float)
        mu = len(self.stops)
        if p.shape != (mu, mu, mu) or d.shape != (mu,):
            raise ValueError("tensor shape does not match the stop list")
        p.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "depot_row", d)
        object.__setattr__(self, "stops", tuple(self.stops))

    @property
    def stop_index(self) -> dict[int, int]:
        return {s: i for i, s in enumerate(self.stops)}

    @property
    def mu(self) -> int:
        return len(self.stops)

    def extend(self, new_stops: Iterable[int]) -> "SecondOrderTensor":
        extra = sorted(set(new_stops) - set(self.stops))
        if not extra:
            return self
        old, mu = self.mu, self.mu + len(extra)
        u = 1.0 / (mu - 1)
        p = np.full((mu, mu, mu), u)
        p[:old, :old, :old] = self.probs
        for j in range(mu):
            p[:, j, j] = 0.0
        p[:old, :old] /= p[:old, :old].sum(axis=2, keepdims=True)
        d = np.full(mu, u)
        d[:old] = self.depot_row
        d[0] = 0.0
        d /= d.sum()
        return SecondOrderTensor(p, d, self.stops + tuple(extra), self.lam, self.flagged)

    def restrict(self, stops: Iterable[int]) -> "SecondOrderTensor":
        keep = [DEPOT] + sorted(set(stops) - {DEPOT})
        idx = self.stop_index
        pos = [idx[s] for s in keep]
        sub = self.probs[np.ix_(pos, pos, pos)]
        probs, flagged = _normalize_slices(sub, 0.0)
        drow = _normalize_depot_row(self.depot_row[pos], 0.0)
        return SecondOrderTensor(probs, drow, tuple(keep), self.lam, flagged)


@dataclass(frozen=True)
class DistanceMatrix:
    """Non-negative distances (km) with a zero diagonal; ``names[0]`` is the depot."""

    dist: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {d.shape}")
        if len(self.names) != d.shape[0]:
            raise ValueError("one name per row is required")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("distances must be finite and non-negative")
        d = d.copy()
        np.fill_diagonal(d, 0.0)
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "names", tuple(self.names))

    def aligned(self, names: Sequence[str]) -> np.ndarray:
        """Distances re-ordered so that row ``i`` is the stop called ``names[i]``."""
        idx = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in idx]
        if missing:
            raise KeyError(f"no distances for stops {missing}")
        pos = [idx[n] for n in names]
        return self.dist[np.ix_(pos, pos)]


def _normalize_rows(f: np.ndarray, lam: float, support: np.ndarray | None = None
                    ) -> tuple[np.ndarray, tuple[int, ...]]:
    """Laplace-normalise each row over its support (off-diagonal by default)."""
    if support is None:
        support = ~np.eye(f.shape[0], dtype=bool)
    g = np.where(support, f + lam, 0.0)
    sums = g.sum(axis=1)
    empty = sums <= 0.0
    if np.any(empty):
        g[empty] = support[empty].astype(float)
        sums = g.sum(axis=1)
    return g / sums[:, None], tuple(int(i) for i in np.flatnonzero(empty))


def _normalize_depot_row(row: np.ndarray, lam: float) -> np.ndarray:
    support = np.ones((1, row.shape[0]), dtype=bool)
    support[0, 0] = False
    probs, _ = _normalize_rows(row[None, :], lam, support)
    return probs[0]


def _normalize_slices(f: np.ndarray, lam: float) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    mu = f.shape[0]
    support = np.ones((mu, mu, mu), dtype=bool)
    for j in range(mu):
        support[:, j, j] = False
    g = np.where(support, f + lam, 0.0)
    sums = g.sum(axis=2)
    empty = sums <= 0.0
    if np.any(empty):
        g[empty] = support[empty].astype(float)
        sums = g.sum(axis=2)
    flagged = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(empty)))
    return g / sums[:, :, None], flagged


def frequency_matrix(ds: HistoryDataset, weights: Mapping[int, float],
                     stops: Sequence[int] | None = None) -> np.ndarray:
    """Weighted sum of the daisy-chain adjacency matrices.

    Rows/columns follow ``stops`` (default: depot then the sorted stops of
    ``ds``).  Instances are accumulated in timestamp order so the result is
    bit-stable.
    """
    if stops is None:
        stops = (DEPOT,) + tuple(sorted(ds.all_stops))
    idx = {s: i for i, s in enumerate(stops)}
    f = np.zeros((len(stops), len(stops)))
    for inst in ds:
        w = weights[inst.timestamp]
        chain = daisy_chain(inst.routing)
        a = np.zeros_like(f)
        for i, j in zip(chain, chain[1:]):
            a[idx[i], idx[j]] = 1.0
        f += w * a
    return f


def laplace_normalize(f: np.ndarray, lam: float, stops: Sequence[int] | None = None) -> TransitionMatrix:
    """p_ij = (f_ij + lam) / sum_k (f_ik + lam), k over the off-diagonal support."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequencies must be non-negative")
    if stops is None:
        stops = tuple(range(f.shape[0]))
    probs, flagged = _normalize_rows(f, lam)
    return TransitionMatrix(probs, tuple(stops), lam, flagged)


def _check_nonempty(ds: HistoryDataset):
    if len(ds) == 0:
        raise ValueError("cannot estimate from an empty dataset")


def estimate_first_order(ds: HistoryDataset, scheme: WeighingScheme = WeighingScheme(),
                         lam: float = 1.0, current: Iterable[int] | None = None) -> TransitionMatrix:
    """Weighted, Laplace-smoothed first-order transition matrix over all stops of ``ds``.

    ``current`` is the stop set of the instance being predicted (needed by
    the similarity schemes); it defaults to all stops seen in ``ds``.
    """
    _check_nonempty(ds)
    stops = (DEPOT,) + tuple(sorted(ds.all_stops))
    weights = compute_weights(ds, ds.all_stops if current is None else current, scheme)
    return laplace_normalize(frequency_matrix(ds, weights, stops), lam, stops)


def second_order_frequencies(ds: HistoryDataset, weights: Mapping[int, float],
                             stops: Sequence[int]) -> np.ndarray:
    """Weighted counts of arc pairs (i->j, j->k) with j != depot."""
    idx = {s: i for i, s in enumerate(stops)}
    f = np.zeros((len(stops),) * 3)
    for inst in ds:
        w = weights[inst.timestamp]
        a = np.zeros_like(f)
        for tour in inst.routing.tours:
            seq = (DEPOT,) + tour + (DEPOT,)
            for i, j, k in zip(seq, seq[1:], seq[2:]):
                a[idx[i], idx[j], idx[k]] = 1.0
        f += w * a
    return f


def estimate_second_order(ds: HistoryDataset, scheme: WeighingScheme = WeighingScheme(),
                          lam: float = 1.0, current: Iterable[int] | None = None) -> SecondOrderTensor:
    """Second-order tensor; triples bridging two tours through the depot are not counted.

    The depot-departure row comes from the first-order depot frequencies.
    """
    _check_nonempty(ds)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    stops = (DEPOT,) + tuple(sorted(ds.all_stops))
    weights = compute_weights(ds, ds.all_stops if current is None else current, scheme)
    f3 = second_order_frequencies(ds, weights, stops)
    probs, flagged = _normalize_slices(f3, lam)
    f1 = frequency_matrix(ds, weights, stops)
    drow = _normalize_depot_row(f1[0], lam)
    return SecondOrderTensor(probs, drow, stops, lam, flagged)


def softmax_distance_matrix(dist: np.ndarray, theta: float = 1.0,
                            stops: Sequence[int] | None = None) -> TransitionMatrix:
    """Row-wise softmax of ``-theta * d`` over the off-diagonal support.

    Each row is shifted by its minimum off-diagonal distance first; the shift
    cancels in the normalisation.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    d = np.asarray(dist, dtype=float)
    mu = d.shape[0]
    off = ~np.eye(mu, dtype=bool)
    shifted = np.where(off, d, np.inf)
    shifted = shifted - shifted.min(axis=1, keepdims=True)
    e = np.where(off, np.exp(-theta * shifted), 0.0)
    probs = e / e.sum(axis=1, keepdims=True)
    return TransitionMatrix(probs, tuple(range(mu)) if stops is None else tuple(stops), 0.0)


def solve_theta_star(dist: np.ndarray, tol: float = 1e-10) -> float:
    """Scale at which the depot row's softmax normaliser sum_k exp(-theta d_0k) equals 1.

    The function is strictly decreasing from the support size at 0 towards
    the number of zero distances, so a positive root exists only when there
    are at least two support columns and none of them is at distance zero.
    """
    d0 = np.asarray(dist, dtype=float)[0, 1:]
    if d0.size < 2:
        raise ValueError("theta* needs at least two stops besides the depot")
    if np.any(d0 <= 0):
        raise ValueError("theta* does not exist when a stop sits at the depot (distance 0)")

    def g(theta: float) -> float:
        return float(np.exp(-theta * d0).sum()) - 1.0

    hi = 1.0 / d0.max()
    while g(hi) > 0:
        hi *= 2.0
    root = brentq(g, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(g(root)) > tol:
        raise ArithmeticError(f"theta* root finding stalled at g={g(root) + 1}")
    return root


def mix_matrices(p: TransitionMatrix, d: TransitionMatrix, beta: float) -> TransitionMatrix:
    """Convex combination beta * p + (1 - beta) * d."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if p.probs.shape != d.probs.shape or p.stops != d.stops:
        raise ValueError("matrices must share the same stops to be mixed")
    return TransitionMatrix(beta * p.probs + (1.0 - beta) * d.probs, p.stops, p.lam, p.flagged)


def mix_second_order(p: SecondOrderTensor, d: TransitionMatrix, beta: float) -> SecondOrderTensor:
    """Mix every (i, j) slice with the distance row of j, and the depot row with d's depot row."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if p.stops != d.stops:
        raise ValueError("tensor and matrix must share the same stops to be mixed")
    probs = beta * p.probs + (1.0 - beta) * d.probs[None, :, :]
    drow = beta * p.depot_row + (1.0 - beta) * d.probs[0]
    return SecondOrderTensor(probs, drow, p.stops, p.lam, p.flagged)


def weight_mass_recent(weights: Mapping[int, float], k: int) -> float:
    """Share of the total weight carried by the ``k`` most recent instances."""
    ts = sorted(weights)
    total = math.fsum(weights[t] for t in ts)
    return math.fsum(weights[t] for t in ts[-k:]) / total
