"""Exhaustive enumeration of all routings, used as ground truth for the solvers."""

from __future__ import annotations

import itertools
import math
import time

from ..core import daisy_chain
from .problem import CvrpProblem, InfeasibleError, SolveReport

MAX_STOPS = {1: 8, 2: 6}
TIE_TOL = 1e-9


def _compositions(n: int, parts: int):
    """Cut points splitting a sequence of n items into ``parts`` non-empty pieces."""
    for cuts in itertools.combinations(range(1, n), parts - 1):
        yield (0,) + cuts + (n,)


def brute_force_oracle(prob: CvrpProblem, order: int | None = None) -> SolveReport:
    """Enumerate every feasible routing; return the optimum.

    Ties within 1e-9 go to the lexicographically smallest daisy chain.
    """
    order = prob.order if order is None else order
    if order != prob.order:
        raise ValueError(f"problem carries order-{prob.order} costs, not order {order}")
    n = prob.n
    if n > MAX_STOPS[order]:
        raise ValueError(f"brute force is limited to {MAX_STOPS[order]} stops for order {order}, got {n}")
    start = time.perf_counter()
    q = [0] + [prob.demands[s] for s in prob.stops]
    kmin = prob.fleet if prob.exact_fleet else 1
    kmax = min(prob.fleet, n)
    best = None
    count = 0
    for perm in itertools.permutations(range(1, n + 1)):
        for k in range(kmin, kmax + 1):
            for cuts in _compositions(n, k):
                tours = [perm[a:b] for a, b in zip(cuts, cuts[1:])]
                firsts = [t[0] for t in tours]
                if any(x > y for x, y in zip(firsts, firsts[1:])):
                    continue  # same routing is enumerated with tours in canonical order
                if any(sum(q[s] for s in t) > prob.capacity for t in tours):
                    continue
                count += 1
                obj = math.fsum(prob.tour_cost(t) for t in tours)
                routing = prob.to_routing(tours)
                chain = daisy_chain(routing)
                if (best is None or obj < best[0] - TIE_TOL
                        or (obj <= best[0] + TIE_TOL and chain < best[1])):
                    best = (obj, chain, routing)
    if best is None:
        raise InfeasibleError("no routing satisfies the fleet and capacity constraints")
    return SolveReport(best[2], best[0], True, nodes_explored=count,
                       wall_time=time.perf_counter() - start, method="brute-force")
