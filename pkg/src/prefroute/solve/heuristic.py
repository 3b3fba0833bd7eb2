"""Regret insertion followed by iterated local search.

Moves: relocate, swap, 2-opt inside a tour and tail exchange between tours.
Tours are re-costed from scratch after each tentative move, which keeps one
code path for first- and second-order costs; instances handled here are a
few dozen stops at most.
"""

from __future__ import annotations

import math
import random
import time

from .problem import CvrpProblem, InfeasibleError, SolveReport

IMPROVE_EPS = 1e-12


class _Costs:
    def __init__(self, prob: CvrpProblem):
        self.order = prob.order
        if self.order == 1:
            self.c = prob.costs.tolist()
        else:
            self.d = prob.depot_costs.tolist()
            self.t = prob.tensor.tolist()

    def tour(self, tour) -> float:
        if not tour:
            return 0.0
        if self.order == 1:
            c = self.c
            total = c[0][tour[0]]
            prev = tour[0]
            for s in tour[1:]:
                total += c[prev][s]
                prev = s
            return total + c[prev][0]
        t = self.t
        total = self.d[tour[0]]
        i, j = 0, tour[0]
        for k in tour[1:]:
            total += t[i][j][k]
            i, j = j, k
        return total + t[i][j][0]


class _State:
    def __init__(self, prob: CvrpProblem, costs: _Costs):
        self.prob = prob
        self.costs = costs
        self.q = [0] + [prob.demands[s] for s in prob.stops]
        self.Q = prob.capacity
        self.m = prob.fleet
        self.exact = prob.exact_fleet
        self.routes: list[list[int]] = []
        self.route_cost: list[float] = []

    def load(self, tour) -> int:
        q = self.q
        return sum(q[s] for s in tour)

    def total(self) -> float:
        return math.fsum(self.route_cost)

    def set_routes(self, routes):
        self.routes = [list(r) for r in routes if r or self.exact]
        self.route_cost = [self.costs.tour(r) for r in self.routes]

    def snapshot(self):
        return [list(r) for r in self.routes]


def _regret_insertion(st: _State, rng: random.Random) -> bool:
    n = st.prob.n
    routes: list[list[int]] = [[] for _ in range(st.m)] if st.exact else []
    loads = [0] * len(routes)
    unrouted = list(range(1, n + 1))
    rng.shuffle(unrouted)
    tour_cost = st.costs.tour
    costs_now = [0.0] * len(routes)
    while unrouted:
        best_pick = None
        for s in unrouted:
            options = []
            candidates = list(range(len(routes)))
            if not st.exact and len(routes) < st.m:
                candidates.append(-1)
            for r in candidates:
                tour = routes[r] if r >= 0 else []
                if (loads[r] if r >= 0 else 0) + st.q[s] > st.Q:
                    continue
                base = costs_now[r] if r >= 0 else 0.0
                best_pos = None
                for pos in range(len(tour) + 1):
                    delta = tour_cost(tour[:pos] + [s] + tour[pos:]) - base
                    if best_pos is None or delta < best_pos[0]:
                        best_pos = (delta, r, pos)
                options.append(best_pos)
            if not options:
                return False
            options.sort(key=lambda o: o[0])
            regret = options[1][0] - options[0][0] if len(options) > 1 else math.inf
            key = (regret, -options[0][0])
            if best_pick is None or key > best_pick[0]:
                best_pick = (key, s, options[0])
        _, s, (delta, r, pos) = best_pick
        if r < 0:
            routes.append([])
            loads.append(0)
            costs_now.append(0.0)
            r = len(routes) - 1
        routes[r].insert(pos, s)
        loads[r] += st.q[s]
        costs_now[r] = tour_cost(routes[r])
        unrouted.remove(s)
    st.set_routes(routes)
    return _fill_empty_routes(st)


def _first_fit(st: _State) -> bool:
    """Capacity-first fallback when insertion paints itself into a corner."""
    n = st.prob.n
    bins: list[list[int]] = [[] for _ in range(st.m)]
    loads = [0] * st.m
    for s in sorted(range(1, n + 1), key=lambda s: (-st.q[s], s)):
        for b in range(st.m):
            if loads[b] + st.q[s] <= st.Q:
                bins[b].append(s)
                loads[b] += st.q[s]
                break
        else:
            return False
    st.set_routes(bins)
    return _fill_empty_routes(st)


def _fill_empty_routes(st: _State) -> bool:
    """In exact-fleet mode move single stops into empty routes."""
    if not st.exact:
        return True
    for r, tour in enumerate(st.routes):
        if tour:
            continue
        donor = max((i for i, t in enumerate(st.routes) if len(t) > 1), key=lambda i: len(st.routes[i]),
                    default=None)
        if donor is None:
            return False
        s = st.routes[donor].pop()
        st.routes[r] = [s]
        st.route_cost[donor] = st.costs.tour(st.routes[donor])
        st.route_cost[r] = st.costs.tour(st.routes[r])
    return True


def _try_pair(st: _State, a: int, b: int, new_a, new_b) -> bool:
    """Accept replacing routes a and b if feasible and strictly cheaper."""
    if st.exact and (not new_a or not new_b):
        return False
    if st.load(new_a) > st.Q or st.load(new_b) > st.Q:
        return False
    ca, cb = st.costs.tour(new_a), st.costs.tour(new_b)
    if ca + cb < st.route_cost[a] + st.route_cost[b] - IMPROVE_EPS:
        st.routes[a], st.routes[b] = new_a, new_b
        st.route_cost[a], st.route_cost[b] = ca, cb
        return True
    return False


def _try_single(st: _State, a: int, new_a) -> bool:
    if st.exact and not new_a:
        return False
    ca = st.costs.tour(new_a)
    if ca < st.route_cost[a] - IMPROVE_EPS:
        st.routes[a] = new_a
        st.route_cost[a] = ca
        return True
    return False


def _relocate(st: _State) -> bool:
    can_open = not st.exact and len(st.routes) < st.m
    for a in range(len(st.routes)):
        ra = st.routes[a]
        for i in range(len(ra)):
            s = ra[i]
            rest = ra[:i] + ra[i + 1:]
            for pos in range(len(rest) + 1):
                if pos != i and _try_single(st, a, rest[:pos] + [s] + rest[pos:]):
                    return True
            for b in range(len(st.routes)):
                if b == a:
                    continue
                rb = st.routes[b]
                for pos in range(len(rb) + 1):
                    if _try_pair(st, a, b, rest, rb[:pos] + [s] + rb[pos:]):
                        return True
            if can_open and len(ra) > 1:
                st.routes.append([])
                st.route_cost.append(0.0)
                if _try_pair(st, a, len(st.routes) - 1, rest, [s]):
                    return True
                st.routes.pop()
                st.route_cost.pop()
    return False


def _swap(st: _State) -> bool:
    routes = st.routes
    for a in range(len(routes)):
        for b in range(a, len(routes)):
            for i in range(len(routes[a])):
                for j in range(len(routes[b])):
                    if a == b:
                        if j <= i:
                            continue
                        t = list(routes[a])
                        t[i], t[j] = t[j], t[i]
                        if _try_single(st, a, t):
                            return True
                    else:
                        ta, tb = list(routes[a]), list(routes[b])
                        ta[i], tb[j] = tb[j], ta[i]
                        if _try_pair(st, a, b, ta, tb):
                            return True
    return False


def _two_opt(st: _State) -> bool:
    for a, ra in enumerate(st.routes):
        for i in range(len(ra) - 1):
            for j in range(i + 1, len(ra)):
                if _try_single(st, a, ra[:i] + ra[i:j + 1][::-1] + ra[j + 1:]):
                    return True
    return False


def _exchange_tails(st: _State) -> bool:
    routes = st.routes
    for a in range(len(routes)):
        for b in range(a + 1, len(routes)):
            ra, rb = routes[a], routes[b]
            for i in range(len(ra) + 1):
                for j in range(len(rb) + 1):
                    if (i, j) in ((0, 0), (len(ra), len(rb))):
                        continue
                    if _try_pair(st, a, b, ra[:i] + rb[j:], rb[:j] + ra[i:]):
                        return True
    return False


MOVES = (_relocate, _swap, _two_opt, _exchange_tails)


def _local_search(st: _State, deadline: float | None) -> int:
    steps = 0
    improved = True
    while improved:
        improved = False
        for move in MOVES:
            if move(st):
                improved = True
                steps += 1
                break
        if deadline is not None and time.perf_counter() > deadline:
            break
    if not st.exact:
        keep = [i for i, r in enumerate(st.routes) if r]
        st.routes = [st.routes[i] for i in keep]
        st.route_cost = [st.route_cost[i] for i in keep]
    return steps


def _perturb(st: _State, rng: random.Random, k: int):
    """Move ``k`` random stops to random feasible positions."""
    stops = [s for r in st.routes for s in r]
    for s in rng.sample(stops, min(k, len(stops))):
        src = next(i for i, r in enumerate(st.routes) if s in r)
        if st.exact and len(st.routes[src]) == 1:
            continue
        st.routes[src].remove(s)
        targets = [i for i, r in enumerate(st.routes) if st.load(r) + st.q[s] <= st.Q]
        if not st.exact and len(st.routes) < st.m:
            targets.append(len(st.routes))
        dst = rng.choice(targets)
        if dst == len(st.routes):
            st.routes.append([])
        st.routes[dst].insert(rng.randint(0, len(st.routes[dst])), s)
    st.set_routes(st.routes)


def solve_heuristic(prob: CvrpProblem, seed: int = 0, iterations: int = 30,
                    time_limit: float | None = None) -> SolveReport:
    """Deterministic under ``seed`` unless ``time_limit`` cuts the search short.

    ``trace`` records the best objective after construction and after every
    perturbation round; it never increases.
    """
    prob.check_feasible()
    start = time.perf_counter()
    deadline = None if time_limit is None else start + time_limit
    rng = random.Random(seed)
    st = _State(prob, _Costs(prob))
    if prob.n == 0:
        return SolveReport(prob.to_routing([]), 0.0, False, method="heuristic")
    if not _regret_insertion(st, rng) and not _first_fit(st):
        raise InfeasibleError("no feasible packing of the stops into the fleet was found")
    steps = _local_search(st, deadline)
    best, best_obj = st.snapshot(), st.total()
    trace = [best_obj]
    rounds = 0
    for _ in range(iterations):
        if deadline is not None and time.perf_counter() > deadline:
            break
        rounds += 1
        _perturb(st, rng, max(2, prob.n // 5))
        steps += _local_search(st, deadline)
        obj = st.total()
        if obj < best_obj - IMPROVE_EPS:
            best, best_obj = st.snapshot(), obj
        else:
            st.set_routes(best)
        trace.append(best_obj)
    routing = prob.to_routing(best)
    return SolveReport(routing, prob.objective(routing), False, nodes_explored=steps, iterations=rounds,
                       wall_time=time.perf_counter() - start, trace=tuple(trace), method="heuristic")
