"""Depth-first branch-and-bound for the maximum-likelihood CVRP.

The search builds the daisy chain one symbol at a time: from a stop it either
extends the open tour or returns to the depot; from the depot it opens a new
tour.  Tours are opened in ascending order of their first stop, so each
routing is generated exactly once and the chain being built is already the
canonical one.  Load is propagated along the open tour, which is what keeps
depot-free cycles out.

Pruning combines three rules:

* a lower bound from the assignment relaxation of the in/out degree
  constraints (with one depot copy per remaining vehicle), tried only after
  the cheaper row/column-minimum bound fails to prune;
* dominance: two partial chains that reach the same (visited set, position,
  load, tours, last first stop) state have identical completions, so only
  the cheaper one (lexicographically smaller on ties) is expanded;
* tie order: a subtree whose prefix is lexicographically greater than the
  incumbent chain is cut as soon as it cannot strictly improve.

For second-order costs each pair product x_ij * x_jk is relaxed through
y_ijk <= x_jk with sum_i y_ijk = x_jk, so arc (j, k) is charged
min_i c_ijk over the predecessors still possible; the same assignment bound
then applies.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core import Routing
from .heuristic import solve_heuristic
from .problem import FORBIDDEN, CvrpProblem, InfeasibleError, SolveReport

TIE_TOL = 1e-9
BIG = 1e9
MEMO_CAP = 3_000_000


class _BudgetExhausted(Exception):
    pass


def solve_exact(prob: CvrpProblem, node_limit: int = 5_000_000, time_limit: float | None = 120.0,
                warm_start: bool = True) -> SolveReport:
    """Provably optimal routing when the budget suffices (``optimal=True``).

    Otherwise the best routing found so far is returned with ``optimal=False``.
    Ties within 1e-9 are resolved towards the lexicographically smallest
    canonical daisy chain.
    """
    prob.check_feasible()
    start = time.perf_counter()
    n, m, Q = prob.n, prob.fleet, prob.capacity
    if n == 0:
        return SolveReport(Routing([]), 0.0, True, method="exact")
    if n > 250:
        raise ValueError(f"exact search is meant for small instances, got {n} stops")

    order = prob.order
    q = [0] + [prob.demands[s] for s in prob.stops]
    full = (1 << (n + 1)) - 2  # bits 1..n
    exact_fleet = prob.exact_fleet

    if order == 1:
        cnp = prob.costs.copy()
        np.fill_diagonal(cnp, BIG)
        C = cnp.tolist()
        C0 = C[0]
    else:
        tnp = prob.tensor.copy()
        idx = np.arange(n + 1)
        tnp[idx, idx, :] = BIG          # i == j
        tnp[:, idx, idx] = BIG          # j == k
        for k in range(1, n + 1):
            tnp[k, :, k] = BIG          # i == k revisits a stop
        T = tnp.tolist()
        dnp = prob.depot_costs.copy()
        dnp[0] = BIG
        C0 = dnp.tolist()

    best_obj = float("inf")
    best_chain: bytes | None = None
    if warm_start:
        try:
            h = solve_heuristic(prob, seed=0, iterations=max(50, 10 * n))
            best_obj = h.objective
            best_chain = bytes(_local_chain(prob, h.routing))
        except InfeasibleError:
            pass

    memo: dict[tuple, tuple[float, bytes]] = {}
    path = bytearray([0])
    nodes = 0
    exhausted = False

    def assignment_bound(cur: int, prev: int, unvisited: list[int], r: int, must_open: int,
                         threshold: float) -> float:
        """Lower bound on the cost still to pay; >= BIG when nothing is feasible.

        The cheap bound is returned as soon as it already exceeds ``threshold``.
        """
        u = len(unvisited)
        if exact_fleet:
            if r > u:
                return BIG
            copies = r
        else:
            copies = min(r, u)
        if cur == 0 and u and copies == 0:
            return BIG
        row_nodes = ([cur] if cur else []) + unvisited + [0] * copies
        col_nodes = unvisited + [0] * (copies + (1 if cur else 0))
        if order == 1:
            a = cnp[np.array(row_nodes, dtype=np.intp)[:, None], np.array(col_nodes, dtype=np.intp)]
        else:
            cols = unvisited + [0]
            preds = [0] + ([cur] if cur else []) + unvisited
            pi, ui, ci = (np.array(x, dtype=np.intp) for x in (preds, unvisited, cols))
            reduced = tnp[pi[:, None, None], ui[:, None], ci].min(axis=0)
            block = np.empty((len(row_nodes), len(cols)))
            off = 0
            if cur:
                block[0] = tnp[prev, cur, cols]
                off = 1
            block[off:off + u] = reduced
            block[off + u:] = np.append(dnp[unvisited], BIG)
            expand = list(range(u)) + [u] * (len(col_nodes) - u)
            a = block[:, expand]
        if copies:
            depot_rows = slice(len(row_nodes) - copies, len(row_nodes))
            if exact_fleet:
                a[depot_rows, u:] = BIG
            else:
                # Idle vehicles pair a depot copy with itself; at most copies - must_open may idle.
                a[depot_rows, u:] = 0.0
                a[len(row_nodes) - must_open:, u:] = BIG
        cheap = max(a.min(axis=1).sum(), a.min(axis=0).sum())
        if cheap >= BIG or cheap > threshold:
            return cheap
        ri, ci = linear_sum_assignment(a)
        return float(a[ri, ci].sum())

    def dfs(cur: int, prev: int, visited: int, load: int, used: int, first: int, g: float):
        nonlocal best_obj, best_chain, nodes, exhausted
        nodes += 1
        if nodes > node_limit:
            raise _BudgetExhausted
        if time_limit is not None and not nodes & 1023 and time.perf_counter() - start > time_limit:
            raise _BudgetExhausted

        if visited == full and cur == 0:
            if exact_fleet and used != m:
                return
            chain = bytes(path)
            if best_chain is None or g < best_obj - TIE_TOL or (g <= best_obj + TIE_TOL and chain < best_chain):
                best_obj, best_chain = g, chain
            return

        prefix = bytes(path)
        key = (visited, cur, prev if order == 2 and cur else -1, load, used, first)
        old = memo.get(key)
        if old is not None:
            og, op = old
            if g > og + TIE_TOL or (g >= og - TIE_TOL and prefix >= op):
                return
        if len(memo) < MEMO_CAP or old is not None:
            memo[key] = (g, prefix)

        unvisited = [j for j in range(1, n + 1) if not visited >> j & 1]
        rem_demand = sum(q[j] for j in unvisited)
        r = m - used
        spill = rem_demand - (Q - load if cur else 0)
        must_open = -(-spill // Q) if spill > 0 else 0
        if must_open > r:
            return
        if exact_fleet and len(unvisited) < r:
            return

        lex_gt = best_chain is not None and prefix > best_chain[:len(prefix)]
        threshold = best_obj - g - (TIE_TOL if lex_gt else -TIE_TOL)
        if best_chain is not None:
            lb = assignment_bound(cur, prev, unvisited, r, must_open, threshold)
            if lb > threshold or (lex_gt and lb >= threshold):
                return

        children = []
        if cur:
            row = C[cur] if order == 1 else T[prev][cur]
            closing_ok = visited == full or (r > 0 and any(j > first for j in unvisited))
            if closing_ok:
                children.append((row[0], 0))
            for j in unvisited:
                if load + q[j] <= Q:
                    children.append((row[j], j))
        elif r > 0:
            for j in unvisited:
                if j > first and q[j] <= Q:
                    children.append((C0[j], j))
        children.sort()
        for c, j in children:
            path.append(j)
            if j == 0:
                dfs(0, cur, visited, 0, used, first, g + c)
            elif cur == 0:
                dfs(j, 0, visited | 1 << j, q[j], used + 1, j, g + c)
            else:
                dfs(j, cur, visited | 1 << j, load + q[j], used, first, g + c)
            path.pop()

    try:
        dfs(0, -1, 0, 0, 0, 0, 0.0)
    except _BudgetExhausted:
        exhausted = True

    if best_chain is None:
        if exhausted:
            raise InfeasibleError("search budget exhausted before any feasible routing was found")
        raise InfeasibleError("no routing satisfies the fleet and capacity constraints")
    routing = _routing_from_local_chain(prob, best_chain)
    return SolveReport(routing, prob.objective(routing), not exhausted, nodes_explored=nodes,
                       wall_time=time.perf_counter() - start, method="exact")


def _local_chain(prob: CvrpProblem, routing: Routing) -> list[int]:
    chain = [0]
    for t in prob.local(routing):
        chain.extend(t)
        chain.append(0)
    return chain


def _routing_from_local_chain(prob: CvrpProblem, chain: bytes) -> Routing:
    tours, cur = [], []
    for s in chain:
        if s == 0:
            if cur:
                tours.append(cur)
            cur = []
        else:
            cur.append(s)
    return prob.to_routing(tours)


assert FORBIDDEN < BIG
