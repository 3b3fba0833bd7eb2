import math

import numpy as np
import pytest

from prefroute.core import Routing, daisy_chain
from prefroute.learn import TransitionMatrix, estimate_first_order, estimate_second_order
from prefroute.solve import (
    FORBIDDEN,
    CvrpProblem,
    InfeasibleError,
    brute_force_oracle,
    build_arc_costs,
    capacity_free_problem,
    first_order_problem,
    second_order_problem,
    solve,
    solve_exact,
    solve_exact_first_order,
    solve_exact_second_order,
    solve_heuristic,
    solve_heuristic_first_order,
)

from conftest import make_dataset, random_problem

NEG_LOG_EPS = 27.631021115928547  # -log(1e-12)


class TestCosts:
    def test_values(self):
        p = np.array([[0, 1, 0], [math.exp(-1), 0, 1 - math.exp(-1)], [1, 0, 0]])
        c = build_arc_costs(p)
        assert c[0, 1] == 0
        assert c[1, 0] == pytest.approx(1.0, abs=1e-15)
        assert c[0, 2] == pytest.approx(NEG_LOG_EPS, abs=1e-12)
        assert np.all(np.diag(c) == FORBIDDEN)

    def test_objective_is_sum_of_tour_costs(self, rng):
        prob = random_problem(rng, 5, 2)
        c = prob.costs
        r = Routing([[1, 3], [2, 5, 4]])
        expected = c[0, 1] + c[1, 3] + c[3, 0] + c[0, 2] + c[2, 5] + c[5, 4] + c[4, 0]
        assert prob.objective(r) == pytest.approx(expected, abs=1e-12)


class TestExact:
    def test_single_stop(self):
        c = np.array([[0, 2.5], [1.5, 0]])
        rep = solve_exact(CvrpProblem((1,), 1, 1, {1: 1}, costs=c))
        assert rep.routing == Routing([[1]]) and rep.objective == 4.0 and rep.optimal

    def test_certain_cycle(self):
        p = TransitionMatrix(np.array([[0, 0, 1, 0], [0, 0, 0, 1], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float),
                             (0, 1, 2, 3))
        rep = solve_exact_first_order(first_order_problem((1, 2, 3), 1, 3, {1: 1, 2: 1, 3: 1}, p))
        assert rep.routing == Routing([[2, 1, 3]]) and rep.objective == 0.0

    def test_infeasible(self):
        prob = CvrpProblem((1, 2), 2, 2, {1: 3, 2: 3}, costs=np.ones((3, 3)))
        with pytest.raises(InfeasibleError):
            solve_exact(prob)
        with pytest.raises(InfeasibleError):
            solve_heuristic(prob)

    def test_fleet_too_small(self):
        prob = CvrpProblem((1, 2, 3), 1, 2, {1: 1, 2: 1, 3: 1}, costs=np.ones((4, 4)))
        with pytest.raises(InfeasibleError):
            solve_exact(prob)

    def test_symmetric_tie_picks_smaller_chain(self):
        c = np.array([[0, 5, 1, 1], [5, 0, 1, 1], [1, 1, 0, 5], [1, 1, 5, 0]], dtype=float)
        rep = solve_exact(CvrpProblem((1, 2, 3), 1, 3, {1: 1, 2: 1, 3: 1}, costs=c))
        assert daisy_chain(rep.routing) == (0, 2, 1, 3, 0)
        assert rep.objective == 4.0

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_oracle_order1(self, seed):
        rng = np.random.default_rng(seed)
        prob = random_problem(rng, int(rng.integers(3, 7)), int(rng.integers(1, 3)),
                              exact_fleet=bool(seed % 3 == 0), integer_costs=bool(seed % 2))
        exact, oracle = solve_exact(prob), brute_force_oracle(prob)
        assert exact.objective == pytest.approx(oracle.objective, abs=1e-9)
        assert exact.routing == oracle.routing

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_oracle_order2(self, seed):
        rng = np.random.default_rng(100 + seed)
        prob = random_problem(rng, int(rng.integers(3, 6)), int(rng.integers(1, 3)), order=2,
                              integer_costs=bool(seed % 2))
        exact, oracle = solve_exact(prob), brute_force_oracle(prob)
        assert exact.objective == pytest.approx(oracle.objective, abs=1e-9)
        assert exact.routing == oracle.routing

    def test_separable_tensor_reduces_to_first_order(self, rng):
        n = 5
        c = rng.random((n + 1, n + 1)) * 3
        np.fill_diagonal(c, FORBIDDEN)
        tensor = np.broadcast_to(c[None, :, :], (n + 1,) * 3).copy()
        demands = {s: 1 for s in range(1, n + 1)}
        first = solve_exact(CvrpProblem(tuple(range(1, n + 1)), 2, 3, demands, costs=c))
        second = solve_exact(CvrpProblem(tuple(range(1, n + 1)), 2, 3, demands,
                                         depot_costs=c[0].copy(), tensor=tensor))
        assert second.routing == first.routing
        assert second.objective == pytest.approx(first.objective, abs=1e-12)

    @pytest.mark.parametrize("order", [1, 2])
    def test_memorizes_single_tour(self, order):
        ds = make_dataset([[[3, 1, 4, 2, 5]]])
        inst = ds[1]
        if order == 1:
            prob = first_order_problem(inst.stops, 1, inst.capacity, inst.demands, estimate_first_order(ds, lam=0.0))
        else:
            prob = second_order_problem(inst.stops, 1, inst.capacity, inst.demands,
                                        estimate_second_order(ds, lam=0.0))
        rep = solve_exact(prob)
        assert rep.routing == inst.routing and rep.objective == 0.0

    @pytest.mark.parametrize("order", [1, 2])
    def test_memorizes_multi_tour(self, order):
        # each of the k depot departures was seen once, so they cost log k apiece
        ds = make_dataset([[[3, 1], [4, 2, 5]]])
        inst = ds[1]
        if order == 1:
            prob = first_order_problem(inst.stops, 2, inst.capacity, inst.demands, estimate_first_order(ds, lam=0.0))
        else:
            prob = second_order_problem(inst.stops, 2, inst.capacity, inst.demands,
                                        estimate_second_order(ds, lam=0.0))
        rep = solve_exact(prob)
        assert rep.routing == inst.routing
        assert rep.objective == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_order_checks(self, rng):
        with pytest.raises(ValueError):
            solve_exact_second_order(random_problem(rng, 3, 1))
        with pytest.raises(ValueError):
            solve_exact_first_order(random_problem(rng, 3, 1, order=2))
        with pytest.raises(ValueError):
            solve_heuristic_first_order(random_problem(rng, 3, 1, order=2))


class TestHeuristic:
    @pytest.mark.parametrize("seed", range(10))
    def test_feasible_and_not_better_than_exact(self, seed):
        rng = np.random.default_rng(200 + seed)
        prob = random_problem(rng, int(rng.integers(3, 9)), int(rng.integers(1, 4)),
                              exact_fleet=bool(seed % 2), order=1 + (seed % 3 == 0))
        h, e = solve_heuristic(prob, seed=seed), solve_exact(prob)
        assert prob.validate(h.routing).ok
        assert h.objective >= e.objective - 1e-9
        assert h.objective == pytest.approx(prob.objective(h.routing), abs=1e-12)
        assert list(h.trace) == sorted(h.trace, reverse=True)

    def test_tiny_matches_oracle(self, rng):
        for _ in range(5):
            prob = random_problem(rng, 3, 1)
            assert solve_heuristic(prob).objective == pytest.approx(brute_force_oracle(prob).objective,
                                                                     abs=1e-9)

    def test_deterministic(self, rng):
        prob = random_problem(rng, 14, 3)
        a, b = solve_heuristic(prob, seed=7), solve_heuristic(prob, seed=7)
        assert a.routing == b.routing and a.objective == b.objective

    def test_exact_fleet_uses_every_vehicle(self, rng):
        prob = random_problem(rng, 9, 3, exact_fleet=True)
        assert len(solve_heuristic(prob).routing) == 3


class TestCapacityFree:
    def test_unit_demands(self):
        prob = capacity_free_problem([1, 2, 3, 4, 5], 2)
        assert prob.capacity == 5 and set(prob.demands.values()) == {1} and prob.capacity_free

    def test_never_infeasible_by_load(self, rng):
        c = rng.random((7, 7))
        rep = solve_exact(capacity_free_problem(range(1, 7), 1, costs=c))
        assert len(rep.routing) == 1 and rep.routing.n_stops == 6


class TestDispatch:
    def test_auto(self, rng):
        assert solve(random_problem(rng, 5, 2)).method == "exact"
        assert solve(random_problem(rng, 14, 3)).method == "heuristic"

    def test_second_order_warning(self, rng):
        with pytest.warns(RuntimeWarning):
            solve(random_problem(rng, 11, 4, order=2), node_limit=50, time_limit=1.0)

    def test_unknown_method(self, rng):
        with pytest.raises(ValueError):
            solve(random_problem(rng, 3, 1), method="lp")
