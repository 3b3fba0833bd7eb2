"""Maximum-likelihood CVRP solvers."""

from __future__ import annotations

import warnings

from .exact import solve_exact
from .heuristic import solve_heuristic
from .oracle import brute_force_oracle
from .problem import (
    DEFAULT_EPSILON,
    FORBIDDEN,
    CvrpProblem,
    InfeasibleError,
    SolveReport,
    build_arc_costs,
    build_tensor_costs,
    capacity_free_problem,
    first_order_problem,
    second_order_problem,
)

# Above this size "auto" switches from exact search to the heuristic.
AUTO_EXACT_MAX = 12
SECOND_ORDER_WARN = 10


def solve_exact_first_order(prob: CvrpProblem, **limits) -> SolveReport:
    if prob.order != 1:
        raise ValueError("expected a first-order problem")
    return solve_exact(prob, **limits)


def solve_exact_second_order(prob: CvrpProblem, **limits) -> SolveReport:
    if prob.order != 2:
        raise ValueError("expected a second-order problem")
    return solve_exact(prob, **limits)


def solve_heuristic_first_order(prob: CvrpProblem, seed: int = 0, iterations: int = 30) -> SolveReport:
    if prob.order != 1:
        raise ValueError("expected a first-order problem")
    return solve_heuristic(prob, seed=seed, iterations=iterations)


def solve(prob: CvrpProblem, method: str = "auto", seed: int = 0, **kwargs) -> SolveReport:
    """Dispatch to the exact or heuristic solver.

    Second-order problems always go to the exact solver under "auto".
    """
    if method == "auto":
        method = "exact" if prob.order == 2 or prob.n <= AUTO_EXACT_MAX else "heuristic"
    if method == "exact":
        if prob.order == 2 and prob.n > SECOND_ORDER_WARN:
            warnings.warn(f"second-order exact search on {prob.n} stops may be slow", RuntimeWarning,
                          stacklevel=2)
        return solve_exact(prob, **kwargs)
    if method == "heuristic":
        return solve_heuristic(prob, seed=seed, **kwargs)
    raise ValueError(f"unknown solver {method!r}; expected auto, exact or heuristic")


__all__ = [
    "AUTO_EXACT_MAX", "DEFAULT_EPSILON", "FORBIDDEN", "CvrpProblem", "InfeasibleError", "SolveReport",
    "brute_force_oracle", "build_arc_costs", "build_tensor_costs", "capacity_free_problem",
    "first_order_problem", "second_order_problem", "solve", "solve_exact", "solve_exact_first_order",
    "solve_exact_second_order", "solve_heuristic", "solve_heuristic_first_order",
]
