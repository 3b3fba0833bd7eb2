"""CVRP instances with probability-derived arc costs, and solver reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..core import DEPOT, Routing, ValidationReport, validate_routing
from ..learn import SecondOrderTensor, TransitionMatrix

DEFAULT_EPSILON = 1e-12
# Finite stand-in for "never use this arc"; far above any -log(epsilon).
FORBIDDEN = 1e6


class InfeasibleError(Exception):
    """No routing satisfies the fleet and capacity constraints."""


def build_arc_costs(p: TransitionMatrix | np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """c_ij = -log(max(p_ij, epsilon)); the diagonal is set to a large finite cost."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    probs = p.probs if isinstance(p, TransitionMatrix) else np.asarray(p, dtype=float)
    c = -np.log(np.maximum(probs, epsilon))
    np.fill_diagonal(c, FORBIDDEN)
    return c


def build_tensor_costs(t: SecondOrderTensor, epsilon: float = DEFAULT_EPSILON) -> tuple[np.ndarray, np.ndarray]:
    """Depot-departure costs and triple costs -log p_ijk (clamped like build_arc_costs)."""
    depot = -np.log(np.maximum(t.depot_row, epsilon))
    depot[0] = FORBIDDEN
    tensor = -np.log(np.maximum(t.probs, epsilon))
    return depot, tensor


@dataclass(frozen=True)
class CvrpProblem:
    """A routing instance over ``stops`` with local index 0 = depot, i = stops[i-1].

    First-order instances carry an (n+1)x(n+1) ``costs`` matrix.  Second-order
    instances carry ``depot_costs`` (n+1) and ``tensor`` (n+1)^3 instead.
    """

    stops: tuple[int, ...]
    fleet: int
    capacity: int
    demands: Mapping[int, int]
    costs: np.ndarray | None = None
    depot_costs: np.ndarray | None = None
    tensor: np.ndarray | None = None
    exact_fleet: bool = False
    capacity_free: bool = False

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(self.stops))
        n = len(self.stops)
        if DEPOT in self.stops:
            raise ValueError("the depot is not a stop")
        if list(self.stops) != sorted(set(self.stops)):
            raise ValueError("stops must be distinct and sorted ascending")
        if self.fleet < 1 or self.capacity < 1:
            raise ValueError("fleet and capacity must be positive")
        for s in self.stops:
            if self.demands.get(s, 0) < 1:
                raise ValueError(f"stop {s} needs a positive demand")
        if self.tensor is None:
            if self.costs is None:
                raise ValueError("a first-order problem needs a cost matrix")
            c = np.array(self.costs, dtype=float)
            if c.shape != (n + 1, n + 1) or not np.all(np.isfinite(c)):
                raise ValueError(f"cost matrix must be finite with shape {(n + 1, n + 1)}")
            object.__setattr__(self, "costs", c)
        else:
            t = np.array(self.tensor, dtype=float)
            d = np.array(self.depot_costs, dtype=float)
            if t.shape != (n + 1,) * 3 or d.shape != (n + 1,):
                raise ValueError("second-order costs have the wrong shape")
            object.__setattr__(self, "tensor", t)
            object.__setattr__(self, "depot_costs", d)

    @property
    def order(self) -> int:
        return 1 if self.tensor is None else 2

    @property
    def n(self) -> int:
        return len(self.stops)

    @property
    def nodes(self) -> tuple[int, ...]:
        return (DEPOT,) + self.stops

    @property
    def total_demand(self) -> int:
        return sum(self.demands[s] for s in self.stops)

    def local(self, routing: Routing) -> list[list[int]]:
        idx = {s: i for i, s in enumerate(self.nodes)}
        return [[idx[s] for s in t] for t in routing.tours]

    def to_routing(self, tours: Iterable[Sequence[int]]) -> Routing:
        nodes = self.nodes
        return Routing([[nodes[i] for i in t] for t in tours if t])

    def tour_cost(self, tour: Sequence[int]) -> float:
        """Cost of one tour given in local indices."""
        if not tour:
            return 0.0
        if self.tensor is None:
            c = self.costs
            total = c[0, tour[0]]
            for a, b in zip(tour, tour[1:]):
                total += c[a, b]
            return float(total + c[tour[-1], 0])
        seq = (0, *tour, 0)
        total = self.depot_costs[tour[0]]
        for i, j, k in zip(seq, seq[1:], seq[2:]):
            total += self.tensor[i, j, k]
        return float(total)

    def objective(self, routing: Routing) -> float:
        return math.fsum(self.tour_cost(t) for t in self.local(routing))

    def validate(self, routing: Routing) -> ValidationReport:
        return validate_routing(routing, self.fleet, self.demands, self.capacity, self.stops,
                                exact_fleet=self.exact_fleet)

    def check_feasible(self) -> None:
        """Raise InfeasibleError for the obvious capacity and fleet contradictions."""
        heavy = [s for s in self.stops if self.demands[s] > self.capacity]
        if heavy:
            raise InfeasibleError(f"stops {heavy} exceed the vehicle capacity {self.capacity}")
        if self.total_demand > self.fleet * self.capacity:
            raise InfeasibleError(
                f"total demand {self.total_demand} exceeds fleet capacity {self.fleet} x {self.capacity}"
            )
        if self.exact_fleet and self.n < self.fleet:
            raise InfeasibleError(f"{self.n} stops cannot fill exactly {self.fleet} tours")


@dataclass(frozen=True)
class SolveReport:
    routing: Routing
    objective: float
    optimal: bool
    nodes_explored: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    trace: tuple[float, ...] = field(default=(), repr=False)
    method: str = ""


def first_order_problem(stops: Iterable[int], fleet: int, capacity: int, demands: Mapping[int, int],
                        probs: TransitionMatrix, epsilon: float = DEFAULT_EPSILON,
                        exact_fleet: bool = False, capacity_free: bool = False) -> CvrpProblem:
    """Problem whose costs are -log of ``probs`` restricted to ``stops``."""
    stops = tuple(sorted(set(stops) - {DEPOT}))
    sub = probs.restrict(stops) if probs.stops != (DEPOT,) + stops else probs
    return CvrpProblem(stops, fleet, capacity, dict(demands), costs=build_arc_costs(sub, epsilon),
                       exact_fleet=exact_fleet, capacity_free=capacity_free)


def second_order_problem(stops: Iterable[int], fleet: int, capacity: int, demands: Mapping[int, int],
                         tensor: SecondOrderTensor, epsilon: float = DEFAULT_EPSILON,
                         exact_fleet: bool = False, capacity_free: bool = False) -> CvrpProblem:
    stops = tuple(sorted(set(stops) - {DEPOT}))
    sub = tensor.restrict(stops) if tensor.stops != (DEPOT,) + stops else tensor
    depot, t = build_tensor_costs(sub, epsilon)
    return CvrpProblem(stops, fleet, capacity, dict(demands), depot_costs=depot, tensor=t,
                       exact_fleet=exact_fleet, capacity_free=capacity_free)


def capacity_free_problem(stops: Iterable[int], fleet: int, costs: np.ndarray | None = None,
                          depot_costs: np.ndarray | None = None, tensor: np.ndarray | None = None,
                          exact_fleet: bool = False) -> CvrpProblem:
    """Unit demands and capacity n: load propagation still forbids depot-free cycles
    while no tour can ever be overloaded."""
    stops = tuple(sorted(set(stops) - {DEPOT}))
    n = len(stops)
    if costs is None and tensor is None:
        costs = np.zeros((n + 1, n + 1))
    return CvrpProblem(stops, fleet, max(n, 1), {s: 1 for s in stops}, costs=costs,
                       depot_costs=depot_costs, tensor=tensor, exact_fleet=exact_fleet,
                       capacity_free=True)
