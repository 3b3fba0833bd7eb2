"""Domain types: stops, tours, routings and timestamped history datasets.

Stop ids are non-negative integers and ``0`` is always the depot.  A tour is a
tuple of stop ids without the depot; a routing is a set of disjoint tours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

DEPOT = 0

Tour = tuple[int, ...]


class EmptyChainError(ValueError):
    """Raised when a daisy chain is requested for a routing without tours."""


def _as_tour(stops: Iterable[int]) -> Tour:
    tour = tuple(int(s) for s in stops)
    if not tour:
        raise ValueError("a tour must contain at least one stop")
    if DEPOT in tour:
        raise ValueError(f"tour {list(tour)} contains the depot")
    if len(set(tour)) != len(tour):
        raise ValueError(f"tour {list(tour)} visits a stop twice")
    return tour


@dataclass(frozen=True)
class Routing:
    """A set of depot-anchored tours.

    Tours are stored in canonical order (ascending first stop) so two routings
    with the same tours compare equal regardless of the order they were given.
    """

    tours: tuple[Tour, ...]
    stop_set: frozenset[int] = field(default=frozenset())

    def __init__(self, tours: Iterable[Iterable[int]]):
        ts = tuple(sorted((_as_tour(t) for t in tours), key=lambda t: t[0]))
        seen: set[int] = set()
        for t in ts:
            overlap = seen.intersection(t)
            if overlap:
                raise ValueError(f"stops {sorted(overlap)} appear in more than one tour")
            seen.update(t)
        object.__setattr__(self, "tours", ts)
        object.__setattr__(self, "stop_set", frozenset(seen))

    def __len__(self) -> int:
        return len(self.tours)

    def __repr__(self) -> str:
        return f"Routing({[list(t) for t in self.tours]})"

    @property
    def n_stops(self) -> int:
        return len(self.stop_set)

    def relabel(self, mapping: Mapping[int, int]) -> "Routing":
        return Routing([[mapping[s] for s in t] for t in self.tours])

    def arcs(self) -> frozenset[tuple[int, int]]:
        """Directed arcs of the daisy chain, without the collapsed depot loop."""
        out = set()
        for t in self.tours:
            out.add((DEPOT, t[0]))
            out.update(zip(t, t[1:]))
            out.add((t[-1], DEPOT))
        return frozenset(out)

    def groups(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(t) for t in self.tours)


def routing_from_chain(chain: Sequence[int]) -> Routing:
    """Split a daisy chain on depot symbols back into a routing."""
    tours: list[list[int]] = []
    current: list[int] = []
    for s in chain:
        if s == DEPOT:
            if current:
                tours.append(current)
            current = []
        else:
            current.append(s)
    if current:
        tours.append(current)
    return Routing(tours)


def daisy_chain(routing: Routing) -> tuple[int, ...]:
    """Concatenate the tours into one depot-separated sequence.

    ``{[1,2],[3]}`` becomes ``(0, 1, 2, 0, 3, 0)``; consecutive depot symbols
    are collapsed, so a routing of n stops and k tours gives n + k + 1 symbols.
    """
    if not routing.tours:
        raise EmptyChainError("cannot daisy-chain an empty routing")
    chain = [DEPOT]
    for t in routing.tours:
        chain.extend(t)
        chain.append(DEPOT)
    return tuple(chain)


@dataclass(frozen=True)
class ValidationReport:
    visits_once: bool
    fleet_ok: bool
    capacity_ok: bool
    missing: tuple[int, ...] = ()
    extra: tuple[int, ...] = ()
    n_tours: int = 0
    loads: tuple[int, ...] = ()
    overloaded: tuple[int, ...] = ()  # indices into routing.tours

    @property
    def ok(self) -> bool:
        return self.visits_once and self.fleet_ok and self.capacity_ok

    def problems(self) -> list[str]:
        out = []
        if self.missing:
            out.append(f"stops never visited: {list(self.missing)}")
        if self.extra:
            out.append(f"stops not in the instance: {list(self.extra)}")
        if not self.fleet_ok:
            out.append(f"{self.n_tours} tours exceed the fleet")
        for i in self.overloaded:
            out.append(f"tour {i} carries load {self.loads[i]} over capacity")
        return out


def validate_routing(
    routing: Routing,
    fleet: int,
    demands: Mapping[int, int],
    capacity: int,
    stops: Iterable[int] | None = None,
    exact_fleet: bool = False,
) -> ValidationReport:
    """Check visit-once, fleet-size and capacity constraints.

    Violations are reported, never raised.  ``stops`` defaults to the keys of
    ``demands``.
    """
    expected = frozenset(demands if stops is None else stops)
    missing = tuple(sorted(expected - routing.stop_set))
    extra = tuple(sorted(routing.stop_set - expected))
    n = len(routing.tours)
    fleet_ok = n == fleet if exact_fleet else n <= fleet
    loads = tuple(sum(demands.get(s, 0) for s in t) for t in routing.tours)
    overloaded = tuple(i for i, load in enumerate(loads) if load > capacity)
    return ValidationReport(
        visits_once=not missing and not extra,
        fleet_ok=fleet_ok,
        capacity_ok=not overloaded,
        missing=missing,
        extra=extra,
        n_tours=n,
        loads=loads,
        overloaded=overloaded,
    )


@dataclass(frozen=True)
class HistoryInstance:
    """One historical day: stops served, fleet, demands, capacity and the routing driven.

    ``capacity_free`` marks instances whose file carried no demands; those get
    unit demands and a capacity equal to the number of stops.
    """

    timestamp: int
    stops: frozenset[int]
    fleet: int
    demands: Mapping[int, int]
    capacity: int
    routing: Routing
    weekday: int | None = None
    capacity_free: bool = False

    def __post_init__(self):
        if self.timestamp < 1:
            raise ValueError(f"timestamp must be >= 1, got {self.timestamp}")
        if self.fleet < 1:
            raise ValueError(f"fleet must be positive, got {self.fleet}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if DEPOT in self.stops:
            raise ValueError("the depot cannot be listed as a stop")
        if self.routing.stop_set != self.stops:
            raise ValueError(
                f"instance t={self.timestamp}: routing covers {sorted(self.routing.stop_set)}"
                f" but the stop set is {sorted(self.stops)}"
            )
        for s in self.stops:
            q = self.demands.get(s)
            if q is None or q < 1:
                raise ValueError(f"instance t={self.timestamp}: stop {s} needs a positive demand")

    def validate(self) -> ValidationReport:
        return validate_routing(self.routing, self.fleet, self.demands, self.capacity, self.stops)

    def with_timestamp(self, t: int) -> "HistoryInstance":
        return HistoryInstance(t, self.stops, self.fleet, self.demands, self.capacity,
                               self.routing, self.weekday, self.capacity_free)

    def without_demands(self) -> "HistoryInstance":
        n = len(self.stops)
        return HistoryInstance(self.timestamp, self.stops, self.fleet, {s: 1 for s in self.stops},
                               n, self.routing, self.weekday, True)


@dataclass(frozen=True)
class HistoryDataset:
    """Timestamp-ordered instances; timestamps are the ranks 1..len.

    ``names[i]`` is the external name of stop id ``i`` (``names[0]`` is the
    depot).  ``drift_t`` optionally marks the first instance after a concept
    drift.
    """

    instances: tuple[HistoryInstance, ...]
    names: tuple[str, ...] = ()
    drift_t: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        for rank, inst in enumerate(self.instances, start=1):
            if inst.timestamp != rank:
                raise ValueError(
                    f"timestamps must be 1..{len(self.instances)} in order; position {rank}"
                    f" holds t={inst.timestamp}"
                )

    @classmethod
    def from_instances(cls, instances: Iterable[HistoryInstance], names: Sequence[str] = (),
                       drift_t: int | None = None) -> "HistoryDataset":
        """Sort by timestamp and re-rank to 1..len (``drift_t`` is re-ranked too)."""
        ordered = sorted(instances, key=lambda i: i.timestamp)
        new_drift = None
        if drift_t is not None:
            later = [rank for rank, inst in enumerate(ordered, start=1) if inst.timestamp >= drift_t]
            new_drift = later[0] if later else None
        return cls(tuple(inst.with_timestamp(r) for r, inst in enumerate(ordered, start=1)),
                   tuple(names), new_drift)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, t: int) -> HistoryInstance:
        """Instance with timestamp ``t`` (1-based)."""
        if not 1 <= t <= len(self.instances):
            raise IndexError(t)
        return self.instances[t - 1]

    @property
    def all_stops(self) -> frozenset[int]:
        out: set[int] = set()
        for inst in self.instances:
            out |= inst.stops
        return frozenset(out)

    @property
    def mu(self) -> int:
        """Number of distinct stops including the depot."""
        return len(self.all_stops) + 1

    def name_of(self, stop: int) -> str:
        return self.names[stop] if self.names else str(stop)

    def prefix(self, k: int) -> "HistoryDataset":
        """The first ``k`` instances (t <= k)."""
        drift = self.drift_t if self.drift_t is not None and self.drift_t <= k else None
        return HistoryDataset(self.instances[:k], self.names, drift)

    def reversed(self) -> "HistoryDataset":
        """Reverse the time ranking; the drift marker moves to the mirrored boundary."""
        h = len(self.instances)
        insts = tuple(inst.with_timestamp(h + 1 - inst.timestamp) for inst in reversed(self.instances))
        drift = None if self.drift_t is None else h + 2 - self.drift_t
        if drift is not None and not 1 <= drift <= h:
            drift = None
        return HistoryDataset(insts, self.names, drift)

    def group_by_weekday(self) -> dict[int | None, "HistoryDataset"]:
        groups: dict[int | None, list[HistoryInstance]] = {}
        for inst in self.instances:
            groups.setdefault(inst.weekday, []).append(inst)
        return {
            wd: HistoryDataset.from_instances(insts, self.names)
            for wd, insts in sorted(groups.items(), key=lambda kv: (kv[0] is None, kv[0] or 0))
        }

    def without_demands(self) -> "HistoryDataset":
        return HistoryDataset(tuple(i.without_demands() for i in self.instances), self.names, self.drift_t)
