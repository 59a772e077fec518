"""Problem and solution types for the dynamic VRP with a homogeneous fleet.

Everything here is immutable after construction.  Distances are Euclidean in
raw instance coordinates and travel time is ``distance / speed``.  Internally
the depot is node 0 and request ``instance.requests[i]`` is node ``i + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .dynamics import CommitmentState

TIME_EPS = 1e-9


class ValidationError(ValueError):
    """Input data violates a domain invariant."""


class UnknownRequestError(KeyError):
    def __init__(self, request_id):
        super().__init__(request_id)
        self.request_id = request_id

    def __str__(self):
        return f"unknown request id {self.request_id!r}"


@dataclass(frozen=True)
class Request:
    id: int
    location: tuple[float, float]
    volume: float
    service_time: float = 0.0
    arrival_time: float = 0.0


@dataclass(frozen=True)
class FleetSpec:
    capacity: float
    speed: float = 1.0
    vehicle_count: int = 1

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValidationError(f"capacity must be positive, got {self.capacity}")
        if not self.speed > 0:
            raise ValidationError(f"speed must be positive, got {self.speed}")
        if self.vehicle_count < 1:
            raise ValidationError(f"vehicle_count must be >= 1, got {self.vehicle_count}")


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    depot_location: tuple[float, float]
    fleet: FleetSpec
    requests: tuple[Request, ...]
    workday_end: float
    cutoff_time: float | None = None
    bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        if self.cutoff_time is None:
            object.__setattr__(self, "cutoff_time", self.workday_end / 2.0)
        if not self.workday_end > 0:
            raise ValidationError("workday_end must be positive")
        if self.cutoff_time > self.workday_end:
            raise ValidationError(
                f"cutoff_time {self.cutoff_time} exceeds workday_end {self.workday_end}")
        seen = set()
        for r in self.requests:
            if r.id in seen:
                raise ValidationError(f"duplicate request id {r.id}")
            seen.add(r.id)
            if r.volume < 0 or r.volume > self.fleet.capacity:
                raise ValidationError(
                    f"request {r.id}: volume {r.volume} outside [0, {self.fleet.capacity}]")
            if r.service_time < 0:
                raise ValidationError(f"request {r.id}: negative service time")
            if r.arrival_time < 0:
                raise ValidationError(f"request {r.id}: negative arrival time")
            if r.arrival_time > self.cutoff_time:
                raise ValidationError(
                    f"request {r.id}: arrival {r.arrival_time} after cut-off {self.cutoff_time}")
            if self.bounds is not None:
                x0, y0, x1, y1 = self.bounds
                x, y = r.location
                if not (x0 <= x <= x1 and y0 <= y <= y1):
                    raise ValidationError(f"request {r.id}: location {r.location} out of bounds")

    @property
    def n(self) -> int:
        return len(self.requests)

    @cached_property
    def index_of(self) -> dict[int, int]:
        """Request id -> node index (depot is 0)."""
        return {r.id: i + 1 for i, r in enumerate(self.requests)}

    @cached_property
    def coords(self) -> np.ndarray:
        pts = [self.depot_location] + [r.location for r in self.requests]
        return np.asarray(pts, dtype=float).reshape(-1, 2)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.array([0.0] + [r.volume for r in self.requests])

    @cached_property
    def service_times(self) -> np.ndarray:
        return np.array([0.0] + [r.service_time for r in self.requests])

    @cached_property
    def arrival_times(self) -> np.ndarray:
        return np.array([0.0] + [r.arrival_time for r in self.requests])

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([-1] + [r.id for r in self.requests], dtype=np.int64)

    @cached_property
    def dist(self) -> np.ndarray:
        c = self.coords
        diff = c[:, None, :] - c[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))

    @cached_property
    def diagonal(self) -> float:
        c = self.coords
        return float(np.hypot(*(c.max(axis=0) - c.min(axis=0))))

    def request(self, request_id: int) -> Request:
        try:
            return self.requests[self.index_of[request_id] - 1]
        except KeyError:
            raise UnknownRequestError(request_id) from None

    def nodes(self, route: Iterable[int]) -> np.ndarray:
        idx = self.index_of
        out = []
        for rid in route:
            try:
                out.append(idx[rid])
            except KeyError:
                raise UnknownRequestError(rid) from None
        return np.asarray(out, dtype=np.int64)

    def static(self) -> "ProblemInstance":
        """Copy of this instance with every request known at time zero."""
        reqs = tuple(Request(r.id, r.location, r.volume, r.service_time, 0.0)
                     for r in self.requests)
        return ProblemInstance(self.name, self.depot_location, self.fleet, reqs,
                               self.workday_end, self.cutoff_time, self.bounds)


def route_length(route: Sequence[int], instance: ProblemInstance) -> float:
    """Closed tour length depot -> route[0] -> ... -> route[-1] -> depot."""
    nodes = instance.nodes(route)
    if len(nodes) == 0:
        return 0.0
    d = instance.dist
    path = np.concatenate(([0], nodes, [0]))
    return float(d[path[:-1], path[1:]].sum())


@dataclass(frozen=True)
class Solution:
    routes: tuple[tuple[int, ...], ...]
    total_length: float = field(default=math.nan, compare=False)

    @classmethod
    def build(cls, routes: Iterable[Iterable[int]], instance: ProblemInstance) -> "Solution":
        routes = tuple(tuple(int(r) for r in route) for route in routes)
        return cls(routes, sum(route_length(r, instance) for r in routes))

    def replace_route(self, vehicle: int, route: Sequence[int],
                      instance: ProblemInstance) -> "Solution":
        routes = list(self.routes)
        routes[vehicle] = tuple(route)
        return Solution.build(routes, instance)

    @property
    def request_ids(self) -> list[int]:
        return [rid for route in self.routes for rid in route]


def solution_cost(sol: Solution, instance: ProblemInstance) -> float:
    return float(sum(route_length(r, instance) for r in sol.routes))


@dataclass(frozen=True)
class Violation:
    kind: str  # duplicate | missing | unexpected | capacity | time | committed
    vehicle: int | None = None
    request_id: int | None = None
    amount: float = 0.0

    def __str__(self):
        parts = [self.kind]
        if self.vehicle is not None:
            parts.append(f"vehicle={self.vehicle}")
        if self.request_id is not None:
            parts.append(f"request={self.request_id}")
        if self.amount:
            parts.append(f"amount={self.amount:.6g}")
        return " ".join(parts)


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __str__(self):
        if self.ok:
            return "feasible"
        return "; ".join(str(v) for v in self.violations)


def vehicle_schedule_end(start_node: int, start_time: float, nodes: Sequence[int],
                         instance: ProblemInstance) -> float:
    """Time the vehicle is back at the depot after serving ``nodes`` in order."""
    d = instance.dist
    sp = instance.fleet.speed
    serv = instance.service_times
    t = start_time
    prev = start_node
    for v in nodes:
        t += d[prev, v] / sp + serv[v]
        prev = v
    return t + d[prev, 0] / sp


def check_feasibility(sol: Solution, instance: ProblemInstance, now: float = 0.0,
                      committed: "CommitmentState | None" = None) -> FeasibilityReport:
    """List every constraint violation of ``sol``; an empty report means feasible.

    Requests expected in the solution are those arrived by ``now`` plus any
    committed ones.  The schedule of each route's uncommitted part starts from
    the vehicle's committed position at ``max(ready_time, now)``; a vehicle
    with nothing left to serve heads home at its ready time.
    """
    out: list[Violation] = []
    idx = instance.index_of
    counts: dict[int, int] = {}
    for route in sol.routes:
        for rid in route:
            counts[rid] = counts.get(rid, 0) + 1
    for rid, c in counts.items():
        if rid not in idx:
            out.append(Violation("unexpected", request_id=rid))
        elif c > 1:
            out.append(Violation("duplicate", request_id=rid, amount=c))
    expected = {r.id for r in instance.requests if r.arrival_time <= now + TIME_EPS}
    if committed is not None:
        expected |= {rid for p in committed.prefixes for rid in p}
    for rid in sorted(expected - counts.keys()):
        out.append(Violation("missing", request_id=rid))

    cap = instance.fleet.capacity
    if committed is not None and len(committed.prefixes) > len(sol.routes):
        for v in range(len(sol.routes), len(committed.prefixes)):
            if committed.prefixes[v]:
                out.append(Violation("committed", vehicle=v))
    if len(sol.routes) > instance.fleet.vehicle_count:
        out.append(Violation("fleet", amount=len(sol.routes) - instance.fleet.vehicle_count))
    for v, route in enumerate(sol.routes):
        known = [rid for rid in route if rid in idx]
        nodes = [idx[rid] for rid in known]
        load = float(instance.volumes[nodes].sum()) if nodes else 0.0
        if load > cap * (1 + 1e-12):
            out.append(Violation("capacity", vehicle=v, amount=load - cap))
        prefix: tuple[int, ...] = ()
        start_node, ready = 0, 0.0
        if committed is not None and v < len(committed.prefixes):
            prefix = committed.prefixes[v]
            start_node = committed.positions[v]
            ready = committed.ready_times[v]
        if tuple(route[:len(prefix)]) != tuple(prefix):
            out.append(Violation("committed", vehicle=v))
            continue
        suffix = nodes[len(prefix):]
        t0 = max(ready, now) if suffix else ready
        end = vehicle_schedule_end(start_node, t0, suffix, instance)
        if end > instance.workday_end + TIME_EPS:
            out.append(Violation("time", vehicle=v, amount=end - instance.workday_end))
    return FeasibilityReport(tuple(out))
