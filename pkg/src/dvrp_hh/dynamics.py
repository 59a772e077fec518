"""Time-slice simulation of a working day.

The day ``[0, workday_end]`` is cut into ``n_ts`` equal slices.  At each slice
start the instance is frozen into a static problem (committed route prefixes
plus the known, still-free requests), a solver improves a plan, and vehicles
then execute that plan up to the next boundary.  Vehicles wait at their last
committed stop until the plan sends them on; a stop becomes committed once the
vehicle has to leave for it before the next boundary, and a vehicle already
driving is never diverted.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Protocol, Sequence

import numpy as np

from .domain import (TIME_EPS, FeasibilityReport, ProblemInstance, Request, Solution,
                     check_feasibility)
from .local_search import greedy_insert

log = logging.getLogger(__name__)

DEFAULT_SLICES = 25


class InfeasiblePlanError(ValueError):
    def __init__(self, report: FeasibilityReport):
        super().__init__(f"infeasible plan: {report}")
        self.report = report


@dataclass(frozen=True)
class SliceClock:
    slice_count: int
    workday_end: float
    current_slice: int = 0

    def __post_init__(self):
        if self.slice_count < 1:
            raise ValueError("slice_count must be >= 1")
        if not 0 <= self.current_slice <= self.slice_count:
            raise ValueError("current_slice out of range")

    def boundary(self, j: int) -> float:
        return j * self.workday_end / self.slice_count

    @property
    def time(self) -> float:
        return self.boundary(self.current_slice)

    @property
    def next_time(self) -> float:
        return self.boundary(self.current_slice + 1)

    @property
    def is_last(self) -> bool:
        return self.current_slice >= self.slice_count - 1

    def tick(self) -> "SliceClock":
        return replace(self, current_slice=self.current_slice + 1)


@dataclass(frozen=True)
class CommitmentState:
    """Per-vehicle committed prefix and where/when the vehicle is free next.

    ``positions`` are node indices (0 = depot); ``committed_lengths`` is the
    distance already driven from the depot through the prefix.
    """

    prefixes: tuple[tuple[int, ...], ...]
    positions: tuple[int, ...]
    ready_times: tuple[float, ...]
    remaining_capacity: tuple[float, ...]
    committed_lengths: tuple[float, ...]

    @classmethod
    def initial(cls, instance: ProblemInstance) -> "CommitmentState":
        m = instance.fleet.vehicle_count
        return cls(((),) * m, (0,) * m, (0.0,) * m,
                   (float(instance.fleet.capacity),) * m, (0.0,) * m)

    @property
    def vehicle_count(self) -> int:
        return len(self.prefixes)

    @cached_property
    def committed_ids(self) -> frozenset[int]:
        return frozenset(r for p in self.prefixes for r in p)

    def location(self, v: int, instance: ProblemInstance) -> tuple[float, float]:
        x, y = instance.coords[self.positions[v]]
        return float(x), float(y)

    def used_vehicles(self) -> int:
        """One past the highest vehicle index holding a committed stop."""
        used = [v for v, p in enumerate(self.prefixes) if p]
        return used[-1] + 1 if used else 0


@dataclass(frozen=True)
class FrozenSnapshot:
    time: float
    free_requests: tuple[Request, ...]
    commitment: CommitmentState
    instance: ProblemInstance
    slice_index: int = 0

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return self.instance.nodes(r.id for r in self.free_requests)

    @cached_property
    def start_nodes(self) -> np.ndarray:
        return np.asarray(self.commitment.positions, dtype=np.int64)

    @cached_property
    def start_times(self) -> np.ndarray:
        return np.maximum(np.asarray(self.commitment.ready_times, float), self.time)

    @cached_property
    def capacity_left(self) -> np.ndarray:
        return np.asarray(self.commitment.remaining_capacity, float)

    @cached_property
    def committed_lengths(self) -> np.ndarray:
        return np.asarray(self.commitment.committed_lengths, float)

    @property
    def free_volume(self) -> float:
        return float(sum(r.volume for r in self.free_requests))

    def committed_solution(self) -> Solution:
        return Solution.build(self.commitment.prefixes, self.instance)

    def solution_from_suffixes(self, suffixes: Sequence[Sequence[int]]) -> Solution:
        """Full routes: committed prefix of each vehicle followed by its suffix ids."""
        routes = []
        for v, prefix in enumerate(self.commitment.prefixes):
            tail = tuple(suffixes[v]) if v < len(suffixes) else ()
            routes.append(prefix + tail)
        return Solution.build(routes, self.instance)


def freeze(instance: ProblemInstance, state: CommitmentState, time: float,
           slice_index: int = 0) -> FrozenSnapshot:
    """Known, uncommitted requests at ``time``, ordered by (arrival, id)."""
    taken = state.committed_ids
    free = sorted((r for r in instance.requests
                   if r.arrival_time <= time + TIME_EPS and r.id not in taken),
                  key=lambda r: (r.arrival_time, r.id))
    return FrozenSnapshot(time, tuple(free), state, instance, slice_index)


def _pad_routes(plan: Solution, m: int) -> list[tuple[int, ...]]:
    routes = list(plan.routes)[:m]
    return routes + [()] * (m - len(routes))


def commit(plan: Solution, state: CommitmentState, instance: ProblemInstance,
           now: float, boundary: float | None) -> CommitmentState:
    """Execute ``plan`` from ``now`` until ``boundary`` (None: to completion)."""
    d = instance.dist
    sp = instance.fleet.speed
    serv = instance.service_times
    vol = instance.volumes
    prefixes, pos, ready, cap, clen = (list(state.prefixes), list(state.positions),
                                       list(state.ready_times),
                                       list(state.remaining_capacity),
                                       list(state.committed_lengths))
    for v, route in enumerate(_pad_routes(plan, state.vehicle_count)):
        suffix = route[len(prefixes[v]):]
        if not suffix:
            continue
        t = max(ready[v], now)
        for rid in suffix:
            if boundary is not None and t >= boundary:
                break
            node = instance.index_of[rid]
            start = t + d[pos[v], node] / sp
            clen[v] += d[pos[v], node]
            t = start + serv[node]
            prefixes[v] = prefixes[v] + (rid,)
            pos[v] = node
            ready[v] = t
            cap[v] -= vol[node]
    cap = [max(c, 0.0) for c in cap]
    return CommitmentState(tuple(prefixes), tuple(pos), tuple(ready), tuple(cap), tuple(clen))


def advance(clock: SliceClock, plan: Solution, state: CommitmentState,
            instance: ProblemInstance, strict: bool = True
            ) -> tuple[CommitmentState, FrozenSnapshot]:
    """Simulate ``plan`` across the current slice and freeze the next one.

    On the last slice every remaining planned stop is committed.  With
    ``strict`` an infeasible plan raises :class:`InfeasiblePlanError` and
    nothing changes.
    """
    now = clock.time
    if strict:
        report = check_feasibility(plan, instance, now, state)
        if not report.ok:
            raise InfeasiblePlanError(report)
    boundary = None if clock.is_last else clock.next_time
    new_state = commit(plan, state, instance, now, boundary)
    nxt = clock.tick()
    return new_state, freeze(instance, new_state, nxt.time, nxt.current_slice)


class Solver(Protocol):
    name: str

    def reset(self, instance: ProblemInstance, seed: int) -> None: ...

    def optimize(self, snapshot: FrozenSnapshot, budget: int) -> Solution: ...


def repair(plan: Solution, snapshot: FrozenSnapshot) -> Solution:
    """Greedy reinsertion of requests that make ``plan`` infeasible."""
    instance, state, now = snapshot.instance, snapshot.commitment, snapshot.time
    m = state.vehicle_count
    routes = [list(r) for r in _pad_routes(plan, m)]
    for v in range(m):
        if tuple(routes[v][:len(state.prefixes[v])]) != state.prefixes[v]:
            routes[v] = list(state.prefixes[v]) + [r for r in routes[v]
                                                   if r not in state.committed_ids]
    seen: set[int] = set()
    pending: list[int] = []
    for v in range(m):
        keep = []
        for rid in routes[v]:
            if rid in seen:
                continue
            seen.add(rid)
            keep.append(rid)
        routes[v] = keep
    sol = Solution.build(routes, instance)
    report = check_feasibility(sol, instance, now, state)
    bad = sorted({x.vehicle for x in report.violations
                  if x.kind in ("capacity", "time") and x.vehicle is not None})
    for v in bad:
        plen = len(state.prefixes[v])
        while len(routes[v]) > plen:
            pending.append(routes[v].pop())
            trial = Solution.build(routes, instance)
            if not any(x.vehicle == v and x.kind in ("capacity", "time")
                       for x in check_feasibility(trial, instance, now, state).violations):
                break
    allowed = {r.id for r in snapshot.free_requests}
    present = {rid for r in routes for rid in r}
    pending += sorted(allowed - present - set(pending))
    sol = Solution.build(routes, instance)
    for rid in pending:
        sol = greedy_insert(rid, sol, instance, state, now)
    return sol


@dataclass
class DayResult:
    solution: Solution
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    failed: bool = False
    report: FeasibilityReport = FeasibilityReport()
    state: CommitmentState | None = None

    @property
    def cost(self) -> float:
        return self.solution.total_length


def slice_budgets(budget: int, n_slices: int) -> list[int]:
    base, rem = divmod(int(budget), n_slices)
    return [base + rem] + [base] * (n_slices - 1)


def run_day(instance: ProblemInstance, solver: Solver, budget: int,
            n_slices: int = DEFAULT_SLICES, seed: int = 0) -> DayResult:
    """Solve one day: freeze, optimize, execute, repeat; return the served routes."""
    clock = SliceClock(n_slices, instance.workday_end)
    state = CommitmentState.initial(instance)
    snapshot = freeze(instance, state, clock.time, 0)
    solver.reset(instance, seed)
    budgets = slice_budgets(budget, n_slices)
    trace = []
    failed = False
    for j in range(n_slices):
        if snapshot.free_requests:
            plan = solver.optimize(snapshot, budgets[j])
        else:
            plan = snapshot.committed_solution()
        report = check_feasibility(plan, instance, snapshot.time, state)
        if not report.ok:
            log.info("slice %d: repairing plan (%s)", j, report)
            plan = repair(plan, snapshot)
            report = check_feasibility(plan, instance, snapshot.time, state)
            if not report.ok:
                log.warning("slice %d: plan unrepairable (%s)", j, report)
                failed = True
        trace.append((j, snapshot.time, plan.total_length))
        state, snapshot = advance(clock, plan, state, instance, strict=False)
        clock = clock.tick()
    final = Solution.build(state.prefixes, instance)
    report = check_feasibility(final, instance, instance.workday_end, state)
    if not report.ok:
        failed = True
    return DayResult(final, trace, failed, report, state)


def trace_csv(trace: Sequence[tuple[int, float, float]]) -> str:
    buf = io.StringIO()
    buf.write("slice,time,best_cost\n")
    for j, t, c in trace:
        buf.write(f"{j},{t:.6f},{c:.6f}\n")
    return buf.getvalue()
