"""2-opt route improvement, cheapest insertion and a nearest-neighbour baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import _kernels as K
from .domain import TIME_EPS, ProblemInstance, Request, Solution, route_length

if TYPE_CHECKING:
    from .dynamics import CommitmentState


@dataclass(frozen=True)
class RouteView:
    ids: tuple[int, ...]
    length: float

    @classmethod
    def of(cls, ids: Sequence[int], instance: ProblemInstance) -> "RouteView":
        ids = tuple(int(i) for i in ids)
        return cls(ids, route_length(ids, instance))

    def __len__(self):
        return len(self.ids)


def two_opt(route: RouteView | Sequence[int], instance: ProblemInstance,
            locked: int = 0) -> RouteView:
    """Improve a depot-closed route with first-improvement 2-opt.

    The first ``locked`` stops stay in place; the rest is optimized as an open
    path from the last locked stop back to the depot.  The result is 2-opt
    stable: no single segment reversal shortens it.
    """
    if not isinstance(route, RouteView):
        route = RouteView.of(route, instance)
    nodes = instance.nodes(route.ids)
    prefix, suffix = nodes[:locked], nodes[locked:]
    start = prefix[-1] if len(prefix) else 0
    path = np.concatenate(([start], suffix, [0])).astype(np.int64)
    moves = K.two_opt_path(instance.dist, path, len(path)) if len(path) > 3 else 0
    if moves == 0:
        return route
    ids = route.ids[:locked] + tuple(int(i) for i in instance.ids[path[1:-1]])
    return RouteView.of(ids, instance)


def is_two_opt_stable(route: Sequence[int], instance: ProblemInstance,
                      tol: float = 1e-10) -> bool:
    """True when no segment reversal of the closed route shortens it."""
    nodes = [0] + list(instance.nodes(route)) + [0]
    d = instance.dist
    for i in range(len(nodes) - 3):
        for j in range(i + 2, len(nodes) - 1):
            a, b, c, e = nodes[i], nodes[i + 1], nodes[j], nodes[j + 1]
            if d[a, c] + d[b, e] - d[a, b] - d[c, e] < -tol:
                return False
    return True


@dataclass(frozen=True)
class Insertion:
    vehicle: int
    position: int
    delta: float
    feasible: bool


def _vehicle_start(v: int, locked, instance: ProblemInstance, now: float):
    if locked is None or v >= len(locked.prefixes):
        return (), 0, now, instance.fleet.capacity
    return (locked.prefixes[v], locked.positions[v], max(locked.ready_times[v], now),
            locked.remaining_capacity[v])


def best_insertion(request: Request | int, sol: Solution, instance: ProblemInstance,
                   locked: "CommitmentState | None" = None, now: float = 0.0) -> Insertion:
    """Cheapest (vehicle, index) slot for ``request`` after committed prefixes.

    Feasible slots (capacity and return-to-depot time) are preferred; ties go
    to the lowest vehicle then lowest index.  An unused vehicle is considered
    if the fleet has one to spare.  When nothing is feasible the request goes
    to the least-loaded vehicle at its cheapest slot.
    """
    rid = request.id if isinstance(request, Request) else int(request)
    node = instance.index_of[rid]
    d = instance.dist
    vol = instance.volumes
    serv = instance.service_times
    sp = instance.fleet.speed
    routes = list(sol.routes)
    if len(routes) < instance.fleet.vehicle_count:
        routes.append(())

    best: Insertion | None = None
    fallback: list[tuple[float, int, int, float]] = []
    for v, route in enumerate(routes):
        prefix, start, t0, cap_left = _vehicle_start(v, locked, instance, now)
        nodes = list(instance.nodes(route))
        suffix = nodes[len(prefix):]
        load = float(vol[suffix].sum()) if suffix else 0.0
        path = [start] + suffix + [0]
        cap_ok = load + vol[node] <= cap_left + 1e-12
        local_best = None
        for p in range(1, len(path)):
            delta = d[path[p - 1], node] + d[node, path[p]] - d[path[p - 1], path[p]]
            feasible = cap_ok
            if feasible:
                t = t0
                seq = path[:p] + [node] + path[p:]
                for a, b in zip(seq[:-1], seq[1:]):
                    t += d[a, b] / sp + serv[b]
                feasible = t <= instance.workday_end + TIME_EPS
            idx = len(prefix) + p - 1
            if local_best is None or delta < local_best[0] - K.IMPROVE_EPS:
                local_best = (delta, idx)
            if feasible and (best is None or delta < best.delta - K.IMPROVE_EPS):
                best = Insertion(v, idx, float(delta), True)
        fallback.append((load, v, local_best[1], float(local_best[0])))
    if best is not None:
        return best
    load, v, idx, delta = min(fallback, key=lambda t: (t[0], t[1]))
    return Insertion(v, idx, delta, False)


def greedy_insert(request: Request | int, sol: Solution, instance: ProblemInstance,
                  locked: "CommitmentState | None" = None, now: float = 0.0) -> Solution:
    rid = request.id if isinstance(request, Request) else int(request)
    if rid in set(sol.request_ids):
        raise ValueError(f"request {rid} already in solution")
    ins = best_insertion(rid, sol, instance, locked, now)
    routes = [list(r) for r in sol.routes]
    while len(routes) <= ins.vehicle:
        routes.append([])
    routes[ins.vehicle].insert(ins.position, rid)
    return Solution.build(routes, instance)


def nearest_neighbor_baseline(instance: ProblemInstance) -> Solution:
    """Capacity- and time-aware nearest-neighbour tours, each polished by 2-opt.

    All requests are treated as known; vehicles start empty at the depot at
    time zero.  A request that fits no route on its own ends up alone on a
    fresh vehicle.
    """
    d = instance.dist
    vol = instance.volumes
    serv = instance.service_times
    sp = instance.fleet.speed
    cap = instance.fleet.capacity
    T = instance.workday_end
    left = set(range(1, instance.n + 1))
    routes = []
    while left:
        cur, load, t, route = 0, 0.0, 0.0, []
        while True:
            cands = [j for j in left
                     if load + vol[j] <= cap + 1e-12
                     and t + d[cur, j] / sp + serv[j] + d[j, 0] / sp <= T + TIME_EPS]
            if not cands:
                break
            j = min(cands, key=lambda j: (d[cur, j], j))
            t += d[cur, j] / sp + serv[j]
            load += vol[j]
            route.append(j)
            left.discard(j)
            cur = j
        if not route:
            j = min(left)
            route.append(j)
            left.discard(j)
        ids = [int(instance.ids[j]) for j in route]
        routes.append(two_opt(ids, instance).ids)
    return Solution.build(routes, instance)
