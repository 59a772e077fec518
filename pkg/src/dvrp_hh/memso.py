"""Discrete-PSO solver over request-to-vehicle assignment vectors.

A genome holds one vehicle residue per free request.  Decoding inserts each
vehicle's requests greedily after its committed prefix (in genome order) and
polishes the open remainder with 2-opt; fitness is the total route length
plus a violation penalty.  Between slices the whole population is adapted:
newly committed requests leave the genomes and newly arrived ones are placed
on the vehicle where each particle's decoded routes absorb them cheapest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .domain import Solution
from .dynamics import FrozenSnapshot
from .pso import Swarm, SwarmConfig, evaluate, step_discrete


@dataclass(frozen=True)
class MemsoConfig:
    swarm: SwarmConfig = SwarmConfig()
    swarms: int = 1
    penalty_weight: float | None = None  # None: 10 x instance bounding-box diagonal
    vehicle_slack: int = 2
    turbulence: float = 0.5  # expected velocity resets per particle per step
    sweep_seeds: int = 8
    seed_mutation: float = 0.05

    def __post_init__(self):
        if self.swarms < 1:
            raise ValueError("swarms must be >= 1")
        if self.turbulence < 0 or self.sweep_seeds < 0:
            raise ValueError("turbulence and sweep_seeds must be >= 0")
        if not 0 <= self.seed_mutation <= 1:
            raise ValueError("seed_mutation must be in [0, 1]")


@dataclass
class MemsoState:
    free_ids: tuple[int, ...]
    m: int
    swarms: list[Swarm]
    blocked: frozenset[int] = frozenset()
    stale: bool = False  # personal bests need re-evaluation on the current snapshot
    history: list = field(default_factory=list)


def penalty_weight(snapshot: FrozenSnapshot, config: MemsoConfig | None = None) -> float:
    if config is not None and config.penalty_weight is not None:
        return config.penalty_weight
    return 10.0 * max(snapshot.instance.diagonal, 1.0)


def vehicle_modulus(snapshot: FrozenSnapshot, slack: int, previous: int = 0) -> int:
    inst = snapshot.instance
    need = math.ceil(snapshot.free_volume / inst.fleet.capacity - 1e-12) + slack
    m = max(previous, snapshot.commitment.used_vehicles(), need, 1)
    return min(m, inst.fleet.vehicle_count)


def _kernel_args(snapshot: FrozenSnapshot, m: int, penalty: float):
    inst = snapshot.instance
    return (snapshot.free_nodes, m, inst.dist, inst.volumes, inst.service_times,
            float(inst.fleet.speed), float(inst.workday_end),
            snapshot.start_nodes[:m].copy(), snapshot.start_times[:m].copy(),
            snapshot.capacity_left[:m].copy(), snapshot.committed_lengths[:m].copy(),
            float(penalty))


def _fitness_fn(snapshot: FrozenSnapshot, m: int, penalty: float):
    args = _kernel_args(snapshot, m, penalty)

    def batch(genomes):
        return K.memso_fitness_batch(np.ascontiguousarray(genomes, dtype=np.int64), *args)
    return batch


def memso_fitness(genome, snapshot: FrozenSnapshot, m: int | None = None,
                  penalty: float | None = None) -> float:
    genome = np.asarray(genome, dtype=np.int64)
    if len(genome) != len(snapshot.free_requests):
        raise ValueError("genome length must equal the number of free requests")
    if m is None:
        m = snapshot.commitment.vehicle_count
    if penalty is None:
        penalty = penalty_weight(snapshot)
    return float(_fitness_fn(snapshot, m, penalty)(genome[None, :])[0])


def _decode_paths(genome, snapshot: FrozenSnapshot, m: int, penalty: float):
    args = _kernel_args(snapshot, m, penalty)
    paths = np.empty((m, len(snapshot.free_nodes) + 2), dtype=np.int64)
    counts = np.empty(m, dtype=np.int64)
    value = K.memso_decode(np.asarray(genome, dtype=np.int64), *args[:-1], args[-1],
                           paths, counts)
    return paths, counts, value


def decode(genome, snapshot: FrozenSnapshot, m: int | None = None) -> Solution:
    if m is None:
        m = snapshot.commitment.vehicle_count
    paths, counts, _ = _decode_paths(genome, snapshot, m, penalty_weight(snapshot))
    ids = snapshot.instance.ids
    suffixes = [[int(ids[n]) for n in paths[v, 1:counts[v] - 1]] for v in range(m)]
    return snapshot.solution_from_suffixes(suffixes)


def _greedy_extend(genome: np.ndarray, new_nodes: np.ndarray, snapshot: FrozenSnapshot,
                   m: int, penalty: float) -> np.ndarray:
    """Append a vehicle choice for each of ``new_nodes`` by cheapest insertion."""
    inst = snapshot.instance
    n_old = len(genome)
    sub = FrozenSnapshot(snapshot.time, snapshot.free_requests[:n_old], snapshot.commitment,
                         inst, snapshot.slice_index)
    paths, counts, _ = _decode_paths(genome, sub, m, penalty)
    width = paths.shape[1] + len(new_nodes)
    grown = np.zeros((m, width), dtype=np.int64)
    grown[:, :paths.shape[1]] = paths
    loads = np.zeros(m)
    for j, v in enumerate(genome):
        loads[v] += inst.volumes[sub.free_nodes[j]]
    out = list(genome)
    start_times = snapshot.start_times[:m].copy()
    cap_left = snapshot.capacity_left[:m].copy()
    for node in new_nodes:
        v = K.cheapest_vehicle(grown, counts, loads, int(node), inst.dist, inst.volumes,
                               inst.service_times, float(inst.fleet.speed),
                               float(inst.workday_end), start_times, cap_left, m)
        K.insert_cheapest(inst.dist, grown[v], counts[v], int(node))
        counts[v] += 1
        loads[v] += inst.volumes[node]
        out.append(v)
    return np.asarray(out, dtype=np.int64)


def greedy_genome(snapshot: FrozenSnapshot, m: int, order=None) -> np.ndarray:
    """Sequential cheapest insertion of every free request.

    ``order`` is a permutation of free-request positions (default: free order);
    the result is still indexed by free order.
    """
    n = len(snapshot.free_nodes)
    order = np.arange(n) if order is None else np.asarray(order)
    sub = FrozenSnapshot(snapshot.time, tuple(snapshot.free_requests[j] for j in order),
                         snapshot.commitment, snapshot.instance, snapshot.slice_index)
    g = _greedy_extend(np.zeros(0, dtype=np.int64), sub.free_nodes, sub, m,
                       penalty_weight(snapshot))
    out = np.empty(n, dtype=np.int64)
    out[order] = g
    return out


def sweep_orders(snapshot: FrozenSnapshot, count: int) -> list[np.ndarray]:
    """Free requests sorted by polar angle around the depot, from ``count`` start angles."""
    inst = snapshot.instance
    xy = inst.coords[snapshot.free_nodes] - inst.coords[0]
    ang = np.arctan2(xy[:, 1], xy[:, 0])
    return [np.argsort(np.mod(ang - a, 2 * np.pi), kind="stable")
            for a in np.linspace(0, 2 * np.pi, count, endpoint=False)]


def seed_genomes(snapshot: FrozenSnapshot, m: int, sweeps: int) -> np.ndarray:
    """Constructive starting points: free-order insertion, then angular sweeps."""
    orders = [None] + sweep_orders(snapshot, sweeps)
    return np.array([greedy_genome(snapshot, m, o) for o in orders], dtype=np.int64)


def init_state(snapshot: FrozenSnapshot, config: MemsoConfig,
               rng: np.random.Generator) -> MemsoState:
    """Population of constructive seeds and mutated copies; not yet evaluated."""
    m = vehicle_modulus(snapshot, config.vehicle_slack)
    n = len(snapshot.free_requests)
    P = config.swarm.particle_count
    seeds = seed_genomes(snapshot, m, config.sweep_seeds)
    swarms = []
    for _ in range(config.swarms):
        x = seeds[np.arange(P) % len(seeds)]
        hit = rng.random((P, n)) < config.seed_mutation
        hit[:min(P, len(seeds))] = False
        x[hit] = rng.integers(0, m, size=int(hit.sum()))
        f = np.full(P, np.inf)
        swarms.append(Swarm(config.swarm, x, np.zeros_like(x), x.copy(), f))
    return MemsoState(tuple(r.id for r in snapshot.free_requests), m, swarms,
                      snapshot.commitment.committed_ids, stale=True)


def memso_transfer(state: MemsoState, snapshot: FrozenSnapshot,
                   config: MemsoConfig = MemsoConfig()) -> MemsoState:
    """Adapt the population to a newer snapshot of the same day."""
    new_ids = tuple(r.id for r in snapshot.free_requests)
    if set(new_ids) == set(state.free_ids) and state.blocked == snapshot.commitment.committed_ids:
        return state
    still_free = set(new_ids)
    keep = [j for j, rid in enumerate(state.free_ids) if rid in still_free]
    kept_ids = [state.free_ids[j] for j in keep]
    known = set(kept_ids)
    added = [r for r in snapshot.free_requests if r.id not in known]
    # order the snapshot so retained columns come first, new requests after
    order = {rid: i for i, rid in enumerate(kept_ids + [r.id for r in added])}
    reqs = tuple(sorted(snapshot.free_requests, key=lambda r: order[r.id]))
    snap = FrozenSnapshot(snapshot.time, reqs, snapshot.commitment, snapshot.instance,
                          snapshot.slice_index)
    m = vehicle_modulus(snap, config.vehicle_slack, state.m)
    penalty = penalty_weight(snap, config)
    new_nodes = snap.instance.nodes(r.id for r in added)

    swarms = []
    for sw in state.swarms:
        x = np.empty((sw.size, len(reqs)), dtype=np.int64)
        px = np.empty_like(x)
        v = np.zeros_like(x)
        for i in range(sw.size):
            x[i] = _greedy_extend(sw.x[i, keep], new_nodes, snap, m, penalty)
            px[i] = _greedy_extend(sw.pbest_x[i, keep], new_nodes, snap, m, penalty)
            v[i, :len(keep)] = sw.v[i, keep]
        swarms.append(Swarm(sw.config, x, v, px, np.full(sw.size, np.inf)))
    return MemsoState(tuple(r.id for r in reqs), m, swarms,
                      state.blocked | snapshot.commitment.committed_ids, stale=True,
                      history=state.history)


def _broadcast_best(state: MemsoState):
    if len(state.swarms) < 2:
        return
    vals = [sw.pbest_f.min() for sw in state.swarms]
    src = state.swarms[int(np.argmin(vals))]
    best = src.pbest_x[int(np.argmin(src.pbest_f))]
    for sw in state.swarms:
        if sw is src:
            continue
        worst = int(np.argmax(sw.pbest_f))
        sw.pbest_x[worst] = best
        sw.x[worst] = best


def memso_optimize(state: MemsoState | None, snapshot: FrozenSnapshot, budget: int,
                   config: MemsoConfig = MemsoConfig(),
                   rng: np.random.Generator | None = None
                   ) -> tuple[Solution, MemsoState]:
    """Spend ``budget`` fitness evaluations and return the best decoded plan."""
    rng = rng if rng is not None else np.random.default_rng(config.swarm.seed)
    P = config.swarm.particle_count
    per_swarm = budget // config.swarms
    if per_swarm < P:
        raise ValueError(f"budget {budget} below one evaluation per particle "
                         f"({P} x {config.swarms} swarms)")
    if state is None:
        state = init_state(snapshot, config, rng)
    else:
        state = memso_transfer(state, snapshot, config)
        snapshot = FrozenSnapshot(snapshot.time,
                                  tuple(snapshot.instance.request(i) for i in state.free_ids),
                                  snapshot.commitment, snapshot.instance,
                                  snapshot.slice_index)
    m = state.m
    fitness = _fitness_fn(snapshot, m, penalty_weight(snapshot, config))
    for sw in state.swarms:
        spent = 0
        if state.stale or not np.isfinite(sw.pbest_f).any():
            sw.pbest_f = evaluate(sw.pbest_x, fitness, batch=True)
            sw.evaluations = sw.size
            sw.refresh_neighbourhood()
            spent = sw.size
        turb = min(1.0, config.turbulence / max(len(state.free_ids), 1))
        while spent + sw.size <= per_swarm:
            step_discrete(sw, m, fitness, rng, batch=True, turbulence=turb)
            spent += sw.size
    state.stale = False
    _broadcast_best(state)
    vals = [sw.pbest_f.min() for sw in state.swarms]
    src = state.swarms[int(np.argmin(vals))]
    best = src.pbest_x[int(np.argmin(src.pbest_f))]
    state.history.append(float(min(vals)))
    return decode(best, snapshot, m), state


class MemsoSolver:
    name = "memso"

    def __init__(self, config: MemsoConfig = MemsoConfig()):
        self.config = config
        self.state: MemsoState | None = None
        self.rng = np.random.default_rng(config.swarm.seed)

    def reset(self, instance, seed: int) -> None:
        self.state = None
        self.rng = np.random.default_rng(seed)

    def optimize(self, snapshot: FrozenSnapshot, budget: int) -> Solution:
        sol, self.state = memso_optimize(self.state, snapshot, budget, self.config, self.rng)
        return sol
