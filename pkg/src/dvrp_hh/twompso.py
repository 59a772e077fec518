"""Two-phase continuous-PSO solver.

Phase one searches cluster centers (``k`` per vehicle, flattened into one real
vector) that induce a capacity-aware division of the free requests; each
division is scored by 2-opt tours built from a genome-seeded random order.
Phase two runs one swarm per vehicle over random-key rank vectors to order
that vehicle's requests.  The best centers and ranks carry over to the next
slice, growing by one random vehicle's worth of centers when demand outgrows
the current estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .domain import Solution
from .dynamics import FrozenSnapshot
from .memso import penalty_weight as _penalty
from .pso import SwarmConfig, init_swarm, step_continuous


@dataclass(frozen=True)
class TwoMpsoConfig:
    k: int = 2
    phi: float = 0.7
    m_hat_slack: int = 1
    phase1: SwarmConfig = SwarmConfig()
    phase2: SwarmConfig = SwarmConfig(particle_count=20)
    penalty_weight: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.phi <= 1:
            raise ValueError("phi must be in (0, 1]")


@dataclass
class TwoMpsoState:
    centers: np.ndarray
    ranks: dict[int, float]
    k: int
    m_hat: int
    free_ids: frozenset[int] = frozenset()
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.k < 1 or self.m_hat < 1:
            raise ValueError("k and m_hat must be >= 1")


def _box(snapshot: FrozenSnapshot):
    inst = snapshot.instance
    known = [0] + [inst.index_of[r.id] for r in inst.requests
                   if r.arrival_time <= snapshot.time]
    pts = inst.coords[known]
    return pts.min(axis=0), pts.max(axis=0)


def random_centers(count: int, snapshot: FrozenSnapshot, rng: np.random.Generator) -> np.ndarray:
    lo, hi = _box(snapshot)
    return (lo + rng.random((count, 2)) * (hi - lo)).ravel()


def estimate_vehicles(snapshot: FrozenSnapshot, slack: int = 0) -> int:
    cap = snapshot.instance.fleet.capacity
    loaded = sum(1 for p in snapshot.commitment.prefixes if p)
    return math.ceil(snapshot.free_volume / cap - 1e-12) + loaded + slack


def _clamp_m_hat(m_hat: int, snapshot: FrozenSnapshot) -> int:
    m_hat = max(m_hat, snapshot.commitment.used_vehicles(), 1)
    return min(m_hat, snapshot.instance.fleet.vehicle_count)


def _common(snapshot: FrozenSnapshot, m_hat: int):
    s = snapshot
    return (s.start_nodes[:m_hat].copy(), s.start_times[:m_hat].copy(),
            s.capacity_left[:m_hat].copy(), s.committed_lengths[:m_hat].copy())


def decode_division(genome, snapshot: FrozenSnapshot, k: int,
                    return_flags: bool = False):
    """Vehicle index per free request (in snapshot order)."""
    genome = np.ascontiguousarray(genome, dtype=float)
    if len(genome) % (2 * k):
        raise ValueError("center genome length must be a multiple of 2k")
    m_hat = len(genome) // (2 * k)
    inst = snapshot.instance
    nf = len(snapshot.free_nodes)
    assign = np.empty(nf, dtype=np.int64)
    flagged = np.empty(nf, dtype=np.bool_)
    cap_left = np.full(m_hat, inst.fleet.capacity)
    n = min(m_hat, len(snapshot.capacity_left))
    cap_left[:n] = snapshot.capacity_left[:n]
    K.decode_division(genome, k, snapshot.free_nodes, inst.coords, inst.volumes, cap_left,
                      assign, flagged)
    return (assign, flagged) if return_flags else assign


def slice_seed(seed: int, snapshot: FrozenSnapshot) -> int:
    return int(K.splitmix64(np.uint64(seed) ^ np.uint64(snapshot.slice_index + 1)))


def _phase1_fn(snapshot: FrozenSnapshot, k: int, m_hat: int, penalty: float, seed: int):
    inst = snapshot.instance
    args = (k, snapshot.free_nodes, inst.coords, inst.dist, inst.volumes, inst.service_times,
            float(inst.fleet.speed), float(inst.workday_end), *_common(snapshot, m_hat),
            float(penalty), np.uint64(seed))

    def batch(genomes):
        return K.phase1_fitness_batch(np.ascontiguousarray(genomes, dtype=float), *args)
    return batch


def phase1_fitness(genome, snapshot: FrozenSnapshot, k: int = 2, seed: int = 0,
                   penalty: float | None = None) -> float:
    """Division cost of a center genome: 2-opt tours from a seeded random order.

    The random order depends only on (genome bytes, seed), so repeated
    evaluation is exact.
    """
    genome = np.asarray(genome, dtype=float)
    m_hat = len(genome) // (2 * k)
    if penalty is None:
        penalty = _penalty(snapshot)
    return float(_phase1_fn(snapshot, k, m_hat, penalty, seed)(genome[None, :])[0])


def _phase1_paths(genome, snapshot, k, m_hat, penalty, seed):
    inst = snapshot.instance
    nf = len(snapshot.free_nodes)
    assign = np.empty(nf, dtype=np.int64)
    flagged = np.empty(nf, dtype=np.bool_)
    paths = np.empty((m_hat, nf + 2), dtype=np.int64)
    counts = np.empty(m_hat, dtype=np.int64)
    g = np.ascontiguousarray(genome, dtype=float)
    # numba hands uint64 back as a Python int; rewrap before passing it on
    key = np.uint64(K.genome_seed(g, np.uint64(seed)))
    K.phase1_decode(g, k, snapshot.free_nodes, inst.coords, inst.dist, inst.volumes,
                    inst.service_times, float(inst.fleet.speed), float(inst.workday_end),
                    *_common(snapshot, m_hat), float(penalty), key,
                    assign, flagged, paths, counts)
    return paths, counts


def phase2_fitness(genome, nodes, start_node: int, start_time: float,
                   snapshot: FrozenSnapshot, penalty: float | None = None) -> float:
    """Length of the vehicle's route when ``nodes`` are visited by ascending rank.

    ``nodes`` must be sorted by request id so rank ties fall back to id order.
    """
    inst = snapshot.instance
    if penalty is None:
        penalty = _penalty(snapshot)
    g = np.asarray(genome, dtype=float)[None, :]
    return float(K.phase2_fitness_batch(g, np.asarray(nodes, dtype=np.int64), int(start_node),
                                        float(start_time), inst.dist, inst.service_times,
                                        float(inst.fleet.speed), float(inst.workday_end),
                                        float(penalty))[0])


def init_state(snapshot: FrozenSnapshot, config: TwoMpsoConfig,
               rng: np.random.Generator) -> TwoMpsoState:
    m_hat = _clamp_m_hat(estimate_vehicles(snapshot, config.m_hat_slack), snapshot)
    centers = random_centers(m_hat * config.k, snapshot, rng)
    ranks = {r.id: float(rng.random()) for r in snapshot.free_requests}
    return TwoMpsoState(centers, ranks, config.k, m_hat,
                        frozenset(r.id for r in snapshot.free_requests))


def two_mpso_transfer(state: TwoMpsoState, snapshot: FrozenSnapshot,
                      rng: np.random.Generator) -> TwoMpsoState:
    """Keep best centers and ranks; add one vehicle's centers if demand grew."""
    free = frozenset(r.id for r in snapshot.free_requests)
    centers = state.centers
    m_hat = state.m_hat
    fleet = snapshot.instance.fleet.vehicle_count
    if estimate_vehicles(snapshot) > m_hat and m_hat < fleet:
        m_hat += 1
        centers = np.concatenate([centers, random_centers(state.k, snapshot, rng)])
    while m_hat < min(snapshot.commitment.used_vehicles(), fleet):
        m_hat += 1
        centers = np.concatenate([centers, random_centers(state.k, snapshot, rng)])
    ranks = {rid: r for rid, r in state.ranks.items() if rid in free}
    for req in snapshot.free_requests:
        if req.id not in ranks:
            ranks[req.id] = float(rng.random())
    if m_hat == state.m_hat and free == state.free_ids:
        return state
    return TwoMpsoState(centers, ranks, state.k, m_hat, free, state.history)


def _greedy_centers(snapshot: FrozenSnapshot, k: int, m_hat: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Centers placed on the centroids of a sequential cheapest-insertion division."""
    from .memso import greedy_genome
    inst = snapshot.instance
    genome = greedy_genome(snapshot, m_hat)
    lo, hi = _box(snapshot)
    out = random_centers(m_hat * k, snapshot, rng).reshape(m_hat, k, 2)
    jitter = 0.01 * (hi - lo)
    for v in range(m_hat):
        pts = inst.coords[snapshot.free_nodes[genome == v]]
        if len(pts):
            c = pts.mean(axis=0)
            out[v] = c + jitter * (rng.random((k, 2)) - 0.5)
    return out.ravel()


def two_mpso_optimize(state: TwoMpsoState | None, snapshot: FrozenSnapshot, budget: int,
                      config: TwoMpsoConfig = TwoMpsoConfig(),
                      rng: np.random.Generator | None = None, seed: int = 0
                      ) -> tuple[Solution, TwoMpsoState]:
    rng = rng if rng is not None else np.random.default_rng(config.phase1.seed)
    P1 = config.phase1.particle_count
    P2 = config.phase2.particle_count
    if budget < P1 + P2:
        raise ValueError(f"budget {budget} below one sweep of each phase ({P1} + {P2})")
    fresh = state is None
    state = init_state(snapshot, config, rng) if fresh else \
        two_mpso_transfer(state, snapshot, rng)
    k, m_hat = state.k, state.m_hat
    penalty = _penalty(snapshot) if config.penalty_weight is None else config.penalty_weight
    seed1 = slice_seed(seed, snapshot)
    inst = snapshot.instance

    # phase 1: division
    b1 = max(P1, int(config.phi * budget))
    dims = 2 * k * m_hat
    lo, hi = _box(snapshot)
    span = np.maximum(hi - lo, 1e-9)
    lo_v, span_v = np.tile(lo, k * m_hat), np.tile(span, k * m_hat)
    x0 = lo_v + rng.random((P1, dims)) * span_v
    x0[0] = state.centers
    if fresh and P1 > 1:
        x0[1] = _greedy_centers(snapshot, k, m_hat, rng)
    v0 = (rng.random((P1, dims)) - 0.5) * span_v * 0.1
    cfg1 = config.phase1 if config.phase1.velocity_clamp is not None else \
        config.phase1.with_(velocity_clamp=float(span.max()))
    f1 = _phase1_fn(snapshot, k, m_hat, penalty, seed1)
    sw = init_swarm(x0, f1, cfg1, v0, batch=True)
    while sw.evaluations + sw.size <= b1:
        step_continuous(sw, f1, rng, batch=True)
    best_centers, best1 = sw.best()
    spent = sw.evaluations

    paths, counts = _phase1_paths(best_centers, snapshot, k, m_hat, penalty, seed1)

    # phase 2: per-vehicle ordering
    suffixes = []
    ids = inst.ids
    ranks = dict(state.ranks)
    todo = [v for v in range(m_hat) if counts[v] - 2 >= 2]
    b2 = max(budget - spent, 0)
    per_vehicle = b2 // len(todo) if todo else 0
    for v in range(m_hat):
        interior = paths[v, 1:counts[v] - 1]
        if v not in todo or per_vehicle < 2:
            suffixes.append([int(ids[n]) for n in interior])
            for pos, n in enumerate(interior):
                ranks[int(ids[n])] = (pos + 0.5) / len(interior)
            continue
        order_ids = sorted(int(ids[n]) for n in interior)
        nodes = inst.nodes(order_ids)
        n = len(nodes)
        pos_of = {int(node): p for p, node in enumerate(interior)}
        seeded = np.array([(pos_of[int(node)] + 0.5) / n for node in nodes])
        kept = np.array([ranks.get(rid, rng.random()) for rid in order_ids])
        P = min(P2, per_vehicle)
        x0 = rng.random((P, n))
        x0[0] = seeded
        if P > 1:
            x0[1] = kept
        cfg2 = config.phase2.with_(particle_count=max(P, 2))
        start, t0 = int(snapshot.start_nodes[v]), float(snapshot.start_times[v])
        args = (nodes, start, t0, inst.dist, inst.service_times, float(inst.fleet.speed),
                float(inst.workday_end), float(penalty))

        def f2(g, args=args):
            return K.phase2_fitness_batch(np.ascontiguousarray(g, dtype=float), *args)
        sw2 = init_swarm(x0, f2, cfg2, (rng.random((P, n)) - 0.5) * 0.1, batch=True)
        while sw2.evaluations + sw2.size <= per_vehicle:
            step_continuous(sw2, f2, rng, batch=True)
        best_ranks, _ = sw2.best()
        path = np.empty(n + 2, dtype=np.int64)
        K.rank_path(best_ranks, nodes, start, path)
        suffixes.append([int(ids[x]) for x in path[1:-1]])
        for rid, r in zip(order_ids, best_ranks):
            ranks[rid] = float(r)

    sol = snapshot.solution_from_suffixes(suffixes)
    new_state = TwoMpsoState(best_centers, ranks, k, m_hat,
                             frozenset(r.id for r in snapshot.free_requests),
                             state.history + [best1])
    return sol, new_state


class TwoMpsoSolver:
    name = "2mpso"

    def __init__(self, config: TwoMpsoConfig = TwoMpsoConfig()):
        self.config = config
        self.state: TwoMpsoState | None = None
        self.seed = config.phase1.seed
        self.rng = np.random.default_rng(self.seed)

    def reset(self, instance, seed: int) -> None:
        self.state = None
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def optimize(self, snapshot: FrozenSnapshot, budget: int) -> Solution:
        sol, self.state = two_mpso_optimize(self.state, snapshot, budget, self.config,
                                            self.rng, self.seed)
        return sol
