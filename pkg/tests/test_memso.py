import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvrp_hh.domain import check_feasibility, route_length
from dvrp_hh.dynamics import CommitmentState, advance, freeze, SliceClock
from dvrp_hh.local_search import nearest_neighbor_baseline
from dvrp_hh.memso import (MemsoConfig, MemsoSolver, decode, init_state, memso_fitness,
                           memso_optimize, memso_transfer, penalty_weight, vehicle_modulus)
from dvrp_hh.pso import SwarmConfig

from conftest import make_instance


def _snap(inst, t=0.0, state=None):
    return freeze(inst, state or CommitmentState.initial(inst), t)


# a plain-Python restatement of the decode pipeline, used as the oracle

def _naive_insert(path, node, pts):
    best, pos = None, None
    for p in range(1, len(path)):
        delta = (math.dist(pts[path[p - 1]], pts[node]) + math.dist(pts[node], pts[path[p]])
                 - math.dist(pts[path[p - 1]], pts[path[p]]))
        if best is None or delta < best - 1e-10:
            best, pos = delta, p
    path.insert(pos, node)


def _naive_two_opt(path, pts):
    def d(a, b):
        return math.dist(pts[a], pts[b])
    while True:
        for i in range(len(path) - 3):
            for j in range(i + 2, len(path) - 1):
                a, b, c, e = path[i], path[i + 1], path[j], path[j + 1]
                if d(a, c) + d(b, e) - d(a, b) - d(c, e) < -1e-10:
                    path[i + 1:j + 1] = path[i + 1:j + 1][::-1]
                    break
            else:
                continue
            break
        else:
            return


def _naive_fitness(genome, pts, vols, cap, service, workday, m, penalty):
    paths = [[0, 0] for _ in range(m)]
    loads = [0.0] * m
    for j, v in enumerate(genome):
        _naive_insert(paths[v], j + 1, pts)
        loads[v] += vols[j]
    total = 0.0
    for v in range(m):
        if len(paths[v]) > 3:
            _naive_two_opt(paths[v], pts)
        length = sum(math.dist(pts[a], pts[b]) for a, b in zip(paths[v], paths[v][1:]))
        viol = max(0.0, loads[v] - cap)
        if len(paths[v]) > 2:
            end = length + service * (len(paths[v]) - 2)
            viol += max(0.0, end - workday)
        total += length + penalty * viol
    return total


@pytest.mark.parametrize("seed", range(5))
def test_fitness_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    pts = [tuple(p) for p in rng.random((4, 2)) * 10]
    vols = [float(v) for v in rng.integers(20, 60, 4)]
    inst = make_instance(pts, volumes=vols, capacity=100, vehicles=2, service=1.0, workday=40)
    snap = _snap(inst)
    pen = penalty_weight(snap)
    allpts = [(0.0, 0.0)] + pts
    for genome in itertools.product(range(2), repeat=4):
        got = memso_fitness(genome, snap, m=2)
        want = _naive_fitness(genome, allpts, vols, 100, 1.0, 40, 2, pen)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-9), genome


def test_zero_free_requests_is_committed_length():
    inst = make_instance([(3, 0), (3, 4)], vehicles=2)
    d = inst.dist
    st0 = CommitmentState(((1, 2), ()), (2, 0), (8.0, 0.0), (98.0, 100.0),
                          (d[0, 1] + d[1, 2], 0.0))
    snap = freeze(inst, st0, 10.0)
    assert snap.free_requests == ()
    assert memso_fitness([], snap) == pytest.approx(route_length([1, 2], inst))


def test_symmetric_genomes_equal():
    inst = make_instance([(1, 0), (-1, 0)], vehicles=2)
    snap = _snap(inst)
    assert memso_fitness([0, 1], snap, m=2) == memso_fitness([1, 0], snap, m=2)


def test_genome_length_checked():
    inst = make_instance([(1, 0), (-1, 0)], vehicles=2)
    with pytest.raises(ValueError):
        memso_fitness([0], _snap(inst))


def test_penalty_dominates():
    inst = make_instance([(1, 0), (2, 0)], volumes=[60, 60], capacity=100, vehicles=2)
    snap = _snap(inst)
    assert memso_fitness([0, 0], snap, m=2) > 10 * memso_fitness([0, 1], snap, m=2)
    assert penalty_weight(snap) == pytest.approx(10 * 2.0)


def test_modulus_bounds():
    inst = make_instance(np.ones((6, 2)), volumes=[50] * 6, capacity=100, vehicles=10)
    assert vehicle_modulus(_snap(inst), 2) == 5
    assert vehicle_modulus(_snap(inst), 2, previous=7) == 7
    assert vehicle_modulus(_snap(inst), 20) == 10


def _ten_request(seed):
    rng = np.random.default_rng(1000 + seed)
    return make_instance(rng.random((10, 2)) * 100 - 50, volumes=[15] * 10, capacity=100,
                         vehicles=2)


def test_beats_baseline_on_small_static():
    wins = 0
    for seed in range(10):
        inst = _ten_request(seed)
        cfg = MemsoConfig(swarm=SwarmConfig(seed=seed))
        sol, _ = memso_optimize(None, _snap(inst), 10_000, cfg)
        assert check_feasibility(sol, inst).ok
        wins += sol.total_length <= nearest_neighbor_baseline(inst).total_length + 1e-9
    assert wins >= 8


def test_budget_equal_particle_count():
    inst = _ten_request(0)
    cfg = MemsoConfig(swarm=SwarmConfig(particle_count=10))
    snap = _snap(inst)
    x = init_state(snap, cfg, np.random.default_rng(7)).swarms[0].x
    sol, state = memso_optimize(None, snap, 10, cfg, np.random.default_rng(7))
    assert state.swarms[0].evaluations == 10
    vals = [memso_fitness(g, snap, m=state.m) for g in x]
    assert sol.total_length == pytest.approx(min(vals))
    assert sol == decode(x[int(np.argmin(vals))], snap, state.m)


def test_budget_below_particle_count():
    inst = _ten_request(0)
    with pytest.raises(ValueError, match="budget"):
        memso_optimize(None, _snap(inst), 39, MemsoConfig())


def test_same_seed_same_solution():
    inst = _ten_request(3)
    runs = [memso_optimize(None, _snap(inst), 2000, MemsoConfig(swarm=SwarmConfig(seed=4)))[0]
            for _ in range(2)]
    assert runs[0] == runs[1]


def test_multiple_swarms_run():
    inst = _ten_request(2)
    cfg = MemsoConfig(swarm=SwarmConfig(seed=1, particle_count=10), swarms=3)
    sol, state = memso_optimize(None, _snap(inst), 3000, cfg)
    assert len(state.swarms) == 3
    assert check_feasibility(sol, inst).ok


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(0, 9))
def test_decode_contains_every_request_once(seed, n):
    rng = np.random.default_rng(seed)
    inst = make_instance(rng.random((n, 2)) * 10, vehicles=3)
    snap = _snap(inst)
    genome = rng.integers(0, 3, n)
    sol = decode(genome, snap, 3)
    assert sorted(sol.request_ids) == list(range(1, n + 1))
    assert memso_fitness(genome, snap, 3) == memso_fitness(genome, snap, 3)


class TestTransfer:
    def _state(self, inst, genomes):
        snap = _snap(inst)
        cfg = MemsoConfig(swarm=SwarmConfig(particle_count=len(genomes)), sweep_seeds=0)
        state = init_state(snap, cfg, np.random.default_rng(0))
        sw = state.swarms[0]
        sw.x[:] = genomes
        sw.pbest_x[:] = genomes
        return state

    def test_no_change_is_identity(self):
        inst = make_instance([(1, 0), (0, 1)], vehicles=2)
        state = self._state(inst, [[0, 1], [1, 0]])
        assert memso_transfer(state, _snap(inst, 5.0)) is state

    def test_single_vehicle_forced(self):
        inst = make_instance([(1, 0), (0, 1), (2, 2)], vehicles=1, arrivals=[0, 0, 100])
        state = self._state(inst, [[0, 0], [0, 0]])
        new = memso_transfer(state, _snap(inst, 100.0))
        assert new.free_ids == (1, 2, 3)
        assert (new.swarms[0].x[:, 2] == 0).all()
        assert (new.swarms[0].v[:, 2] == 0).all()

    def test_new_request_on_passing_route(self):
        # vehicle 1 serves (0,10); the new request at (0,5) lies on its way out:
        # detour 0 there against 11.18 + 5 - 10 = 6.18 on vehicle 0's route to (10,0)
        inst = make_instance([(10, 0), (0, 10), (0, 5)], vehicles=2, arrivals=[0, 0, 50])
        state = self._state(inst, [[0, 1], [1, 0]])
        new = memso_transfer(state, _snap(inst, 50.0))
        x = new.swarms[0].x
        assert x[0].tolist() == [0, 1, 1]
        assert x[1].tolist() == [1, 0, 0]
        assert new.stale

    def test_committed_requests_leave_genomes(self):
        inst = make_instance([(10, 0), (0, 10), (0, 5)], vehicles=2, arrivals=[0, 0, 50])
        state = self._state(inst, [[0, 1], [1, 0]])
        plan = decode([0, 1], _snap(inst), 2)
        clock = SliceClock(25, inst.workday_end)
        committed, snap = advance(clock, plan, CommitmentState.initial(inst), inst)
        assert committed.committed_ids
        new = memso_transfer(state, snap)
        assert set(new.free_ids).isdisjoint(committed.committed_ids)
        assert new.blocked == committed.committed_ids
        assert new.swarms[0].x.shape[1] == len(snap.free_requests)


def test_solver_keeps_committed_prefixes_over_a_day():
    from dvrp_hh.dynamics import run_day
    from dvrp_hh.instance_io import generate_instance
    inst = generate_instance(30, seed=8, dynamic_fraction=0.5, service_time=10)
    res = run_day(inst, MemsoSolver(MemsoConfig(swarm=SwarmConfig(particle_count=10))),
                  budget=5000, seed=1, n_slices=10)
    assert not res.failed
    assert check_feasibility(res.solution, inst).ok
