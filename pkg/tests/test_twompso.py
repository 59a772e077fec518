import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvrp_hh.domain import check_feasibility, route_length
from dvrp_hh.dynamics import CommitmentState, freeze, run_day
from dvrp_hh.instance_io import generate_instance
from dvrp_hh.local_search import nearest_neighbor_baseline
from dvrp_hh.pso import SwarmConfig
from dvrp_hh.twompso import (TwoMpsoConfig, TwoMpsoSolver, TwoMpsoState, decode_division,
                             estimate_vehicles, phase1_fitness, phase2_fitness,
                             two_mpso_optimize, two_mpso_transfer)

from conftest import make_instance


def _snap(inst, t=0.0, state=None):
    return freeze(inst, state or CommitmentState.initial(inst), t)


def _naive_division(centers, k, pts, vols, cap_left):
    """Nearest-center assignment in order of distance, spilling on capacity."""
    cs = [(centers[2 * c], centers[2 * c + 1]) for c in range(len(centers) // 2)]

    def sq(c, p):
        return (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2
    near = []
    for p in pts:
        ds = [sq(c, p) for c in cs]
        best = min(range(len(cs)), key=lambda c: (ds[c], c))
        near.append((best, ds[best]))
    residual = list(cap_left)
    assign, flagged = [None] * len(pts), [False] * len(pts)
    for j in sorted(range(len(pts)), key=lambda j: (near[j][1], j)):
        v = near[j][0] // k
        if vols[j] <= residual[v] + 1e-12:
            assign[j] = v
        else:
            ok = [c for c in range(len(cs)) if vols[j] <= residual[c // k] + 1e-12]
            if ok:
                assign[j] = min(ok, key=lambda c: (sq(cs[c], pts[j]), c)) // k
            else:
                assign[j], flagged[j] = v, True
        residual[assign[j]] -= vols[j]
    return assign, flagged


def test_division_matches_rule_oracle():
    rng = np.random.default_rng(77)
    for _ in range(200):
        pts = rng.random((8, 2)) * 10
        vols = rng.integers(5, 50, 8).astype(float)
        k, m_hat = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        inst = make_instance(pts, volumes=vols, capacity=60, vehicles=4)
        genome = rng.random(2 * k * m_hat) * 10
        got, flags = decode_division(genome, _snap(inst), k, return_flags=True)
        want, wflags = _naive_division(genome, k, [tuple(p) for p in pts], vols, [60.0] * m_hat)
        assert got.tolist() == want
        assert flags.tolist() == wflags


def test_division_separable_clusters():
    rng = np.random.default_rng(1)
    left = rng.normal((-10, 0), 0.5, (6, 2))
    right = rng.normal((10, 0), 0.5, (6, 2))
    inst = make_instance(np.vstack([left, right]), vehicles=2)
    assign = decode_division(np.array([-10.0, 0, 10, 0]), _snap(inst), 1)
    assert assign.tolist() == [0] * 6 + [1] * 6


def test_division_identical_points_spill():
    inst = make_instance([(3, 3)] * 5, volumes=[30] * 5, capacity=100, vehicles=3)
    # both centers equidistant: the first-listed wins until its vehicle is full
    assign, flags = decode_division([3.0, 4, 3, 2], _snap(inst), 1, return_flags=True)
    assert assign.tolist() == [0, 0, 0, 1, 1]
    assert not flags.any()


def test_division_flags_when_nothing_fits():
    inst = make_instance([(1, 0), (2, 0)], volumes=[80, 80], capacity=100, vehicles=1)
    assign, flags = decode_division([0.0, 0.0], _snap(inst), 1, return_flags=True)
    assert assign.tolist() == [0, 0]
    assert flags.tolist() == [False, True]


def test_division_bad_length():
    inst = make_instance([(1, 0)])
    with pytest.raises(ValueError):
        decode_division([0.0, 0, 1], _snap(inst), 1)


def test_phase1_zero_free_is_committed():
    inst = make_instance([(3, 0), (3, 4)], vehicles=2)
    d = inst.dist
    st0 = CommitmentState(((1, 2), ()), (2, 0), (8.0, 0.0), (98.0, 100.0),
                          (d[0, 1] + d[1, 2], 0.0))
    snap = freeze(inst, st0, 10.0)
    assert phase1_fitness([0.0, 0, 1, 1], snap, k=1) == pytest.approx(route_length([1, 2], inst))


@settings(max_examples=20, deadline=None)
@given(genome=st.lists(st.floats(-100, 100), min_size=2, max_size=2))
def test_phase1_single_request(genome):
    inst = make_instance([(3, 4)], vehicles=1)
    assert phase1_fitness(genome, _snap(inst), k=1) == pytest.approx(10.0)


def test_phase1_is_pure(rng):
    inst = make_instance(rng.random((12, 2)) * 10, vehicles=3)
    snap = _snap(inst)
    for _ in range(20):
        g = rng.random(12) * 10
        assert phase1_fitness(g, snap, k=2, seed=5) == phase1_fitness(g, snap, k=2, seed=5)


def test_phase1_far_request_increases_cost(rng):
    for _ in range(20):
        pts = rng.random((7, 2)) * 10
        small = make_instance(pts, vehicles=2, capacity=1000)
        big = make_instance(np.vstack([pts, [[500.0, 500.0]]]), vehicles=2, capacity=1000)
        g = rng.random(8) * 10
        a = phase1_fitness(g, _snap(small), k=2, penalty=100.0)
        b = phase1_fitness(g, _snap(big), k=2, penalty=100.0)
        assert b > a


def test_phase2_two_stops():
    inst = make_instance([(0, 3), (4, 3)])
    snap = _snap(inst)
    nodes = [1, 2]
    assert phase2_fitness([0.1, 0.9], nodes, 0, 0.0, snap) == pytest.approx(12.0)
    assert phase2_fitness([0.9, 0.1], nodes, 0, 0.0, snap) == pytest.approx(
        route_length([2, 1], inst))


def test_phase2_ties_use_id_order():
    inst = make_instance([(0, 3), (4, 3), (4, 0)])
    snap = _snap(inst)
    assert phase2_fitness([0.5, 0.5, 0.5], [1, 2, 3], 0, 0.0, snap) == pytest.approx(
        route_length([1, 2, 3], inst))


def test_phase2_six_stops_bounded_by_exhaustive(rng):
    inst = make_instance(rng.random((6, 2)) * 10)
    snap = _snap(inst)
    opt = min(route_length(p, inst) for p in itertools.permutations(range(1, 7)))
    genomes = rng.random((200, 6))
    vals = [phase2_fitness(g, list(range(1, 7)), 0, 0.0, snap) for g in genomes]
    assert min(vals) >= opt - 1e-9
    for g, v in zip(genomes[:20], vals):
        assert v == pytest.approx(route_length(list(np.argsort(g, kind="stable") + 1), inst))


def _ten_request(seed):
    rng = np.random.default_rng(1000 + seed)
    return make_instance(rng.random((10, 2)) * 100 - 50, volumes=[15] * 10, capacity=100,
                         vehicles=2)


def test_beats_baseline_on_small_static():
    wins = 0
    for seed in range(10):
        inst = _ten_request(seed)
        cfg = TwoMpsoConfig(phase1=SwarmConfig(seed=seed))
        sol, _ = two_mpso_optimize(None, _snap(inst), 10_000, cfg, seed=seed)
        assert check_feasibility(sol, inst).ok
        wins += sol.total_length <= nearest_neighbor_baseline(inst).total_length + 1e-9
    assert wins >= 8


def test_phase2_keeps_the_division(rng):
    inst = make_instance(rng.random((15, 2)) * 10, vehicles=3, volumes=[20] * 15)
    snap = _snap(inst)
    sol, state = two_mpso_optimize(None, snap, 3000, TwoMpsoConfig(), seed=2)
    assign = decode_division(state.centers, snap, state.k)
    for v, route in enumerate(sol.routes[:state.m_hat]):
        assert sorted(route) == sorted(r.id for r, a in zip(snap.free_requests, assign) if a == v)
    assert sol.total_length <= state.history[-1] + 1e-9


def test_single_vehicle_is_a_tsp():
    inst = make_instance(np.random.default_rng(4).random((8, 2)) * 10, vehicles=1)
    cfg = TwoMpsoConfig(k=1)
    sol, state = two_mpso_optimize(None, _snap(inst), 4000, cfg)
    assert state.m_hat == 1
    assert sorted(sol.routes[0]) == list(range(1, 9))
    opt = min(route_length(p, inst) for p in itertools.permutations(range(1, 9)))
    assert sol.total_length <= opt * 1.05


def test_budget_too_small():
    with pytest.raises(ValueError, match="budget"):
        two_mpso_optimize(None, _snap(_ten_request(0)), 59, TwoMpsoConfig())


def test_same_seed_same_output():
    inst = _ten_request(5)
    runs = [two_mpso_optimize(None, _snap(inst), 3000, TwoMpsoConfig(), seed=3)[0]
            for _ in range(2)]
    assert runs[0] == runs[1]


def test_config_validation():
    for kw in ({"k": 0}, {"phi": 0}, {"phi": 1.5}):
        with pytest.raises(ValueError):
            TwoMpsoConfig(**kw)
    with pytest.raises(ValueError):
        TwoMpsoState(np.zeros(2), {}, 1, 0)


class TestTransfer:
    def test_nothing_changed(self, rng):
        inst = make_instance([(1, 0), (0, 1)], vehicles=2)
        snap = _snap(inst)
        state = TwoMpsoState(np.zeros(4), {1: 0.2, 2: 0.3}, 1, 1, frozenset({1, 2}))
        assert two_mpso_transfer(state, snap, rng) is state

    def test_m_hat_grows_one_per_call(self, rng):
        inst = make_instance(np.ones((6, 2)), volumes=[50] * 6, capacity=100, vehicles=5,
                             arrivals=[0, 0, 100, 100, 100, 100])
        first = _snap(inst)
        state = TwoMpsoState(np.arange(2.0), {1: 0.1, 2: 0.2}, 1, 1, frozenset({1, 2}))
        later = _snap(inst, 100.0)
        assert estimate_vehicles(later) == 3
        sizes, cur = [], state
        for _ in range(4):
            cur = two_mpso_transfer(cur, later, rng)
            sizes.append(cur.m_hat)
            assert np.array_equal(cur.centers[:2], state.centers)
            assert len(cur.centers) == 2 * cur.m_hat
        assert sizes == [2, 3, 3, 3]
        assert set(cur.ranks) == {1, 2, 3, 4, 5, 6}
        assert cur.ranks[1] == 0.1
        assert first.free_volume == 100

    def test_new_ranks_in_unit_interval(self, rng):
        inst = make_instance(rng.random((5, 2)), vehicles=2, arrivals=[0, 0, 50, 50, 50])
        state = TwoMpsoState(np.zeros(4), {1: 0.2, 2: 0.3}, 2, 1, frozenset({1, 2}))
        new = two_mpso_transfer(state, _snap(inst, 60.0), rng)
        assert all(0 <= new.ranks[i] < 1 for i in (3, 4, 5))


def test_dynamic_day_feasible():
    inst = generate_instance(30, seed=8, dynamic_fraction=0.5, service_time=10)
    cfg = TwoMpsoConfig(phase1=SwarmConfig(particle_count=10),
                        phase2=SwarmConfig(particle_count=5))
    res = run_day(inst, TwoMpsoSolver(cfg), budget=5000, seed=1, n_slices=10)
    assert not res.failed
    assert check_feasibility(res.solution, inst).ok
