import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvrp_hh.pso import (Swarm, SwarmConfig, evaluate, init_swarm, minimize_continuous,
                         minimize_discrete, step_continuous, step_discrete)

SPHERE_SEEDS = range(10)


def sphere(X):
    return (X ** 2).sum(axis=1)


def test_config_validation():
    for kw in ({"particle_count": 1}, {"inertia": -0.1}, {"social": -1},
               {"topology": "star"}, {"topology": "ring", "ring_k": 0}):
        with pytest.raises(ValueError):
            SwarmConfig(**kw)


def test_zero_weights_freeze_positions(rng):
    cfg = SwarmConfig(inertia=0, cognitive=0, social=0)
    x0 = rng.random((5, 3))
    sw = init_swarm(x0, sphere, cfg, rng.random((5, 3)), batch=True)
    step_continuous(sw, sphere, rng, batch=True)
    assert np.array_equal(sw.x, x0)


def test_lone_particle_at_its_best_stays(rng):
    cfg = SwarmConfig(particle_count=2)
    x0 = np.array([[1.0, 2.0], [1.0, 2.0]])
    sw = init_swarm(x0, sphere, cfg, batch=True)
    for _ in range(20):
        step_continuous(sw, sphere, rng, batch=True)
    assert np.array_equal(sw.x, x0)


def test_discrete_mod_addition(rng):
    # all weight on inertia: velocity carried unchanged, x' = (x + v) mod 3
    cfg = SwarmConfig(inertia=1, cognitive=0, social=0)
    sw = init_swarm(np.array([[2, 1], [0, 0]]), lambda p: 0.0, cfg,
                    velocities=np.array([[2, 2], [0, 0]]))
    step_discrete(sw, 3, lambda p: 0.0, rng)
    assert sw.x[0].tolist() == [1, 0]


def test_discrete_unit_modulus(rng):
    sw = init_swarm(np.zeros((4, 3), dtype=int), lambda p: 0.0, SwarmConfig(particle_count=4))
    for _ in range(5):
        step_discrete(sw, 1, lambda p: 0.0, rng, turbulence=0.5)
        assert not sw.x.any()


def test_discrete_bad_modulus(rng):
    sw = init_swarm(np.zeros((2, 2), dtype=int), lambda p: 0.0, SwarmConfig(particle_count=2))
    with pytest.raises(ValueError):
        step_discrete(sw, 0, lambda p: 0.0, rng)
    with pytest.raises(ValueError):
        step_discrete(sw, 3, lambda p: 0.0, rng, turbulence=1.5)


def test_hamming_optimum_found():
    target = np.array([1, 0, 1, 1])
    found = 0
    for seed in range(10):
        sw = minimize_discrete(lambda x: int((x != target).sum()), 4, 2, 500, SwarmConfig(seed=seed))
        assert sw.evaluations <= 500
        found += sw.best()[1] == 0
    assert found >= 9


def test_sphere_converges():
    hits = 0
    for seed in SPHERE_SEEDS:
        sw = minimize_continuous(sphere, 10, -5.12, 5.12, 50_000, SwarmConfig(seed=seed), batch=True)
        assert sw.evaluations <= 50_000
        hits += sw.best()[1] < 1e-3
    assert hits >= 9


def test_non_finite_is_infinite(caplog):
    vals = evaluate(np.array([[0.0], [1.0], [2.0]]), lambda p: [np.nan, np.inf, 3.0][int(p[0])])
    assert vals.tolist() == [np.inf, np.inf, 3.0]
    assert "non-finite" in caplog.text


def test_swarm_survives_nan_fitness(rng):
    def f(X):
        out = sphere(X)
        out[X[:, 0] > 0] = np.nan
        return out
    sw = minimize_continuous(f, 3, -1, 1, 2000, SwarmConfig(seed=2), batch=True)
    assert np.isfinite(sw.best()[1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), m=st.integers(1, 9), n=st.integers(1, 8),
       w=st.tuples(*[st.floats(0, 3)] * 3), turb=st.floats(0, 1),
       ring=st.booleans())
def test_discrete_positions_stay_in_range(seed, m, n, w, turb, ring):
    rng = np.random.default_rng(seed)
    cfg = SwarmConfig(particle_count=6, inertia=w[0], cognitive=w[1], social=w[2],
                      topology="ring" if ring else "global")
    target = rng.integers(0, m, n)
    fit = lambda X: (X != target).sum(axis=1).astype(float)
    sw = init_swarm(rng.integers(0, m, (6, n)), fit, cfg, batch=True)
    prev = sw.pbest_f.copy()
    for _ in range(10_000 // 6 // 30 + 20):
        step_discrete(sw, m, fit, rng, batch=True, turbulence=turb)
        assert sw.x.min() >= 0 and sw.x.max() < m
        assert sw.v.min() >= 0 and sw.v.max() < m
        assert (sw.pbest_f <= prev).all()
        prev = sw.pbest_f.copy()


def test_discrete_bounds_long_run():
    rng = np.random.default_rng(99)
    total = 0
    while total < 10_000:
        m = int(rng.integers(1, 7))
        n = int(rng.integers(1, 6))
        cfg = SwarmConfig(particle_count=4, inertia=rng.random() * 2,
                          cognitive=rng.random() * 2, social=rng.random() * 2)
        sw = init_swarm(rng.integers(0, m, (4, n)), lambda X: X.sum(axis=1), cfg, batch=True)
        for _ in range(100):
            step_discrete(sw, m, lambda X: X.sum(axis=1), rng, batch=True,
                          turbulence=float(rng.random()))
            assert 0 <= sw.x.min() and sw.x.max() < m
        total += 100


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), ring=st.booleans(), k=st.integers(1, 3))
def test_personal_and_neighbourhood_bests(seed, ring, k):
    rng = np.random.default_rng(seed)
    cfg = SwarmConfig(particle_count=8, topology="ring" if ring else "global", ring_k=k)
    sw = init_swarm(rng.normal(size=(8, 4)) * 3, sphere, cfg, batch=True)
    seen = sw.pbest_f.copy()
    for _ in range(15):
        prev = sw.pbest_f.copy()
        step_continuous(sw, sphere, rng, batch=True)
        seen = np.minimum(seen, sphere(sw.x))
        assert (sw.pbest_f <= prev).all()
        assert np.array_equal(sw.pbest_f, seen)
        for i in range(sw.size):
            assert sw.nbest_f[i] == sw.pbest_f[sw.neighbours(i)].min()


def test_velocity_clamp(rng):
    cfg = SwarmConfig(velocity_clamp=0.1, particle_count=5)
    sw = init_swarm(rng.normal(size=(5, 3)) * 10, sphere, cfg, batch=True)
    step_continuous(sw, sphere, rng, batch=True)
    assert np.abs(sw.v).max() <= 0.1


def _trajectory(seed, discrete):
    cfg = SwarmConfig(seed=seed, particle_count=7, topology="ring")
    if discrete:
        sw = minimize_discrete(lambda X: X.sum(axis=1), 6, 5, 300, cfg, batch=True, turbulence=0.1)
    else:
        sw = minimize_continuous(sphere, 6, -1, 1, 300, cfg, batch=True)
    return sw.x.tobytes() + sw.pbest_x.tobytes() + sw.v.tobytes()


@pytest.mark.parametrize("discrete", [False, True])
def test_determinism(discrete):
    assert _trajectory(5, discrete) == _trajectory(5, discrete)
    assert _trajectory(5, discrete) != _trajectory(6, discrete)


def test_batch_and_scalar_fitness_agree():
    cfg = SwarmConfig(seed=3, particle_count=5)
    a = minimize_continuous(sphere, 4, -1, 1, 200, cfg, batch=True)
    b = minimize_continuous(lambda p: float((p ** 2).sum()), 4, -1, 1, 200, cfg)
    assert np.array_equal(a.x, b.x)


def test_swarm_shape_accessors():
    sw = init_swarm(np.zeros((3, 2)), sphere, SwarmConfig(particle_count=3), batch=True)
    assert isinstance(sw, Swarm) and sw.size == 3 and sw.dims == 2 and sw.evaluations == 3
