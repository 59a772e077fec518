"""Particle swarm optimization: continuous and modular-integer flavours.

Both flavours minimize.  A fitness is either a per-position callable or, with
``batch=True``, a callable mapping a ``(particles, dims)`` array to a vector of
values; batch mode exists so compiled fitness functions avoid per-call overhead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwarmConfig:
    particle_count: int = 40
    inertia: float = 0.7298
    cognitive: float = 1.4962
    social: float = 1.4962
    topology: str = "global"  # "global" or "ring"
    ring_k: int = 1
    velocity_clamp: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.particle_count < 2:
            raise ValueError("particle_count must be >= 2")
        if min(self.inertia, self.cognitive, self.social) < 0:
            raise ValueError("inertia, cognitive and social weights must be >= 0")
        if self.topology not in ("global", "ring"):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.topology == "ring" and self.ring_k < 1:
            raise ValueError("ring_k must be >= 1")

    def with_(self, **kw) -> "SwarmConfig":
        return SwarmConfig(**{**self.__dict__, **kw})


@dataclass
class Swarm:
    """Particle state as parallel arrays, one row per particle."""

    config: SwarmConfig
    x: np.ndarray
    v: np.ndarray
    pbest_x: np.ndarray
    pbest_f: np.ndarray
    nbest_x: np.ndarray = field(init=False)
    nbest_f: np.ndarray = field(init=False)
    evaluations: int = 0

    def __post_init__(self):
        self.refresh_neighbourhood()

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def dims(self) -> int:
        return self.x.shape[1]

    def best(self) -> tuple[np.ndarray, float]:
        i = int(np.argmin(self.pbest_f))
        return self.pbest_x[i].copy(), float(self.pbest_f[i])

    def neighbours(self, i: int) -> np.ndarray:
        if self.config.topology == "global":
            return np.arange(self.size)
        k = self.config.ring_k
        return np.arange(i - k, i + k + 1) % self.size

    def refresh_neighbourhood(self):
        if self.config.topology == "global":
            i = int(np.argmin(self.pbest_f))
            self.nbest_x = np.repeat(self.pbest_x[i:i + 1], self.size, axis=0)
            self.nbest_f = np.full(self.size, self.pbest_f[i])
            return
        self.nbest_x = np.empty_like(self.pbest_x)
        self.nbest_f = np.empty(self.size)
        for i in range(self.size):
            nb = self.neighbours(i)
            j = nb[int(np.argmin(self.pbest_f[nb]))]
            self.nbest_x[i] = self.pbest_x[j]
            self.nbest_f[i] = self.pbest_f[j]


def evaluate(positions: np.ndarray, fitness: Callable, batch: bool = False) -> np.ndarray:
    """Fitness values with non-finite results replaced by +inf."""
    if batch:
        vals = np.asarray(fitness(positions), dtype=float).copy()
    else:
        vals = np.array([float(fitness(p)) for p in positions])
    bad = ~np.isfinite(vals)
    if bad.any():
        log.warning("%d non-finite fitness values treated as +inf", int(bad.sum()))
        vals[bad] = np.inf
    return vals


def init_swarm(positions: np.ndarray, fitness: Callable, config: SwarmConfig,
               velocities: np.ndarray | None = None, batch: bool = False) -> Swarm:
    """Evaluate ``positions`` once and set up personal/neighbourhood bests."""
    x = np.array(positions, copy=True)
    v = np.zeros_like(x) if velocities is None else np.array(velocities, copy=True)
    f = evaluate(x, fitness, batch)
    return Swarm(config, x, v, x.copy(), f, evaluations=len(x))


def _update_bests(swarm: Swarm, f: np.ndarray):
    better = f < swarm.pbest_f
    swarm.pbest_x[better] = swarm.x[better]
    swarm.pbest_f[better] = f[better]
    swarm.evaluations += len(f)
    swarm.refresh_neighbourhood()


def step_continuous(swarm: Swarm, fitness: Callable, rng: np.random.Generator,
                    batch: bool = False) -> Swarm:
    """One synchronous iteration of the inertia-weight velocity rule.

    Draws u1, u2 uniformly on [0, 1] per component, updates velocity from
    inertia, personal-best and neighbourhood-best pulls, then moves.
    """
    c = swarm.config
    shape = swarm.x.shape
    u1 = rng.random(shape)
    u2 = rng.random(shape)
    swarm.v = (c.inertia * swarm.v
               + u1 * c.cognitive * (swarm.pbest_x - swarm.x)
               + u2 * c.social * (swarm.nbest_x - swarm.x))
    if c.velocity_clamp is not None:
        np.clip(swarm.v, -c.velocity_clamp, c.velocity_clamp, out=swarm.v)
    swarm.x = swarm.x + swarm.v
    _update_bests(swarm, evaluate(swarm.x, fitness, batch))
    return swarm


def step_discrete(swarm: Swarm, m: int, fitness: Callable, rng: np.random.Generator,
                  batch: bool = False, turbulence: float = 0.0) -> Swarm:
    """One iteration in Z_m^n.

    Each velocity component becomes one of the inertia term ``v``, the
    cognitive term ``(pbest - x) mod m`` or the social term ``(nbest - x) mod m``,
    picked at random with probabilities proportional to the three weights.
    With ``turbulence`` > 0 each component is instead, with that probability,
    set to a uniform nonzero residue.  Positions then move by ``(x + v) mod m``.
    """
    if m < 1:
        raise ValueError(f"modulus must be >= 1, got {m}")
    if not 0.0 <= turbulence <= 1.0:
        raise ValueError("turbulence must be a probability")
    c = swarm.config
    w = np.array([c.inertia, c.cognitive, c.social], dtype=float)
    if w.sum() == 0:
        pick = np.zeros(swarm.x.shape, dtype=np.int64)
    else:
        pick = rng.choice(3, size=swarm.x.shape, p=w / w.sum())
    cog = np.mod(swarm.pbest_x - swarm.x, m)
    soc = np.mod(swarm.nbest_x - swarm.x, m)
    v = np.where(pick == 0, swarm.v, np.where(pick == 1, cog, soc))
    if turbulence > 0 and m > 1:
        hit = rng.random(v.shape) < turbulence
        v[hit] = rng.integers(1, m, size=int(hit.sum()))
    swarm.v = np.mod(v, m)
    swarm.x = np.mod(swarm.x + swarm.v, m)
    _update_bests(swarm, evaluate(swarm.x, fitness, batch))
    return swarm


def minimize_continuous(fitness: Callable, dims: int, lower, upper, budget: int,
                        config: SwarmConfig = SwarmConfig(), batch: bool = False):
    """Run a continuous swarm from uniform positions until ``budget`` evaluations."""
    rng = np.random.default_rng(config.seed)
    lo = np.broadcast_to(np.asarray(lower, float), (dims,))
    hi = np.broadcast_to(np.asarray(upper, float), (dims,))
    x0 = lo + rng.random((config.particle_count, dims)) * (hi - lo)
    v0 = (rng.random((config.particle_count, dims)) - 0.5) * (hi - lo)
    swarm = init_swarm(x0, fitness, config, v0, batch)
    while swarm.evaluations + swarm.size <= budget:
        step_continuous(swarm, fitness, rng, batch)
    return swarm


def minimize_discrete(fitness: Callable, dims: int, m: int, budget: int,
                      config: SwarmConfig = SwarmConfig(), batch: bool = False,
                      turbulence: float = 0.0):
    rng = np.random.default_rng(config.seed)
    x0 = rng.integers(0, m, size=(config.particle_count, dims))
    swarm = init_swarm(x0, fitness, config, batch=batch)
    while swarm.evaluations + swarm.size <= budget:
        step_discrete(swarm, m, fitness, rng, batch, turbulence)
    return swarm
