"""Solver parameters from an INI file with ``[memso]`` and ``[2mpso]`` sections.

Example::

    [memso]
    particle_count = 40
    S = 1
    penalty_weight = 500
    turbulence = 0.5

    [2mpso]
    k = 2
    phi = 0.7
    m_hat_slack = 1
    phase2_particle_count = 20
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .memso import MemsoConfig
from .pso import SwarmConfig
from .twompso import TwoMpsoConfig

_SWARM_KEYS = {"particle_count": int, "inertia": float, "cognitive": float, "social": float,
               "topology": str, "ring_k": int, "velocity_clamp": float, "seed": int}


@dataclass(frozen=True)
class SolverConfigs:
    memso: MemsoConfig = field(default_factory=MemsoConfig)
    twompso: TwoMpsoConfig = field(default_factory=TwoMpsoConfig)


def _swarm(section, base: SwarmConfig, prefix: str = "") -> SwarmConfig:
    kw = {}
    for key, conv in _SWARM_KEYS.items():
        if prefix + key in section:
            kw[key] = conv(section[prefix + key])
    return base.with_(**kw) if kw else base


def _check_keys(section, allowed, name):
    extra = set(section) - set(allowed)
    if extra:
        raise ValueError(f"[{name}] unknown key(s): {', '.join(sorted(extra))}")


def parse_config(text: str) -> SolverConfigs:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    memso, two = MemsoConfig(), TwoMpsoConfig()
    if cp.has_section("memso"):
        s = cp["memso"]
        _check_keys(s, set(_SWARM_KEYS) | {"S", "penalty_weight", "vehicle_slack", "turbulence",
                                           "sweep_seeds", "seed_mutation"}, "memso")
        memso = MemsoConfig(
            swarm=_swarm(s, memso.swarm),
            swarms=int(s.get("S", memso.swarms)),
            penalty_weight=float(s["penalty_weight"]) if "penalty_weight" in s else None,
            vehicle_slack=int(s.get("vehicle_slack", memso.vehicle_slack)),
            turbulence=float(s.get("turbulence", memso.turbulence)),
            sweep_seeds=int(s.get("sweep_seeds", memso.sweep_seeds)),
            seed_mutation=float(s.get("seed_mutation", memso.seed_mutation)))
    if cp.has_section("2mpso"):
        s = cp["2mpso"]
        allowed = (set(_SWARM_KEYS) | {"phase2_" + k for k in _SWARM_KEYS}
                   | {"k", "phi", "m_hat_slack", "penalty_weight"})
        _check_keys(s, allowed, "2mpso")
        two = TwoMpsoConfig(
            k=int(s.get("k", two.k)), phi=float(s.get("phi", two.phi)),
            m_hat_slack=int(s.get("m_hat_slack", two.m_hat_slack)),
            phase1=_swarm(s, two.phase1), phase2=_swarm(s, two.phase2, "phase2_"),
            penalty_weight=float(s["penalty_weight"]) if "penalty_weight" in s else None)
    return SolverConfigs(memso, two)


def load_config(path) -> SolverConfigs:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
