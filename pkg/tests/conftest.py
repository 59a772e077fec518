import numpy as np
import pytest

from dvrp_hh.domain import FleetSpec, ProblemInstance, Request


def make_instance(points, volumes=None, capacity=100.0, vehicles=None, workday=1000.0,
                  service=0.0, arrivals=None, depot=(0.0, 0.0), speed=1.0, name="t",
                  cutoff=None):
    """Instance with ids 1..n at ``points``."""
    n = len(points)
    volumes = [1.0] * n if volumes is None else volumes
    arrivals = [0.0] * n if arrivals is None else arrivals
    service = [service] * n if np.isscalar(service) else service
    reqs = [Request(i + 1, (float(p[0]), float(p[1])), float(volumes[i]), float(service[i]),
                    float(arrivals[i])) for i, p in enumerate(points)]
    fleet = FleetSpec(capacity, speed, vehicles if vehicles is not None else max(n, 1))
    return ProblemInstance(name, depot, fleet, reqs, workday, cutoff)


@pytest.fixture
def square():
    # four corners of a 10x10 square around a depot at the origin corner
    return make_instance([(0, 10), (10, 10), (10, 0), (5, 5)], volumes=[10, 20, 30, 40])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
