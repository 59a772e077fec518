"""Simulate one working day with each solver and print the per-slice cost trace.

    python demos/solve_day.py [n_requests] [seed]
"""

import sys

from dvrp_hh.domain import check_feasibility
from dvrp_hh.dynamics import run_day
from dvrp_hh.harness import make_solver
from dvrp_hh.instance_io import generate_instance
from dvrp_hh.local_search import nearest_neighbor_baseline


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 40
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    inst = generate_instance(n, seed=seed, kind="mixed", dynamic_fraction=0.5, service_time=5)
    print(f"{inst.name}: {n} requests, {sum(r.arrival_time > 0 for r in inst.requests)} "
          f"revealed during the day")
    print(f"nearest neighbour + 2-opt with full knowledge: "
          f"{nearest_neighbor_baseline(inst).total_length:.1f}")
    for tag in ("memso", "2mpso"):
        res = run_day(inst, make_solver(tag), budget=50_000, n_slices=10, seed=seed)
        ok = check_feasibility(res.solution, inst).ok
        print(f"\n{tag}: cost {res.cost:.1f}, feasible {ok}, "
              f"vehicles used {sum(1 for r in res.solution.routes if r)}")
        for j, t, c in res.trace:
            print(f"  slice {j:2d}  t={t:7.1f}  best {c:8.1f}")


if __name__ == "__main__":
    main()
