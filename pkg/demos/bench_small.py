"""Small end-to-end run: generate instances, batch both solvers, fit and cross-validate.

Budgets are far below anything meaningful; this shows the plumbing, not results.
Fitting all ten features needs more than 11 training rows, so with leave-one-out
at least 13 instances are required; 14 are generated.

    python demos/bench_small.py OUTDIR
"""

import sys
from pathlib import Path

from dvrp_hh.cli import main as cli
from dvrp_hh.instance_io import generate_instance, write_instance


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_runs")
    inst_dir = out / "instances"
    inst_dir.mkdir(parents=True, exist_ok=True)
    kinds = ("uniform", "clustered", "mixed")
    for k in range(14):
        kind = kinds[k % 3]
        inst = generate_instance(20 + 2 * k, seed=k, kind=kind, dynamic_fraction=0.4,
                                 name=f"{kind}{k}")
        write_instance(inst, inst_dir / f"{inst.name}.txt")
    common = ["--runs", str(out / "runs")]
    cli(["bench", "--instances", str(inst_dir), "--out", str(out / "runs"), "--runs-memso", "3",
         "--runs-2mpso", "3", "--budget", "10000", "--slices", "5"])
    cli(["loocv", *common])
    cli(["train", *common, "--out", str(out / "model.txt")])
    cli(["select", "--model", str(out / "model.txt"), "--instance",
         str(inst_dir / "mixed2.txt")])


if __name__ == "__main__":
    main()
