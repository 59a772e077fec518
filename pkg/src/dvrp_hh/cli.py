"""Command line entry point: ``dvrp-hh <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 internal failure.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path

from .config import SolverConfigs, load_config
from .domain import ValidationError
from .dynamics import DEFAULT_SLICES, run_day, trace_csv
from .features import FEATURE_NAMES, extract_features, features_csv
from .harness import (ComparisonRow, emit_report, loocv_experiment, loocv_summary,
                      load_runs_dir, make_solver, batch_solve, summarize_records,
                      write_features_csv)
from .instance_io import InstanceFormatError, read_instance
from .selector import (RankDeficientError, TrainingRow, choose_solver, dumps_model,
                       loads_model, stepwise_aic)

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3


def _configs(args) -> SolverConfigs:
    return load_config(args.config) if getattr(args, "config", None) else SolverConfigs()


def cmd_solve(args, out):
    inst = read_instance(args.instance)
    if args.static:
        inst = inst.static()
    solver = make_solver(args.algo, _configs(args))
    res = run_day(inst, solver, args.budget, args.slices, args.seed)
    if args.csv:
        out.write(trace_csv(res.trace))
        return EXIT_OK if not res.failed else EXIT_INTERNAL
    out.write(f"instance {inst.name}\nalgorithm {args.algo}\nseed {args.seed}\n"
              f"cost {res.cost:.6f}\nstatus {'failed' if res.failed else 'ok'}\n")
    for v, route in enumerate(res.solution.routes):
        if route:
            out.write(f"vehicle {v}: {' '.join(map(str, route))}\n")
    return EXIT_OK if not res.failed else EXIT_INTERNAL


def cmd_features(args, out):
    inst = read_instance(args.instance)
    fv, gap = extract_features(inst, seed=args.seed, moment_mode=args.moment_mode,
                               include_depot=args.include_depot)
    if args.csv:
        out.write(features_csv(inst.name, fv))
    else:
        out.write(" ".join(f"{n:>7}" for n in ("name",) + FEATURE_NAMES) + "\n")
        out.write(f"{inst.name:>7} " + " ".join(f"{v:>7.2f}" for v in fv.as_array()) + "\n")
        out.write(f"k_gap {gap.k_gap}  m_v {gap.m_v}\n")
    return EXIT_OK


def _rows(runs):
    return [TrainingRow(s.name, s.features, s.ratio) for s in load_runs_dir(runs)]


def cmd_train(args, out):
    model = stepwise_aic(_rows(args.runs))
    Path(args.out).write_text(dumps_model(model), encoding="utf-8")
    if args.csv:
        out.write("term,estimate\n")
        out.write(f"(Intercept),{model.intercept!r}\n")
        for n, c in zip(model.features, model.coefficients):
            out.write(f"{n},{c!r}\n")
    else:
        out.write(model.summary() + "\n")
    return EXIT_OK


def cmd_select(args, out):
    model = loads_model(Path(args.model).read_text(encoding="utf-8"))
    inst = read_instance(args.instance)
    fv, _ = extract_features(inst, seed=args.seed)
    chosen, r = choose_solver(model, fv)
    if args.csv:
        out.write(f"name,predicted_ratio,chosen\n{inst.name},{r:.6f},{chosen}\n")
    else:
        out.write(f"{inst.name}: predicted MEMSO/2MPSO ratio {r:.4f} -> {chosen}\n")
    return EXIT_OK


def cmd_loocv(args, out):
    report = loocv_experiment(load_runs_dir(args.runs, args.alpha))
    out.write(emit_report(report.rows, "csv" if args.csv else "text"))
    if not args.csv:
        out.write(loocv_summary(report))
    return EXIT_OK


def cmd_bench(args, out):
    files = sorted(p for p in Path(args.instances).iterdir()
                   if p.is_file() and not p.name.startswith("."))
    if not files:
        raise ValidationError(f"no instance files in {args.instances}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    configs = _configs(args)
    feats = {}
    rows = []
    for f in files:
        inst = read_instance(f)
        fv, _ = extract_features(inst, seed=args.seed)
        feats[inst.name] = fv
        write_features_csv(outdir / "features.csv", feats)
        m = batch_solve(inst, "memso", args.runs_memso, args.budget, args.seed, args.slices,
                        configs, outdir)
        t = batch_solve(inst, "2mpso", args.runs_2mpso, args.budget, args.seed, args.slices,
                        configs, outdir)
        s = summarize_records(inst.name, fv, m, t, args.alpha)
        rows.append(ComparisonRow.from_choice(s, s.better))
    out.write(emit_report(rows, "csv" if args.csv else "text"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dvrp-hh", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one solver over one working day")
    s.add_argument("--instance", required=True)
    s.add_argument("--algo", choices=("memso", "2mpso"), required=True)
    s.add_argument("--budget", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--slices", type=int, default=DEFAULT_SLICES)
    s.add_argument("--config")
    s.add_argument("--static", action="store_true", help="treat every request as known at 0")
    s.add_argument("--csv", action="store_true", help="emit the per-slice cost trace")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("features", help="instance features of the initial requests")
    s.add_argument("instance")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--moment-mode", choices=("biased", "unbiased"), default="biased")
    s.add_argument("--include-depot", action="store_true")
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="fit the selector on a runs directory")
    s.add_argument("--runs", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("select", help="choose a solver for an instance")
    s.add_argument("--model", required=True)
    s.add_argument("--instance", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("loocv", help="leave-one-out selection experiment")
    s.add_argument("--runs", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_loocv)

    s = sub.add_parser("bench", help="batch runs of both solvers over a directory")
    s.add_argument("--instances", required=True)
    s.add_argument("--runs-memso", type=int, default=30)
    s.add_argument("--runs-2mpso", type=int, default=20)
    s.add_argument("--budget", type=int, default=1_000_000)
    s.add_argument("--slices", type=int, default=DEFAULT_SLICES)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out", default="runs")
    s.add_argument("--config")
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    buf = io.StringIO()
    try:
        code = args.func(args, buf)
    except (ValidationError, InstanceFormatError, RankDeficientError, FileNotFoundError,
            ValueError, KeyError) as exc:
        print(f"dvrp-hh: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).exception("internal failure")
        print(f"dvrp-hh: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
