"""Batch runs, significance testing, leave-one-out selection experiment, reports.

A *runs directory* holds everything the selection experiment needs:

``features.csv``
    ``name`` plus the ten feature columns, one row per instance.
``<instance>__<solver>.csv``
    append-only run records written by :func:`batch_solve`.
``summary.csv`` (optional)
    precomputed per-instance ``2mpso_min, 2mpso_avg, memso_min, memso_avg,
    significant``; when present it is used instead of the run records.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .config import SolverConfigs
from .domain import ProblemInstance, check_feasibility
from .dynamics import DEFAULT_SLICES, run_day
from .features import FEATURE_NAMES, FeatureVector
from .memso import MemsoSolver
from .selector import MEMSO, TWOMPSO, SelectorModel, TrainingRow, choose_solver, stepwise_aic
from .twompso import TwoMpsoSolver

SOLVER_TAGS = {"memso": MEMSO, "2mpso": TWOMPSO}
RECORD_FIELDS = ("instance", "solver", "seed", "cost", "budget", "wall_time", "status")


@dataclass(frozen=True)
class RunRecord:
    instance: str
    solver: str
    seed: int
    cost: float
    budget: int
    wall_time: float = 0.0
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def make_solver(tag: str, configs: SolverConfigs | None = None):
    configs = configs or SolverConfigs()
    if tag == "memso":
        return MemsoSolver(configs.memso)
    if tag == "2mpso":
        return TwoMpsoSolver(configs.twompso)
    raise ValueError(f"unknown solver {tag!r}; expected one of {sorted(SOLVER_TAGS)}")


def _read_records(path: Path) -> list[RunRecord]:
    if not path.exists():
        return []
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(RunRecord(row["instance"], row["solver"], int(row["seed"]),
                                 float(row["cost"]), int(row["budget"]),
                                 float(row["wall_time"]), row["status"]))
    return out


def _append_record(path: Path, rec: RunRecord):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RECORD_FIELDS)
        w.writerow([rec.instance, rec.solver, rec.seed, repr(rec.cost), rec.budget,
                    f"{rec.wall_time:.3f}", rec.status])
        fh.flush()
        os.fsync(fh.fileno())


def record_path(runs_dir: str | Path, instance_name: str, solver_tag: str) -> Path:
    return Path(runs_dir) / f"{instance_name}__{solver_tag}.csv"


def batch_solve(instance: ProblemInstance, solver_tag: str, runs: int, budget: int,
                base_seed: int = 0, n_slices: int = DEFAULT_SLICES,
                configs: SolverConfigs | None = None,
                out_dir: str | Path | None = None) -> list[RunRecord]:
    """``runs`` independent seeded days; seeds are ``base_seed + i``.

    With ``out_dir`` each record is appended to disk as soon as it finishes and
    runs already on disk (same seed and budget) are reused, so an interrupted
    batch resumes where it stopped.
    """
    path = record_path(out_dir, instance.name, solver_tag) if out_dir else None
    done = {}
    if path is not None:
        for rec in _read_records(path):
            if rec.budget == budget:
                done[rec.seed] = rec
    out = []
    for i in range(runs):
        seed = base_seed + i
        if seed in done:
            out.append(done[seed])
            continue
        t0 = time.perf_counter()
        try:
            res = run_day(instance, make_solver(solver_tag, configs), budget, n_slices, seed)
            ok = not res.failed and check_feasibility(
                res.solution, instance, instance.workday_end, res.state).ok
            rec = RunRecord(instance.name, solver_tag, seed, res.cost, budget,
                            time.perf_counter() - t0, "ok" if ok else "failed")
        except Exception as exc:  # a crashed run is data, not a crashed batch
            rec = RunRecord(instance.name, solver_tag, seed, math.nan, budget,
                            time.perf_counter() - t0, f"error:{type(exc).__name__}")
        if path is not None:
            _append_record(path, rec)
        out.append(rec)
    return out


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool
    df: float = math.nan


def welch_t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Two-sided unequal-variance t-test with Welch-Satterthwaite df."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(math.copysign(math.inf, diff), 0.0, True)
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    p = float(2 * stats.t.sf(abs(t), df))
    return TTestResult(float(t), p, p < alpha, float(df))


@dataclass(frozen=True)
class InstanceSummary:
    name: str
    features: FeatureVector
    twompso_min: float
    twompso_avg: float
    memso_min: float
    memso_avg: float
    significant: bool

    @property
    def ratio(self) -> float:
        return self.memso_avg / self.twompso_avg

    @property
    def better(self) -> str:
        return MEMSO if self.memso_avg < self.twompso_avg else TWOMPSO


def gain(chosen_avg: float, unchosen_avg: float) -> float:
    """Relative improvement of the chosen average over the alternative.

    Normalized by the worse of the two averages, so gains and losses of the
    same absolute size have the same magnitude.
    """
    return (unchosen_avg - chosen_avg) / max(chosen_avg, unchosen_avg)


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    twompso_min: float
    twompso_avg: float
    memso_min: float
    memso_avg: float
    significant: bool
    chosen: str
    correct: bool
    gain: float
    predicted_ratio: float = math.nan

    @classmethod
    def from_choice(cls, s: InstanceSummary, chosen: str,
                    predicted: float = math.nan) -> "ComparisonRow":
        ch, un = ((s.memso_avg, s.twompso_avg) if chosen == MEMSO
                  else (s.twompso_avg, s.memso_avg))
        return cls(s.name, s.twompso_min, s.twompso_avg, s.memso_min, s.memso_avg,
                   s.significant, chosen, chosen == s.better, gain(ch, un), predicted)


@dataclass
class LoocvReport:
    rows: list[ComparisonRow]
    models: list[SelectorModel] = field(default_factory=list)
    fits: int = 0

    @property
    def correct(self) -> int:
        return sum(r.correct for r in self.rows)

    @property
    def accuracy(self) -> float:
        return self.correct / len(self.rows) if self.rows else math.nan

    @property
    def significant_rows(self) -> list[ComparisonRow]:
        return [r for r in self.rows if r.significant]

    @property
    def correct_significant(self) -> int:
        return sum(r.correct for r in self.significant_rows)

    @property
    def accuracy_significant(self) -> float:
        sig = self.significant_rows
        return self.correct_significant / len(sig) if sig else math.nan


def loocv_experiment(summaries: Sequence[InstanceSummary],
                     fit: Callable[[Sequence[TrainingRow]], SelectorModel] = stepwise_aic
                     ) -> LoocvReport:
    """Hold out each instance in turn, fit on the rest, and choose for it."""
    if len(summaries) < 3:
        raise ValueError("leave-one-out needs at least 3 instances")
    rows = [TrainingRow(s.name, s.features, s.ratio) for s in summaries]
    report = LoocvReport([])
    for i, held in enumerate(summaries):
        model = fit(rows[:i] + rows[i + 1:])
        report.fits += 1
        report.models.append(model)
        chosen, r = choose_solver(model, held.features)
        report.rows.append(ComparisonRow.from_choice(held, chosen, r))
    return report


def summarize_records(name: str, features: FeatureVector, memso: Iterable[RunRecord],
                      twompso: Iterable[RunRecord], alpha: float = 0.05) -> InstanceSummary:
    mc = [r.cost for r in memso if r.ok]
    tc = [r.cost for r in twompso if r.ok]
    if not mc or not tc:
        raise ValueError(f"{name}: no successful runs for one of the solvers")
    sig = welch_t_test(mc, tc, alpha).significant if len(mc) > 1 and len(tc) > 1 else False
    return InstanceSummary(name, features, min(tc), float(np.mean(tc)), min(mc),
                           float(np.mean(mc)), sig)


def read_features_csv(path: str | Path) -> dict[str, FeatureVector]:
    with open(path, newline="") as fh:
        return {row["name"]: FeatureVector.from_mapping(row) for row in csv.DictReader(fh)}


def write_features_csv(path: str | Path, feats: dict[str, FeatureVector]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("name",) + FEATURE_NAMES)
        for name, fv in feats.items():
            w.writerow([name] + [f"{v:.6f}" for v in fv.as_array()])


def _truthy(s: str) -> bool:
    return s.strip().lower() in ("1", "true", "t", "yes", "y")


def load_runs_dir(runs_dir: str | Path, alpha: float = 0.05) -> list[InstanceSummary]:
    runs_dir = Path(runs_dir)
    feats_path = runs_dir / "features.csv"
    if not feats_path.exists():
        raise FileNotFoundError(f"{feats_path} not found")
    feats = read_features_csv(feats_path)
    summary = runs_dir / "summary.csv"
    out = []
    if summary.exists():
        with open(summary, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(InstanceSummary(row["name"], feats[row["name"]],
                                           float(row["2mpso_min"]), float(row["2mpso_avg"]),
                                           float(row["memso_min"]), float(row["memso_avg"]),
                                           _truthy(row["significant"])))
        return out
    for name, fv in feats.items():
        memso = _read_records(record_path(runs_dir, name, "memso"))
        two = _read_records(record_path(runs_dir, name, "2mpso"))
        out.append(summarize_records(name, fv, memso, two, alpha))
    return out


REPORT_HEADER = ("name", "2mpso_min", "2mpso_avg", "memso_min", "memso_avg",
                 "significant", "chosen", "correct", "gain")


def emit_report(rows: Sequence[ComparisonRow], fmt: str = "text") -> str:
    """Render comparison rows as a fixed-width table or CSV.

    In the text table a ``*`` marks the significantly better average.
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([r.name, f"{r.twompso_min:.2f}", f"{r.twompso_avg:.2f}",
                        f"{r.memso_min:.2f}", f"{r.memso_avg:.2f}",
                        "T" if r.significant else "F", r.chosen, "T" if r.correct else "F",
                        f"{100 * r.gain:.2f}%"])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    head = (f"{'Name':<10}{'2MPSO min':>11}{'2MPSO avg':>11}{'MEMSO min':>11}"
            f"{'MEMSO avg':>11}  {'Chosen':<7}{'T/F':<4}{'Gain':>8}")
    lines = [head]
    for r in rows:
        mark_m = "*" if r.significant and r.memso_avg < r.twompso_avg else " "
        mark_t = "*" if r.significant and r.twompso_avg < r.memso_avg else " "
        lines.append(f"{r.name:<10}{r.twompso_min:>11.2f}{r.twompso_avg:>10.2f}{mark_t}"
                     f"{r.memso_min:>11.2f}{r.memso_avg:>10.2f}{mark_m}  "
                     f"{r.chosen:<7}{'T' if r.correct else 'F':<4}{100 * r.gain:>7.2f}%")
    return "\n".join(lines) + "\n"


def loocv_summary(report: LoocvReport) -> str:
    sig = report.significant_rows
    return (f"accuracy {report.correct}/{len(report.rows)} ({100 * report.accuracy:.0f}%); "
            f"significant subset {report.correct_significant}/{len(sig)} "
            f"({100 * report.accuracy_significant:.0f}%)\n")
