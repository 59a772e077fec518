"""Leave-one-out replay of the solver selector on the bundled reference tables.

Features and average costs come from ``reference/``; no solver is run.
"""

from pathlib import Path

from dvrp_hh.harness import emit_report, load_runs_dir, loocv_experiment, loocv_summary
from dvrp_hh.selector import stepwise_aic, TrainingRow

REFERENCE = Path(__file__).resolve().parent.parent / "reference"


def main():
    subs = load_runs_dir(REFERENCE)
    report = loocv_experiment(subs)
    print(emit_report(report.rows), end="")
    print(loocv_summary(report))

    # the model trained on every instance, for inspection
    model = stepwise_aic([TrainingRow(s.name, s.features, s.ratio) for s in subs])
    print(model.summary())
    kept = {}
    for m in report.models:
        for f in m.features:
            kept[f] = kept.get(f, 0) + 1
    print("\nfeatures kept across folds:",
          ", ".join(f"{f} {c}/{len(report.models)}" for f, c in sorted(kept.items())))


if __name__ == "__main__":
    main()
