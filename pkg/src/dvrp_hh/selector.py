"""Linear model predicting the MEMSO / 2MPSO average-cost ratio.

Features are pruned by backward elimination on AIC
(``n ln(RSS/n) + 2 (p + 1)``); a predicted ratio below 1 selects MEMSO.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, stats

from .features import FEATURE_NAMES, FeatureVector

MEMSO = "MEMSO"
TWOMPSO = "2MPSO"
_AIC_TOL = 1e-12


class RankDeficientError(ValueError):
    def __init__(self, features):
        self.features = tuple(features)
        super().__init__("design matrix is rank deficient; collinear feature(s): "
                         + ", ".join(self.features))


@dataclass(frozen=True)
class TrainingRow:
    name: str
    features: FeatureVector
    ratio: float

    def __post_init__(self):
        if not self.ratio > 0:
            raise ValueError(f"{self.name}: ratio must be positive")


@dataclass(frozen=True)
class SelectorModel:
    features: tuple[str, ...]
    intercept: float
    coefficients: tuple[float, ...]
    rss: float = 0.0
    aic: float = 0.0
    n: int = 0
    std_errors: tuple[float, ...] = ()
    p_values: tuple[float, ...] = ()  # intercept first
    path: tuple[tuple[tuple[str, ...], float], ...] = field(default=(), compare=False)

    def predict(self, fv: FeatureVector) -> float:
        r = self.intercept
        for name, c in zip(self.features, self.coefficients):
            r += c * getattr(fv, name)
        return r

    def summary(self) -> str:
        lines = [f"{'term':<12}{'estimate':>14}{'std.err':>12}{'p':>10}"]
        names = ("(Intercept)",) + self.features
        coefs = (self.intercept,) + self.coefficients
        se = self.std_errors or (math.nan,) * len(names)
        pv = self.p_values or (math.nan,) * len(names)
        for nm, c, s, p in zip(names, coefs, se, pv):
            lines.append(f"{nm:<12}{c:>14.6g}{s:>12.4g}{p:>10.4g}")
        lines.append(f"RSS {self.rss:.6g}  AIC {self.aic:.6g}  n {self.n}")
        return "\n".join(lines)


def _design(rows: Sequence[TrainingRow], subset: Sequence[str]):
    X = np.ones((len(rows), len(subset) + 1))
    for j, name in enumerate(subset):
        X[:, j + 1] = [getattr(r.features, name) for r in rows]
    y = np.array([r.ratio for r in rows], dtype=float)
    return X, y


def _collinear(X: np.ndarray, names: Sequence[str]) -> list[str]:
    bad = []
    kept = X[:, :1]
    for j, name in enumerate(names):
        trial = np.column_stack([kept, X[:, j + 1]])
        if np.linalg.matrix_rank(trial) < trial.shape[1]:
            bad.append(name)
        else:
            kept = trial
    return bad


def aic(rss: float, n: int, p: int, y: np.ndarray | None = None) -> float:
    """AIC without constant terms; RSS is floored relative to ``sum(y**2)``.

    The floor stops exact fits from ranking by round-off noise.
    """
    floor = 1e-20 * (float(np.dot(y, y)) if y is not None else 1.0)
    rss = max(rss, floor, np.finfo(float).tiny)
    return n * math.log(rss / n) + 2 * (p + 1)


def fit_ols(rows: Sequence[TrainingRow], subset: Sequence[str] = FEATURE_NAMES) -> SelectorModel:
    subset = tuple(subset)
    unknown = [s for s in subset if s not in FEATURE_NAMES]
    if unknown:
        raise ValueError(f"unknown feature(s): {unknown}")
    n, p = len(rows), len(subset)
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} rows for {p} features, got {n}")
    X, y = _design(rows, subset)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError(_collinear(X, subset))
    Q, R = np.linalg.qr(X)
    beta = linalg.solve_triangular(R, Q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    dof = n - p - 1
    sigma2 = rss / dof
    Rinv = linalg.solve_triangular(R, np.eye(p + 1))
    se = np.sqrt(np.maximum(sigma2 * (Rinv ** 2).sum(axis=1), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    pv = 2 * stats.t.sf(np.abs(t), dof)
    return SelectorModel(subset, float(beta[0]), tuple(float(b) for b in beta[1:]), rss,
                         aic(rss, n, p, y), n, tuple(float(s) for s in se),
                         tuple(float(x) for x in pv))


def stepwise_aic(rows: Sequence[TrainingRow],
                 start: Sequence[str] = FEATURE_NAMES) -> SelectorModel:
    """Backward elimination: drop the feature whose removal lowers AIC most."""
    current = fit_ols(rows, start)
    path = [(current.features, current.aic)]
    while current.features:
        best = None
        for name in sorted(current.features):
            sub = tuple(f for f in current.features if f != name)
            cand = fit_ols(rows, sub)
            # round-off must not break a tie: the earlier name wins unless clearly beaten
            if best is None or cand.aic < best.aic - _AIC_TOL * max(1.0, abs(best.aic)):
                best = cand
        if best is None or not best.aic < current.aic:
            break
        current = best
        path.append((current.features, current.aic))
    return SelectorModel(current.features, current.intercept, current.coefficients,
                         current.rss, current.aic, current.n, current.std_errors,
                         current.p_values, tuple(path))


def choose_solver(model: SelectorModel, fv: FeatureVector) -> tuple[str, float]:
    r = model.predict(fv)
    return (MEMSO if r < 1.0 else TWOMPSO), r


def dumps_model(model: SelectorModel) -> str:
    lines = ["# linear selector model: ratio = intercept + sum(coef * feature)",
             f"FEATURES {' '.join(model.features)}".rstrip(),
             f"INTERCEPT {model.intercept!r}"]
    for name, c in zip(model.features, model.coefficients):
        lines.append(f"COEF {name} {c!r}")
    lines += [f"RSS {model.rss!r}", f"AIC {model.aic!r}", f"N {model.n}"]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> SelectorModel:
    feats: tuple[str, ...] = ()
    coefs: dict[str, float] = {}
    vals: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "FEATURES":
            feats = tuple(rest)
        elif key == "COEF" and len(rest) == 2:
            coefs[rest[0]] = float(rest[1])
        elif key in ("INTERCEPT", "RSS", "AIC", "N") and len(rest) == 1:
            vals[key] = float(rest[0])
        else:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}")
    missing = [f for f in feats if f not in coefs]
    if missing or "INTERCEPT" not in vals:
        raise ValueError(f"incomplete model document (missing {missing or 'INTERCEPT'})")
    return SelectorModel(feats, vals["INTERCEPT"], tuple(coefs[f] for f in feats),
                         vals.get("RSS", 0.0), vals.get("AIC", 0.0), int(vals.get("N", 0)))
