"""Instance features computed from the requests known at the start of the day.

Locations are min-max mapped onto the unit square, volumes are divided by the
vehicle capacity, and the spatial cluster count (gap statistic) is combined
with the capacity lower bound on the vehicle count into
``nc = |1 - m_v / k_gap|``.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .domain import ProblemInstance

FEATURE_NAMES = ("mu_x", "sd_x", "skew_x", "mu_y", "sd_y", "skew_y",
                 "mu_s", "sd_s", "skew_s", "nc")


@dataclass(frozen=True)
class FeatureVector:
    mu_x: float
    sd_x: float
    skew_x: float
    mu_y: float
    sd_y: float
    skew_y: float
    mu_s: float
    sd_s: float
    skew_s: float
    nc: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_mapping(cls, d) -> "FeatureVector":
        return cls(**{k: float(d[k]) for k in FEATURE_NAMES})


@dataclass(frozen=True)
class GapResult:
    k_gap: int
    m_v: int
    gaps: tuple[float, ...] = ()
    s: tuple[float, ...] = ()


def _moments(values, moment_mode: str):
    x = np.asarray(values, dtype=float)
    n = len(x)
    mean = float(x.mean())
    dev = x - mean
    m2 = float((dev ** 2).mean())
    if moment_mode == "biased":
        sd = math.sqrt(m2)
    elif moment_mode == "unbiased":
        sd = math.sqrt(m2 * n / (n - 1)) if n > 1 else 0.0
    else:
        raise ValueError(f"unknown moment_mode {moment_mode!r}")
    return mean, sd, sample_skewness(x, moment_mode)


def sample_skewness(values, moment_mode: str = "biased") -> float:
    """g1 = m3 / m2**1.5 with biased central moments; 0 for constant samples.

    ``moment_mode="unbiased"`` returns the adjusted Fisher-Pearson coefficient
    ``g1 * sqrt(n (n - 1)) / (n - 2)``.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n < 2:
        return 0.0
    dev = x - x.mean()
    m2 = float((dev ** 2).mean())
    scale = max(1.0, float(np.abs(x).max()))
    if m2 <= (1e-12 * scale) ** 2:
        return 0.0
    g1 = float((dev ** 3).mean()) / m2 ** 1.5
    if moment_mode == "unbiased":
        if n < 3:
            return 0.0
        g1 *= math.sqrt(n * (n - 1)) / (n - 2)
    return g1


def kmeans_dispersion(points: np.ndarray, k: int, rng: np.random.Generator,
                      restarts: int = 10, max_iter: int = 100) -> float:
    """Lowest pooled within-cluster sum of squares over ``restarts`` Lloyd runs.

    All restarts run side by side; seeds come from k-means++.
    """
    n = len(points)
    if k >= n:
        return 0.0
    if k == 1:
        return float(((points - points.mean(axis=0)) ** 2).sum())
    R = restarts
    centers = np.empty((R, k, 2))
    for r in range(R):
        first = rng.integers(n)
        centers[r, 0] = points[first]
        d2 = ((points - points[first]) ** 2).sum(axis=1)
        for c in range(1, k):
            tot = d2.sum()
            if tot <= 0:
                idx = rng.integers(n)
            else:
                idx = min(int(np.searchsorted(np.cumsum(d2), rng.random() * tot, "right")), n - 1)
            centers[r, c] = points[idx]
            d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    labels = None
    for _ in range(max_iter):
        d = ((points[None, :, None, :] - centers[:, None, :, :]) ** 2).sum(axis=-1)
        new = d.argmin(axis=2)  # (R, n)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        onehot = np.zeros((R, n, k))
        np.put_along_axis(onehot, labels[:, :, None], 1.0, axis=2)
        sizes = onehot.sum(axis=1)  # (R, k)
        sums = np.einsum("rnk,nd->rkd", onehot, points)
        empty = sizes == 0
        sizes[empty] = 1
        updated = sums / sizes[:, :, None]
        centers = np.where(empty[:, :, None], centers, updated)
    d = ((points[None, :, None, :] - centers[:, None, :, :]) ** 2).sum(axis=-1)
    return float(d.min(axis=2).sum(axis=1).min())


def gap_statistic(points, k_max: int = 10, B: int = 50, seed: int = 0,
                  restarts: int = 10, max_iter: int = 100) -> GapResult:
    """Estimated cluster count by the gap statistic with uniform box references.

    Picks the smallest ``k`` with ``Gap(k) >= Gap(k+1) - s(k+1)``, else ``k_max``.
    ``m_v`` is left at 1; :func:`extract_features` fills it in.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    distinct = len(np.unique(pts, axis=0))
    if distinct < 2:
        return GapResult(1, 1, (0.0,), (0.0,))
    k_max = max(1, min(k_max, distinct - 1))
    rng = np.random.default_rng(seed)
    refs = lo + rng.random((B, len(pts), 2)) * (hi - lo)
    tiny = 1e-300
    gaps, sks = [], []
    for k in range(1, k_max + 1):
        wk = max(kmeans_dispersion(pts, k, rng, restarts, max_iter), tiny)
        ref_logs = np.array([math.log(max(kmeans_dispersion(ref, k, rng, restarts, max_iter),
                                          tiny)) for ref in refs])
        gaps.append(float(ref_logs.mean() - math.log(wk)))
        sks.append(float(ref_logs.std() * math.sqrt(1.0 + 1.0 / B)))
    k_gap = k_max
    for k in range(1, k_max):
        if gaps[k - 1] >= gaps[k] - sks[k]:
            k_gap = k
            break
    return GapResult(k_gap, 1, tuple(gaps), tuple(sks))


def _unit_map(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi - lo <= 1e-12 * max(1.0, abs(hi), abs(lo)):
        return np.full(len(values), 0.5)
    return (values - lo) / (hi - lo)


def initial_requests(instance: ProblemInstance):
    return [r for r in instance.requests if r.arrival_time == 0]


def extract_features(instance: ProblemInstance, seed: int = 0, moment_mode: str = "biased",
                     include_depot: bool = False, k_max: int = 10, B: int = 50
                     ) -> tuple[FeatureVector, GapResult]:
    reqs = initial_requests(instance)
    if len(reqs) < 2:
        raise ValueError(f"{instance.name}: need at least 2 requests known at time 0, "
                         f"got {len(reqs)}")
    xy = np.array([r.location for r in reqs], dtype=float)
    bounds = np.vstack([xy, [instance.depot_location]]) if include_depot else xy
    lo, hi = bounds.min(axis=0), bounds.max(axis=0)
    ux = _unit_map(xy[:, 0], lo[0], hi[0])
    uy = _unit_map(xy[:, 1], lo[1], hi[1])
    cap = instance.fleet.capacity
    vols = np.array([r.volume for r in reqs]) / cap

    mu_x, sd_x, sk_x = _moments(ux, moment_mode)
    mu_y, sd_y, sk_y = _moments(uy, moment_mode)
    mu_s, sd_s, sk_s = _moments(vols, moment_mode)
    if np.ptp(ux) == 0:
        sd_x = sk_x = 0.0
    if np.ptp(uy) == 0:
        sd_y = sk_y = 0.0

    gap = gap_statistic(np.column_stack([ux, uy]), k_max=k_max, B=B, seed=seed)
    m_v = max(1, math.ceil(sum(r.volume for r in reqs) / cap - 1e-9))
    gap = GapResult(gap.k_gap, m_v, gap.gaps, gap.s)
    nc = abs(1.0 - m_v / gap.k_gap)
    fv = FeatureVector(mu_x, sd_x, sk_x, mu_y, sd_y, sk_y, mu_s, sd_s, sk_s, nc)
    return fv, gap


def features_csv(name: str, fv: FeatureVector, header: bool = True) -> str:
    lines = []
    if header:
        lines.append("name," + ",".join(FEATURE_NAMES))
    lines.append(name + "," + ",".join(f"{v:.6f}" for v in fv.as_array()))
    return "\n".join(lines) + "\n"
