"""Error decomposition, log-log rate fits, budget planning, aggregation.

Pure functions over immutable sample data. The aggregation primitive is an
order-fixed pairwise tree merge of (count, sum, sum of squares) triples, so
any sharding of a run reduces to bit-identical statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InsufficientDataError

__all__ = [
    "SampleSet", "ErrorDecomposition", "RateFit", "BudgetPlan", "AggregateStats",
    "decompose_error", "fit_rate", "plan_budget", "aggregate", "partial_triples",
]

Z_NORMAL = 1.96  # two-sided 95% normal quantile for CI halfwidths
CHUNK = 4096     # fixed reduction chunk; must not depend on worker count


@dataclass
class SampleSet:
    """I.i.d. realization estimates at one sweep point."""

    method: str
    point: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise InsufficientDataError("samples must be nonempty and finite")
        self.values = v


@dataclass
class ErrorDecomposition:
    statistical_error: float   # sqrt of the unbiased sample variance
    systematic_error: float    # |sample mean - reference|
    reference: float
    reference_kind: str        # "exact" | "surrogate"
    ci_halfwidth: float        # 1.96 * sqrt(variance / k), normal approximation
    mean: float
    variance: float
    count: int


@dataclass
class RateFit:
    rate: float             # minus the log-log slope
    log10_prefactor: float
    prefactor: float
    residual_rms: float
    points_used: int


@dataclass
class BudgetPlan:
    delta: float
    c_syst: float
    c_rand: float
    d: int
    n_delta: int
    k_delta: int

    @property
    def predicted_cost_proxy(self) -> float:
        return self.k_delta * self.n_delta**self.d


@dataclass
class AggregateStats:
    count: int
    mean: float
    variance: float  # unbiased

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 0 else float("nan")


def decompose_error(samples: SampleSet, reference: float,
                    reference_kind: str = "exact") -> ErrorDecomposition:
    """Split the error of a sample mean into statistical and systematic parts.

    statistical = sqrt(unbiased variance) of one realization; systematic =
    |mean - reference|. The CI halfwidth on the mean uses the normal
    approximation.
    """
    v = samples.values
    k = v.size
    if k < 2:
        raise InsufficientDataError("need at least 2 samples to decompose error")
    mean = float(np.mean(v))
    var = float(np.var(v, ddof=1))
    return ErrorDecomposition(
        statistical_error=math.sqrt(var),
        systematic_error=abs(mean - reference),
        reference=float(reference),
        reference_kind=reference_kind,
        ci_halfwidth=Z_NORMAL * math.sqrt(var / k),
        mean=mean,
        variance=var,
        count=k,
    )


def fit_rate(points) -> RateFit:
    """Ordinary least squares on (log10 x, log10 y); rate = -slope.

    Matches the slope/prefactor convention of log-log convergence plots:
    y ~ prefactor * x^(-rate).
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise InsufficientDataError("rate fit needs at least 3 points")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(xs[1:] <= xs[:-1]):
        raise ConfigurationError("x values must be strictly increasing")
    if np.any(ys <= 0) or np.any(xs <= 0):
        raise ConfigurationError("rate fit needs positive x and y")
    lx, ly = np.log10(xs), np.log10(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return RateFit(
        rate=float(-slope),
        log10_prefactor=float(intercept),
        prefactor=float(10.0**intercept),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        points_used=len(pts),
    )


def _syst_bound(c_syst: float, n: int, d: int) -> float:
    return c_syst * n ** (-d) * math.log(n) ** d


def plan_budget(delta: float, c_syst: float, c_rand: float, d: int) -> BudgetPlan:
    """Smallest (N, k) meeting a target RMS error delta, splitting it evenly.

    N_delta is the smallest integer >= 3 with C_syst N^-d ln^d N <= delta/2
    (the left side is decreasing from N = 3 on, so targets met there clamp
    to 3); k_delta then makes the statistical half match:
    k = ceil((2 C_rand N^(-d/2) / delta)^2).
    """
    if delta <= 0 or c_syst <= 0 or c_rand <= 0:
        raise ConfigurationError("delta and both prefactors must be positive")
    if d < 2:
        raise ConfigurationError("budget model needs d >= 2")
    if _syst_bound(c_syst, 3, d) <= delta / 2:
        n_delta = 3
    else:
        lo, hi = 3, 6
        while _syst_bound(c_syst, hi, d) > delta / 2:
            lo, hi = hi, hi * 2
            if hi > 10**9:
                raise ConfigurationError("delta too small for a tractable N")
        while hi - lo > 1:  # invariant: bound(lo) > delta/2 >= bound(hi)
            mid = (lo + hi) // 2
            if _syst_bound(c_syst, mid, d) <= delta / 2:
                hi = mid
            else:
                lo = mid
        n_delta = hi
    k_delta = math.ceil((2.0 * c_rand * n_delta ** (-d / 2.0) / delta) ** 2)
    plan = BudgetPlan(delta, c_syst, c_rand, d, n_delta, max(1, k_delta))
    assert _syst_bound(c_syst, plan.n_delta, d) <= delta / 2
    assert plan.k_delta ** -0.5 * c_rand * plan.n_delta ** (-d / 2.0) <= delta / 2
    return plan


def partial_triples(values, chunk: int = CHUNK):
    """(count, sum, sum of squares) per fixed-size chunk of a value array.

    The chunk size is a constant of the package, never of the run, so the
    same values always reduce through the same tree.
    """
    v = np.asarray(values, dtype=float)
    out = []
    for start in range(0, v.size, chunk):
        part = v[start:start + chunk]
        out.append((part.size, float(np.add.reduce(part)), float(np.add.reduce(part * part))))
    return out


def aggregate(partials) -> AggregateStats:
    """Order-fixed pairwise tree merge of (count, sum, sumsq) triples."""
    tr = [np.asarray(p, dtype=float) for p in partials]
    if not tr:
        raise InsufficientDataError("nothing to aggregate")
    while len(tr) > 1:
        nxt = [tr[i] + tr[i + 1] for i in range(0, len(tr) - 1, 2)]
        if len(tr) % 2:
            nxt.append(tr[-1])
        tr = nxt
    n, s, s2 = tr[0]
    count = int(round(n))
    mean = s / n
    var = max(0.0, (s2 - s * mean) / (n - 1.0)) if count > 1 else 0.0
    return AggregateStats(count, float(mean), float(var))
