"""CUSUM scan of split-sample regression differences and its argmax."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .windowed_regression import (
    LL_SINGULARITY_FLOOR,
    EvaluationGrid,
    Kernel,
    PairedSeries,
    ScanAccumulator,
    accumulate,
    kernel_weights,
    make_grid,
)


class Aggregation(str, enum.Enum):
    SUM_OF_SQUARES = "ss"
    SUPREMUM = "sup"


class Estimator(str, enum.Enum):
    NADARAYA_WATSON = "nw"
    LOCAL_LINEAR = "ll"


@dataclass(frozen=True)
class DetectionConfig:
    """Everything a single scan needs besides the data.

    When ``grid`` is ``None`` an equidistant grid of ``m`` points between the
    ``lo_pct`` and ``hi_pct`` percentiles of the scanned sample is built.
    """

    bandwidth: float = 1.0
    kernel: Kernel = Kernel.EPANECHNIKOV
    grid: EvaluationGrid | None = None
    m: int = 100
    lo_pct: float = 5.0
    hi_pct: float = 95.0
    trim: float = 0.05
    aggregation: Aggregation = Aggregation.SUM_OF_SQUARES
    estimator: Estimator = Estimator.NADARAYA_WATSON

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        h = float(self.bandwidth)
        if not (math.isfinite(h) and h > 0):
            raise ValueError(f"bandwidth must be positive and finite, got {self.bandwidth!r}")
        object.__setattr__(self, "bandwidth", h)
        if not 0.0 < self.trim < 0.5:
            raise ValueError(f"trim fraction must lie in (0, 0.5), got {self.trim!r}")
        if self.grid is None:
            if self.m < 1:
                raise ValueError("m must be at least 1")
            if not 0.0 <= self.lo_pct < self.hi_pct <= 100.0:
                raise ValueError("need 0 <= lo_pct < hi_pct <= 100")

    def with_bandwidth(self, h: float) -> "DetectionConfig":
        return replace(self, bandwidth=h)

    def grid_for(self, series: PairedSeries) -> EvaluationGrid:
        if self.grid is not None:
            return self.grid
        return make_grid(series, self.m, self.lo_pct, self.hi_pct)

    def as_dict(self) -> dict:
        return {
            "bandwidth": self.bandwidth,
            "kernel": self.kernel.value,
            "grid": None if self.grid is None else self.grid.points.tolist(),
            "m": self.m,
            "lo_pct": self.lo_pct,
            "hi_pct": self.hi_pct,
            "trim": self.trim,
            "aggregation": self.aggregation.value,
            "estimator": self.estimator.value,
        }


def trim_size(n: int, trim: float) -> int:
    """Boundary trim ``floor(n * trim)``, robust to representation error."""
    return int(math.floor(n * trim + 1e-9))


def check_scan_feasible(n: int, trim: float) -> int:
    delta = trim_size(n, trim)
    if n < 2 * delta + 2:
        raise ScanInfeasibleError(
            f"series of length {n} is too short for trim fraction {trim}"
        )
    return delta


class ScanInfeasibleError(ValueError):
    """The trimmed scan range is empty."""


@dataclass(frozen=True)
class CusumProfile:
    """Scan statistic ``W(t)`` for ``t = trim .. n - trim`` (1-based split)."""

    n: int
    trim: int
    values: np.ndarray
    undefined_counts: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.trim, self.n - self.trim + 1)

    def at(self, t: int) -> float:
        return float(self.values[t - self.trim])

    def to_text(self) -> str:
        lines = [f"{t}\t{v!r}" for t, v in zip(self.t.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ChangePointEstimate:
    k_hat: int
    max_stat: float
    ties: int


@njit(cache=True)
def _scan_nw(cum_n, cum_k, cum_yk, trim, use_sup):
    m, cols = cum_k.shape
    n = cols - 1
    size = n - 2 * trim + 1
    values = np.zeros(size)
    undefined = np.zeros(size, dtype=np.int64)
    nn = float(n) * float(n)
    for j in range(size):
        t = trim + j
        agg = 0.0
        skipped = 0
        for i in range(m):
            if cum_n[i, t] == 0 or cum_n[i, n] - cum_n[i, t] == 0:
                skipped += 1
                continue
            den_l = cum_k[i, t]
            den_r = cum_k[i, n] - cum_k[i, t]
            if den_l <= 0.0 or den_r <= 0.0:
                skipped += 1
                continue
            diff = abs(cum_yk[i, t] / den_l - (cum_yk[i, n] - cum_yk[i, t]) / den_r)
            if use_sup:
                if diff > agg:
                    agg = diff
            else:
                agg += diff * diff
        values[j] = (float(t) * float(n - t) / nn) * agg
        undefined[j] = skipped
    return values, undefined


@njit(cache=True)
def _ll_value(s0, s1, s2, t0, t1, floor):
    # NaN marks an undefined estimate.
    if s0 <= 0.0:
        return np.nan
    det = s2 * s0 - s1 * s1
    if abs(det) < floor * s0 * s0:
        return np.nan
    return (s2 * t0 - s1 * t1) / det


@njit(cache=True)
def _scan_ll(cum_n, cum_k, cum_yk, cum_dk, cum_d2k, cum_ydk, trim, use_sup, floor):
    m, cols = cum_k.shape
    n = cols - 1
    size = n - 2 * trim + 1
    values = np.zeros(size)
    undefined = np.zeros(size, dtype=np.int64)
    nn = float(n) * float(n)
    for j in range(size):
        t = trim + j
        agg = 0.0
        skipped = 0
        for i in range(m):
            if cum_n[i, t] == 0 or cum_n[i, n] - cum_n[i, t] == 0:
                skipped += 1
                continue
            left = _ll_value(cum_k[i, t], cum_dk[i, t], cum_d2k[i, t],
                             cum_yk[i, t], cum_ydk[i, t], floor)
            right = _ll_value(cum_k[i, n] - cum_k[i, t],
                              cum_dk[i, n] - cum_dk[i, t],
                              cum_d2k[i, n] - cum_d2k[i, t],
                              cum_yk[i, n] - cum_yk[i, t],
                              cum_ydk[i, n] - cum_ydk[i, t], floor)
            if np.isnan(left) or np.isnan(right):
                skipped += 1
                continue
            diff = abs(left - right)
            if use_sup:
                if diff > agg:
                    agg = diff
            else:
                agg += diff * diff
        values[j] = (float(t) * float(n - t) / nn) * agg
        undefined[j] = skipped
    return values, undefined


def profile_from_accumulator(acc: ScanAccumulator, trim: int,
                             aggregation: Aggregation | str = Aggregation.SUM_OF_SQUARES,
                             estimator: Estimator | str = Estimator.NADARAYA_WATSON,
                             ) -> CusumProfile:
    """Scan every split ``t`` in ``[trim, n - trim]`` using prefix sums."""
    n = acc.n
    if trim < 0 or n - 2 * trim + 1 < 1:
        raise ScanInfeasibleError(f"empty scan range for n={n}, trim={trim}")
    use_sup = Aggregation(aggregation) is Aggregation.SUPREMUM
    if Estimator(estimator) is Estimator.LOCAL_LINEAR:
        if not acc.local_linear:
            raise ValueError("accumulator was built without local-linear moments")
        values, undefined = _scan_ll(acc.cum_n, acc.cum_k, acc.cum_yk, acc.cum_dk,
                                     acc.cum_d2k, acc.cum_ydk, trim, use_sup,
                                     LL_SINGULARITY_FLOOR)
    else:
        values, undefined = _scan_nw(acc.cum_n, acc.cum_k, acc.cum_yk, trim, use_sup)
    return CusumProfile(n=n, trim=trim, values=values, undefined_counts=undefined)


class Scanner:
    """Repeated scans of one sample under reorderings of its observations.

    The kernel weight matrix depends only on the ``(x, grid, h)`` triple, so
    a joint permutation of the pairs only permutes its columns.
    """

    def __init__(self, series: PairedSeries, config: DetectionConfig,
                 grid: EvaluationGrid | None = None):
        self.series = series
        self.config = config
        self.trim = check_scan_feasible(series.n, config.trim)
        self.grid = grid if grid is not None else config.grid_for(series)
        self.weights = kernel_weights(series.x, self.grid, config.bandwidth, config.kernel)

    @property
    def local_linear(self) -> bool:
        return self.config.estimator is Estimator.LOCAL_LINEAR

    def accumulator(self, order: np.ndarray | None = None) -> ScanAccumulator:
        x, y, w = self.series.x, self.series.y, self.weights
        if order is not None:
            x, y, w = x[order], y[order], w[:, order]
        return accumulate(w, x, y, self.grid, self.config.bandwidth, self.local_linear)

    def profile(self, order: np.ndarray | None = None) -> CusumProfile:
        return profile_from_accumulator(self.accumulator(order), self.trim,
                                        self.config.aggregation, self.config.estimator)


def cusum_profile(series: PairedSeries, config: DetectionConfig) -> CusumProfile:
    """Scan statistic of ``series`` under ``config``; O(n*m) after setup."""
    return Scanner(series, config).profile()


def argmax_change_point(profile: CusumProfile) -> ChangePointEstimate:
    """Largest ``W(t)``; ties resolve to the smallest ``t``."""
    values = profile.values
    if values.size == 0:
        raise ValueError("empty profile")
    j = int(np.argmax(values))
    best = values[j]
    return ChangePointEstimate(
        k_hat=profile.trim + j,
        max_stat=float(best),
        ties=int(np.count_nonzero(values == best)),
    )


def reverse_series(series: PairedSeries) -> PairedSeries:
    return PairedSeries(series.x[::-1].copy(), series.y[::-1].copy())
