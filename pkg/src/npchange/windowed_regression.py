"""Kernel regression over contiguous time windows.

Kernel weights ``K_h(X_s - x_i)`` are evaluated once on a fixed grid of
evaluation points and folded into prefix sums, so that the Nadaraya-Watson or
local-linear estimate over any window ``[s, u]`` costs O(1) per grid point.
Time indices are 1-based and windows are closed, ``1 <= s <= u <= n``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

# Relative floor on the local-linear design determinant, scaled by the squared
# window kernel mass.
LL_SINGULARITY_FLOOR = 1e-12


class Kernel(str, enum.Enum):
    EPANECHNIKOV = "epanechnikov"
    UNIFORM = "uniform"
    TRIANGULAR = "triangular"


def kernel_eval(kernel: Kernel | str, u):
    """Evaluate a compactly supported kernel at ``u`` (scalar or array).

    All kernels are symmetric, nonnegative, integrate to one and vanish
    outside ``[-1, 1]``.

    >>> float(kernel_eval("epanechnikov", 0.0))
    0.75
    """
    kernel = Kernel(kernel)
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    inside = a <= 1.0
    if kernel is Kernel.EPANECHNIKOV:
        out = np.where(inside, 0.75 * (1.0 - u * u), 0.0)
    elif kernel is Kernel.UNIFORM:
        out = np.where(inside, 0.5, 0.0)
    else:
        out = np.where(inside, 1.0 - a, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PairedSeries:
    """Aligned regressor/response observations ``(X_t, Y_t)``, t = 1..n."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1:
            raise ValueError("x and y must be one-dimensional")
        if x.shape != y.shape:
            raise ValueError(f"x and y differ in length ({x.size} vs {y.size})")
        if x.size < 2:
            raise ValueError("a series needs at least two observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("series contains non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.size

    def window(self, start: int, end: int) -> "PairedSeries":
        """Sub-series for the closed 1-based range ``[start, end]``."""
        return PairedSeries(self.x[start - 1 : end], self.y[start - 1 : end])


@dataclass(frozen=True)
class EvaluationGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise ValueError("grid needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.size


def make_grid(series: PairedSeries, m: int = 100, lo_pct: float = 5.0,
              hi_pct: float = 95.0) -> EvaluationGrid:
    """Equidistant grid between two sample percentiles of ``series.x``.

    Percentiles use linear interpolation between order statistics. With
    ``m == 1`` the grid is the midpoint of the percentile interval.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise ValueError("need 0 <= lo_pct < hi_pct <= 100")
    lo, hi = np.percentile(series.x, [lo_pct, hi_pct], method="linear")
    if not hi > lo:
        raise ValueError("regressor sample is degenerate over the percentile range")
    if m == 1:
        return EvaluationGrid(np.array([0.5 * (lo + hi)]))
    return EvaluationGrid(np.linspace(lo, hi, m))


@dataclass(frozen=True)
class ScanAccumulator:
    """Prefix sums of kernel-weighted moments, one row per grid point.

    Column ``t`` holds the sum over observations ``1..t``; column 0 is zero.
    ``cum_n`` counts observations with strictly positive kernel weight and is
    what decides whether a window estimate is defined. Response moments are
    taken about ``y_offset`` (the sample median), which cancels exactly in
    differences of estimates and keeps constant responses exact.
    """

    h: float
    grid: EvaluationGrid
    cum_n: np.ndarray
    cum_k: np.ndarray
    cum_yk: np.ndarray
    y_offset: float = 0.0
    cum_dk: np.ndarray | None = None
    cum_d2k: np.ndarray | None = None
    cum_ydk: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.cum_k.shape[1] - 1

    @property
    def local_linear(self) -> bool:
        return self.cum_dk is not None


@njit(cache=True)
def _prefix_sums(values):
    # Neumaier-compensated running sums along axis 1.
    m, n = values.shape
    out = np.zeros((m, n + 1))
    for i in range(m):
        s = 0.0
        c = 0.0
        for t in range(n):
            v = values[i, t]
            z = s + v
            if abs(s) >= abs(v):
                c += (s - z) + v
            else:
                c += (v - z) + s
            s = z
            out[i, t + 1] = s + c
    return out


def _check_bandwidth(h: float) -> float:
    h = float(h)
    if not (np.isfinite(h) and h > 0):
        raise ValueError(f"bandwidth must be positive and finite, got {h!r}")
    return h


def kernel_weights(x: np.ndarray, grid: EvaluationGrid, h: float,
                   kernel: Kernel | str = Kernel.EPANECHNIKOV) -> np.ndarray:
    """Matrix ``W[i, s] = K((x_s - grid_i) / h) / h`` of shape (m, n)."""
    h = _check_bandwidth(h)
    return kernel_eval(kernel, (x[None, :] - grid.points[:, None]) / h) / h


def accumulate(weights: np.ndarray, x: np.ndarray, y: np.ndarray,
               grid: EvaluationGrid, h: float,
               local_linear: bool = False, center: bool = True) -> ScanAccumulator:
    """Fold a precomputed weight matrix into a :class:`ScanAccumulator`.

    ``weights`` columns must line up with ``x`` and ``y``; callers permuting
    the sample permute all three together. With ``center=False`` the
    response moments are raw sums of ``Y_s K_h``.
    """
    m, n = weights.shape
    cum_n = np.zeros((m, n + 1), dtype=np.int64)
    np.cumsum(weights > 0, axis=1, out=cum_n[:, 1:])
    offset = float(np.median(y)) if center else 0.0
    y = y - offset
    yk = weights * y[None, :]
    extra = {}
    if local_linear:
        d = x[None, :] - grid.points[:, None]
        dk = weights * d
        extra = dict(
            cum_dk=_prefix_sums(dk),
            cum_d2k=_prefix_sums(dk * d),
            cum_ydk=_prefix_sums(dk * y[None, :]),
        )
    return ScanAccumulator(
        h=float(h),
        grid=grid,
        cum_n=cum_n,
        cum_k=_prefix_sums(weights),
        cum_yk=_prefix_sums(yk),
        y_offset=offset,
        **extra,
    )


def build_accumulator(series: PairedSeries, grid: EvaluationGrid, h: float,
                      kernel: Kernel | str = Kernel.EPANECHNIKOV,
                      local_linear: bool = False, center: bool = True) -> ScanAccumulator:
    w = kernel_weights(series.x, grid, h, kernel)
    return accumulate(w, series.x, series.y, grid, h, local_linear, center)


def _window_sum(cum: np.ndarray, i: int, s: int, u: int) -> float:
    return float(cum[i, u] - cum[i, s - 1])


def _check_window(acc: ScanAccumulator, s: int, u: int, i: int):
    if not (1 <= s <= u <= acc.n):
        raise IndexError(f"invalid window [{s}, {u}] for n={acc.n}")
    if not 0 <= i < acc.grid.m:
        raise IndexError(f"grid index {i} out of range for m={acc.grid.m}")


def nw_estimate(acc: ScanAccumulator, s: int, u: int, i: int) -> float | None:
    """Nadaraya-Watson estimate at grid point ``i`` from window ``[s, u]``.

    Returns ``None`` when no observation in the window lies within the
    kernel support around the grid point.
    """
    _check_window(acc, s, u, i)
    if acc.cum_n[i, u] - acc.cum_n[i, s - 1] == 0:
        return None
    den = _window_sum(acc.cum_k, i, s, u)
    if den <= 0:
        return None
    return acc.y_offset + _window_sum(acc.cum_yk, i, s, u) / den


def ll_estimate(acc: ScanAccumulator, s: int, u: int, i: int) -> float | None:
    """Local-linear (intercept) estimate at grid point ``i`` from ``[s, u]``.

    ``None`` when the window has no kernel mass at the grid point or the
    weighted design is singular relative to ``LL_SINGULARITY_FLOOR``.
    """
    if not acc.local_linear:
        raise ValueError("accumulator was built without local-linear moments")
    _check_window(acc, s, u, i)
    if acc.cum_n[i, u] - acc.cum_n[i, s - 1] == 0:
        return None
    s0 = _window_sum(acc.cum_k, i, s, u)
    s1 = _window_sum(acc.cum_dk, i, s, u)
    s2 = _window_sum(acc.cum_d2k, i, s, u)
    t0 = _window_sum(acc.cum_yk, i, s, u)
    t1 = _window_sum(acc.cum_ydk, i, s, u)
    v = _ll_intercept(s0, s1, s2, t0, t1)
    return None if v is None else acc.y_offset + v


def _ll_intercept(s0, s1, s2, t0, t1):
    if s0 <= 0.0:
        return None
    det = s2 * s0 - s1 * s1
    if abs(det) < LL_SINGULARITY_FLOOR * s0 * s0:
        return None
    return (s2 * t0 - s1 * t1) / det
