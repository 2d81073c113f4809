"""Bandwidth choice by maximising ``F(h) = h * max_t W(t)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cusum_core import DetectionConfig, Scanner
from .windowed_regression import PairedSeries

DEFAULT_CANDIDATES = 50


@dataclass(frozen=True)
class BandwidthSearch:
    h_grid: np.ndarray
    f_values: np.ndarray
    h_star: float

    def to_text(self) -> str:
        return "".join(f"{h!r}\t{f!r}\n"
                       for h, f in zip(self.h_grid.tolist(), self.f_values.tolist()))


def candidate_bandwidths(series: PairedSeries, n_candidates: int) -> np.ndarray:
    """``n_candidates`` equidistant values ending at half the range of x."""
    if n_candidates < 2:
        raise ValueError("need at least two bandwidth candidates")
    span = float(series.x.max() - series.x.min())
    if not span > 0:
        raise ValueError("regressor has zero range; bandwidth search is undefined")
    step = span / (2 * n_candidates)
    return step * np.arange(1, n_candidates + 1)


def select_bandwidth(series: PairedSeries, config: DetectionConfig,
                     n_candidates: int = DEFAULT_CANDIDATES) -> BandwidthSearch:
    """Evaluate ``F`` on the candidate grid and return its maximiser.

    The evaluation grid is fixed from ``config`` before the search so that
    only the bandwidth varies; ties go to the smallest bandwidth.
    """
    h_grid = candidate_bandwidths(series, n_candidates)
    grid = config.grid_for(series)
    f = np.empty_like(h_grid)
    for j, h in enumerate(h_grid):
        profile = Scanner(series, config.with_bandwidth(h), grid=grid).profile()
        f[j] = profile.values.max() * h
    return BandwidthSearch(h_grid=h_grid, f_values=f, h_star=float(h_grid[np.argmax(f)]))
