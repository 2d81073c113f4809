"""Permutation threshold and the change / no-change decision."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .cusum_core import CusumProfile, DetectionConfig, Scanner, argmax_change_point
from .windowed_regression import PairedSeries


@dataclass(frozen=True)
class PermutationPolicy:
    """How the null distribution of ``max_t W(t)`` is resampled.

    Pairs are reordered without replacement in contiguous blocks of
    ``block_length`` observations (``None``: the smallest ``b`` with
    ``b**3 >= n``), which keeps short-range serial dependence inside each
    block. ``block_length=1`` is the plain permutation of individual pairs.
    Long blocks keep regime structure intact and so cost power, most
    visibly when a series holds more than one change.
    """

    n_permutations: int = 200
    level: float = 0.99
    seed: int = 0
    block_length: int | None = None

    def __post_init__(self):
        if self.block_length is not None and self.block_length < 1:
            raise ValueError("block_length must be at least 1")
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be at least 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"quantile level must lie in (0, 1), got {self.level!r}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def as_dict(self) -> dict:
        return {"n_permutations": self.n_permutations, "level": self.level,
                "seed": self.seed, "block_length": self.block_length}

    def block_for(self, n: int) -> int:
        if self.block_length is not None:
            return min(self.block_length, n)
        return cube_root_ceil(n)


def cube_root_ceil(n: int) -> int:
    """Smallest positive ``b`` with ``b**3 >= n``, in exact integer arithmetic."""
    b = max(1, round(n ** (1 / 3)))
    while b ** 3 < n:
        b += 1
    while b > 1 and (b - 1) ** 3 >= n:
        b -= 1
    return b


@dataclass(frozen=True)
class DetectionOutcome:
    change_detected: bool
    k_hat: int | None
    max_stat: float
    threshold: float
    n: int
    profile: CusumProfile | None = None
    permutation_maxima: np.ndarray | None = None

    def as_record(self) -> dict:
        return {
            "change_detected": self.change_detected,
            "k_hat": self.k_hat,
            "max_stat": self.max_stat,
            "threshold": self.threshold,
            "n": self.n,
        }


def nearest_rank(values: np.ndarray, level: float) -> float:
    """Order statistic of rank ``ceil(level * len(values))``."""
    v = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(level * v.size - 1e-9))
    return float(v[rank - 1])


def block_permutation(gen: np.random.Generator, n: int, block: int) -> np.ndarray:
    """Random reordering of ``0..n-1`` that keeps runs of ``block`` indices.

    Block boundaries start at a random offset so no cut point is fixed.
    """
    if block <= 1:
        return gen.permutation(n)
    offset = int(gen.integers(block))
    cuts = np.arange(offset if offset else block, n, block)
    pieces = np.split(np.arange(n), cuts)
    return np.concatenate([pieces[j] for j in gen.permutation(len(pieces))])


def permutation_orders(n: int, policy: PermutationPolicy):
    """Yield the index permutations used by ``policy`` for a sample of size n."""
    block = policy.block_for(n)
    for b in range(policy.n_permutations):
        yield block_permutation(rng.stream(policy.seed, rng.PERMUTATION, b), n, block)


def permutation_maxima(series: PairedSeries, config: DetectionConfig,
                       policy: PermutationPolicy,
                       scanner: Scanner | None = None) -> np.ndarray:
    """``max_t W(t)`` on each jointly permuted copy of the pairs.

    The evaluation grid and bandwidth are those of the original ordering.
    """
    scanner = scanner or Scanner(series, config)
    return np.array([
        float(scanner.profile(order).values.max())
        for order in permutation_orders(series.n, policy)
    ])


def permutation_threshold(series: PairedSeries, config: DetectionConfig,
                          policy: PermutationPolicy) -> float:
    return nearest_rank(permutation_maxima(series, config, policy), policy.level)


def detect(series: PairedSeries, config: DetectionConfig,
           policy: PermutationPolicy) -> DetectionOutcome:
    """Scan, threshold by permutation, and decide.

    A change is declared only when the maximum strictly exceeds the
    threshold.
    """
    scanner = Scanner(series, config)
    profile = scanner.profile()
    est = argmax_change_point(profile)
    maxima = permutation_maxima(series, config, policy, scanner)
    threshold = nearest_rank(maxima, policy.level)
    detected = est.max_stat > threshold
    return DetectionOutcome(
        change_detected=bool(detected),
        k_hat=est.k_hat if detected else None,
        max_stat=est.max_stat,
        threshold=threshold,
        n=series.n,
        profile=profile,
        permutation_maxima=maxima,
    )
