"""Multiple change points by binary segmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from . import rng
from .bandwidth_select import DEFAULT_CANDIDATES, select_bandwidth
from .cusum_core import CusumProfile, DetectionConfig, trim_size
from .thresholding import PermutationPolicy, detect
from .windowed_regression import PairedSeries

CHANGE = "change"
NO_CHANGE = "no_change"
TOO_SHORT = "too_short"
FAILED = "failed"


@dataclass(frozen=True)
class SegmentRecord:
    """One visited segment, in global 1-based coordinates."""

    start: int
    end: int
    depth: int
    decision: str
    k_hat: int | None = None
    max_stat: float = math.nan
    threshold: float = math.nan
    bandwidth: float = math.nan
    profile: CusumProfile | None = None
    error: str | None = None

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def as_record(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "depth": self.depth,
            "decision": self.decision,
            "k_hat": self.k_hat,
            "max_stat": None if math.isnan(self.max_stat) else self.max_stat,
            "threshold": None if math.isnan(self.threshold) else self.threshold,
            "bandwidth": None if math.isnan(self.bandwidth) else self.bandwidth,
            "error": self.error,
        }


@dataclass(frozen=True)
class SegmentationResult:
    change_points: list[int]
    segments: list[SegmentRecord]  # leaves, ordered by start; they partition [1, n]
    nodes: list[SegmentRecord]  # every visited segment in depth-first order
    tree_depth: int


def segment_policy(policy: PermutationPolicy, start: int, end: int) -> PermutationPolicy:
    """Permutation policy for a segment, keyed only by its global bounds."""
    return replace(policy, seed=rng.derive_seed(policy.seed, rng.SEGMENT, start, end))


def binary_segmentation(series: PairedSeries, config: DetectionConfig,
                        policy: PermutationPolicy, min_segment: int = 50,
                        rebandwidth: bool = False,
                        n_candidates: int = DEFAULT_CANDIDATES,
                        offset: int = 0) -> SegmentationResult:
    """Recursively detect and split until no segment shows a change.

    A detected change at ``k`` splits ``[start, end]`` into ``[start, k]``
    and ``[k + 1, end]``. Branches stop when a segment is shorter than
    ``min_segment`` or its maximum does not exceed its own permutation
    threshold. ``offset`` shifts reported indices, so a segment re-run on
    its own reproduces the decision it got inside the full series.
    """
    if min_segment < 2 * trim_size(min_segment, config.trim) + 2:
        raise ValueError(f"min_segment={min_segment} leaves no room to scan")

    nodes: list[SegmentRecord] = []

    def visit(start: int, end: int, depth: int):
        # start/end are local 1-based bounds
        g0, g1 = start + offset, end + offset
        if end - start + 1 < min_segment:
            nodes.append(SegmentRecord(g0, g1, depth, TOO_SHORT))
            return
        sub = series.window(start, end)
        cfg = config
        try:
            if rebandwidth:
                h = select_bandwidth(sub, config, n_candidates).h_star
                cfg = config.with_bandwidth(h)
            out = detect(sub, cfg, segment_policy(policy, g0, g1))
        except ValueError as exc:
            # e.g. a segment whose regressor values are all equal
            nodes.append(SegmentRecord(g0, g1, depth, FAILED, error=str(exc)))
            return
        if not out.change_detected:
            nodes.append(SegmentRecord(g0, g1, depth, NO_CHANGE, None, out.max_stat,
                                       out.threshold, cfg.bandwidth, out.profile))
            return
        k = start + out.k_hat - 1
        nodes.append(SegmentRecord(g0, g1, depth, CHANGE, k + offset, out.max_stat,
                                   out.threshold, cfg.bandwidth, out.profile))
        visit(start, k, depth + 1)
        visit(k + 1, end, depth + 1)

    visit(1, series.n, 0)
    leaves = sorted((r for r in nodes if r.decision != CHANGE), key=lambda r: r.start)
    return SegmentationResult(
        change_points=sorted(r.k_hat for r in nodes if r.decision == CHANGE),
        segments=leaves,
        nodes=nodes,
        tree_depth=max(r.depth for r in nodes),
    )
