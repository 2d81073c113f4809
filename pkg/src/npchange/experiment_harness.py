"""Monte Carlo driver for bias, detection-rate and scaling studies.

Each replication draws its data and permutation streams from keys derived
from ``(master_seed, replication index)``, so reports do not depend on the
order replications run in or on the number of worker processes.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .cusum_core import (
    Aggregation,
    DetectionConfig,
    Estimator,
    Scanner,
    argmax_change_point,
)
from .dgp_sim import DESIGNS, ChangeKind, ChangeModelSpec, simulate
from .thresholding import PermutationPolicy, detect

THREADS_ENV = "NPCHANGE_THREADS"


class Method(str, enum.Enum):
    NWSS = "nwss"
    NWSUP = "nwsup"
    LLSS = "llss"
    LLSUP = "llsup"

    @property
    def estimator(self) -> Estimator:
        return Estimator.NADARAYA_WATSON if self.value.startswith("nw") else Estimator.LOCAL_LINEAR

    @property
    def aggregation(self) -> Aggregation:
        return Aggregation.SUM_OF_SQUARES if self.value.endswith("ss") else Aggregation.SUPREMUM


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if workers < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return workers


@dataclass(frozen=True)
class ExperimentSpec:
    design: str
    model: ChangeModelSpec
    n: int
    method: Method = Method.NWSS
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    policy: PermutationPolicy | None = None
    replications: int = 200
    master_seed: int = 0

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}; choose from {sorted(DESIGNS)}")
        object.__setattr__(self, "method", Method(self.method))
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def config(self) -> DetectionConfig:
        return replace(self.detection, estimator=self.method.estimator,
                       aggregation=self.method.aggregation)

    @property
    def change_index(self) -> int:
        return self.model.change_index(self.n)

    def as_dict(self) -> dict:
        return {
            "design": self.design,
            "model": self.model.as_dict(),
            "n": self.n,
            "method": self.method.value,
            "detection": self.config.as_dict(),
            "policy": None if self.policy is None else self.policy.as_dict(),
            "replications": self.replications,
            "master_seed": self.master_seed,
        }


@dataclass(frozen=True)
class Replicate:
    index: int
    k_hat: int | None
    max_stat: float
    threshold: float | None
    detected: bool | None


@dataclass(frozen=True)
class ExperimentReport:
    """Summary metrics over replications.

    ``bias`` etc. are computed from the replications that produced an
    estimate (all of them in bias mode, the detected ones in detection mode);
    they are NaN when there are none. Standard deviations use the N-1 divisor
    and are 0 for a single estimate. ``pdc`` is NaN in bias mode.
    """

    bias: float
    abias: float
    bias_sd: float
    abias_sd: float
    pdc: float
    replications: int
    change_index: int
    replicates: list[Replicate]

    @property
    def per_replication_khat(self) -> list[int | None]:
        return [r.k_hat for r in self.replicates]

    def as_record(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v
        return {
            "bias": clean(self.bias),
            "abias": clean(self.abias),
            "bias_sd": clean(self.bias_sd),
            "abias_sd": clean(self.abias_sd),
            "pdc": clean(self.pdc),
            "replications": self.replications,
            "change_index": self.change_index,
        }


def _sd(values: np.ndarray, mean: float) -> float:
    if values.size < 2:
        return 0.0
    return math.sqrt(math.fsum((values - mean) ** 2) / (values.size - 1))


def summarize(replicates: list[Replicate], k: int, with_pdc: bool) -> ExperimentReport:
    errors = np.array([r.k_hat - k for r in replicates if r.k_hat is not None], dtype=float)
    if errors.size:
        bias = math.fsum(errors) / errors.size
        abs_err = np.abs(errors)
        abias = math.fsum(abs_err) / errors.size
        bias_sd, abias_sd = _sd(errors, bias), _sd(abs_err, abias)
    else:
        bias = abias = bias_sd = abias_sd = math.nan
    pdc = math.nan
    if with_pdc:
        pdc = sum(bool(r.detected) for r in replicates) / len(replicates)
    return ExperimentReport(bias, abias, bias_sd, abias_sd, pdc, len(replicates), k,
                            list(replicates))


def replication_policy(spec: ExperimentSpec, r: int) -> PermutationPolicy:
    return replace(spec.policy, seed=rng.derive_seed(spec.master_seed, rng.REPLICATION, r))


def run_replicate(spec: ExperimentSpec, r: int, threshold: bool) -> Replicate:
    """One replication; ``threshold`` switches on the permutation decision."""
    try:
        series = simulate(spec.design, spec.model, spec.n, spec.master_seed, r)
        if not threshold:
            est = argmax_change_point(Scanner(series, spec.config).profile())
            return Replicate(r, est.k_hat, est.max_stat, None, None)
        out = detect(series, spec.config, replication_policy(spec, r))
    except Exception as exc:
        raise RuntimeError(f"replication {r} failed: {exc}") from exc
    return Replicate(r, out.k_hat, out.max_stat, out.threshold, out.change_detected)


def _run_chunk(args):
    spec, indices, threshold = args
    return [run_replicate(spec, r, threshold) for r in indices]


def run_replicates(spec: ExperimentSpec, threshold: bool,
                   workers: int | None = None) -> list[Replicate]:
    workers = default_workers() if workers is None else workers
    indices = list(range(spec.replications))
    if workers <= 1 or len(indices) < 2:
        return _run_chunk((spec, indices, threshold))
    chunks = [indices[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(spec, c, threshold) for c in chunks if c]))
    return sorted((r for part in parts for r in part), key=lambda r: r.index)


def run_bias_experiment(spec: ExperimentSpec, workers: int | None = None) -> ExperimentReport:
    """Unconditional argmax in every replication; no threshold involved."""
    reps = run_replicates(spec, threshold=False, workers=workers)
    return summarize(reps, spec.change_index, with_pdc=False)


def run_pdc_experiment(spec: ExperimentSpec, workers: int | None = None) -> ExperimentReport:
    """Fraction of replications whose maximum exceeds the permutation threshold."""
    if spec.policy is None:
        raise ValueError("detection-rate experiments need a permutation policy")
    reps = run_replicates(spec, threshold=True, workers=workers)
    return summarize(reps, spec.change_index, with_pdc=True)


@dataclass(frozen=True)
class ScalingRow:
    n: int
    bandwidth: float
    mean_max_stat: float
    normalizer: float
    ratio: float

    def as_record(self) -> dict:
        return {"n": self.n, "bandwidth": self.bandwidth, "mean_max_stat": self.mean_max_stat,
                "normalizer": self.normalizer, "ratio": self.ratio}


def theorem_scaling_probe(n_values, spec_template: ExperimentSpec, omega: float = 0.2,
                          workers: int | None = None) -> list[ScalingRow]:
    """Mean ``max_t W(t)`` against the ``log(n)^4 / (n h)`` rate with ``h = n**-omega``.

    The template's model and design are used as given; pass a no-change
    model (m42 with ``delta_phi = 0``) to probe the null rate.
    """
    rows = []
    for n in n_values:
        h = float(n) ** (-omega)
        spec = replace(spec_template, n=int(n),
                       detection=spec_template.detection.with_bandwidth(h))
        reps = run_replicates(spec, threshold=False, workers=workers)
        mean_max = math.fsum(r.max_stat for r in reps) / len(reps)
        norm = math.log(n) ** 4 / (n * h)
        rows.append(ScalingRow(int(n), h, mean_max, norm, mean_max / norm))
    return rows


def null_model(theta: float = 0.4) -> ChangeModelSpec:
    return ChangeModelSpec(ChangeKind.M42, theta, 0.0)
