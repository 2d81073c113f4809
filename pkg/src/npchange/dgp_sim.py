"""Simulated regressor/noise processes and the two change models.

ARMA(1,1) and ARFIMA(0,d,0) series with Gaussian innovations. ARFIMA is
synthesised by the AR(infinity) form of ``(1 - L)^d X_t = u_t`` truncated at
the full simulated length, i.e. pre-sample values are zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import rng
from .windowed_regression import PairedSeries


@dataclass(frozen=True)
class ARMA11:
    ar: float
    ma: float
    innov_sd: float

    def __post_init__(self):
        if not abs(self.ar) < 1:
            raise ValueError(f"ARMA(1,1) needs |ar| < 1 for stationarity, got {self.ar}")
        if not self.innov_sd > 0:
            raise ValueError("innovation sd must be positive")


@dataclass(frozen=True)
class ARFIMA0d0:
    d: float
    innov_sd: float

    def __post_init__(self):
        if not abs(self.d) < 0.5:
            raise ValueError(f"ARFIMA(0,d,0) needs |d| < 0.5, got {self.d}")
        if not self.innov_sd > 0:
            raise ValueError("innovation sd must be positive")


@dataclass(frozen=True)
class DgpSpec:
    process: ARMA11 | ARFIMA0d0
    n: int
    seed: int = 0
    burn_in: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    @property
    def burn(self) -> int:
        if self.burn_in is not None:
            return self.burn_in
        return 500 if isinstance(self.process, ARMA11) else 1000


# Processes used in the simulation study; both regressors have unit variance.
ARMA_REGRESSOR = ARMA11(ar=0.5, ma=0.5, innov_sd=math.sqrt(3.0 / 7.0))
ARMA_NOISE = ARMA11(ar=0.0, ma=0.0, innov_sd=0.5)
ARFIMA_REGRESSOR = ARFIMA0d0(
    d=0.15, innov_sd=math.sqrt(math.gamma(0.85) ** 2 / math.gamma(0.7)))
ARFIMA_NOISE = ARFIMA0d0(d=0.35, innov_sd=0.1)

DESIGNS = {
    "arma": (ARMA_REGRESSOR, ARMA_NOISE),
    "arfima": (ARFIMA_REGRESSOR, ARFIMA_NOISE),
}


def _innovations(spec: DgpSpec, sd: float) -> np.ndarray:
    g = rng.stream(spec.seed)
    return sd * g.standard_normal(spec.n + spec.burn)


def white_noise(spec: DgpSpec) -> np.ndarray:
    """Gaussian white noise with the innovation sd of ``spec.process``."""
    return _innovations(spec, spec.process.innov_sd)[spec.burn:]


def gen_arma11(spec: DgpSpec) -> np.ndarray:
    """``X_t = ar X_{t-1} + u_t + ma u_{t-1}``, burn-in discarded."""
    p = spec.process
    if not isinstance(p, ARMA11):
        raise TypeError("gen_arma11 needs an ARMA11 process")
    u = _innovations(spec, p.innov_sd)
    if p.ar == 0 and p.ma == 0:
        return u[spec.burn:]
    return lfilter([1.0, p.ma], [1.0, -p.ar], u)[spec.burn:]


def frac_diff_coefficients(d: float, length: int) -> np.ndarray:
    """Coefficients of ``(1 - L)^d`` up to lag ``length - 1``."""
    c = np.empty(length)
    c[0] = 1.0
    for j in range(1, length):
        c[j] = c[j - 1] * (j - 1 - d) / j
    return c


def gen_arfima0d0(spec: DgpSpec) -> np.ndarray:
    p = spec.process
    if not isinstance(p, ARFIMA0d0):
        raise TypeError("gen_arfima0d0 needs an ARFIMA0d0 process")
    u = _innovations(spec, p.innov_sd)
    if p.d == 0:
        return u[spec.burn:]
    a = frac_diff_coefficients(p.d, u.size)
    return lfilter([1.0], a, u)[spec.burn:]


def generate(spec: DgpSpec) -> np.ndarray:
    if isinstance(spec.process, ARMA11):
        return gen_arma11(spec)
    return gen_arfima0d0(spec)


def arfima_autocorrelation(d: float, k: int) -> float:
    """Theoretical lag-``k`` autocorrelation of ARFIMA(0,d,0)."""
    return math.exp(
        math.lgamma(1 - d) + math.lgamma(k + d) - math.lgamma(d) - math.lgamma(k + 1 - d)
    )


class ChangeKind(str, enum.Enum):
    M41 = "m41"  # 1 + x  ->  x^2
    M42 = "m42"  # x^2    ->  (x + delta_phi)^2


@dataclass(frozen=True)
class ChangeModelSpec:
    kind: ChangeKind
    theta: float
    delta_phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ChangeKind(self.kind))
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")

    def change_index(self, n: int) -> int:
        return int(math.floor(self.theta * n + 1e-9))

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "theta": self.theta, "delta_phi": self.delta_phi}


def apply_change_model(x, eps, model: ChangeModelSpec) -> PairedSeries:
    """Responses with the regression function switching after ``floor(theta*n)``."""
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x.shape != eps.shape:
        raise ValueError(f"x and eps differ in length ({x.size} vs {eps.size})")
    k = model.change_index(x.size)
    before = np.arange(x.size) < k
    if model.kind is ChangeKind.M41:
        y = np.where(before, 1.0 + x, x * x) + eps
    else:
        shifted = x + model.delta_phi
        y = np.where(before, x * x, shifted * shifted) + eps
    return PairedSeries(x, y)


def simulate(design: str, model: ChangeModelSpec, n: int, seed: int,
             replicate: int = 0) -> PairedSeries:
    """One sample from a named design; X and noise use disjoint streams."""
    regressor, noise = DESIGNS[design]
    x = generate(DgpSpec(regressor, n, rng.derive_seed(seed, rng.REGRESSOR, replicate)))
    eps = generate(DgpSpec(noise, n, rng.derive_seed(seed, rng.NOISE, replicate)))
    return apply_change_model(x, eps, model)
