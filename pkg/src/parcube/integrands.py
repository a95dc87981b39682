"""Benchmark integrand families, reference values, and the QMC oracle.

The six families stress different failure modes of multidimensional
integrators: oscillation, a product of per-axis peaks, a corner peak,
an isotropic Gaussian peak, a kinked exponential, and a discontinuous
exponential.  Reference integrals are derived independently of both
integrators (separable 1-d closed forms where possible) and every value
carries its derivation method and a claimed absolute error.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import qmc

from .core import Integrand, check_dimension

SEPARABLE_ANALYTIC = "separable-analytic"
CLOSED_FORM = "closed-form"
ORACLE = "low-discrepancy-oracle"


class Oscillatory(Integrand):
    """cos(sum_i i * x_i), coefficients 1..d."""

    def __init__(self, d: int):
        super().__init__(d)
        self.coeffs = np.arange(1, d + 1, dtype=float)

    def __call__(self, x) -> float:
        return math.cos(float(np.dot(self.coeffs, x)))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        return np.cos(points @ self.coeffs)


class ProductPeak(Integrand):
    """prod_i 1 / (a^2 + (x_i - 1/2)^2) with a = 1/50."""

    a2 = 1.0 / 2500.0

    def __call__(self, x) -> float:
        u = np.asarray(x, dtype=float) - 0.5
        return float(np.prod(1.0 / (self.a2 + u * u)))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        u = points - 0.5
        return np.prod(1.0 / (self.a2 + u * u), axis=1)


class CornerPeak(Integrand):
    """(1 + sum_i i * x_i)^(-d-1), peaked at the origin corner."""

    def __init__(self, d: int):
        super().__init__(d)
        self.coeffs = np.arange(1, d + 1, dtype=float)

    def __call__(self, x) -> float:
        return (1.0 + float(np.dot(self.coeffs, x))) ** (-self.d - 1)

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        return (1.0 + points @ self.coeffs) ** (-self.d - 1)


class GaussianPeak(Integrand):
    """exp(-625 * sum_i (x_i - 1/2)^2), an isotropic needle at the center."""

    rate = 625.0

    def __call__(self, x) -> float:
        u = np.asarray(x, dtype=float) - 0.5
        return math.exp(-self.rate * float(np.dot(u, u)))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        u = points - 0.5
        return np.exp(-self.rate * np.sum(u * u, axis=1))


class KinkedExponential(Integrand):
    """exp(-10 * sum_i |x_i - 1/2|); C0 but not C1 on the midplanes."""

    def __call__(self, x) -> float:
        u = np.asarray(x, dtype=float) - 0.5
        return math.exp(-10.0 * float(np.sum(np.abs(u))))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        return np.exp(-10.0 * np.sum(np.abs(points - 0.5), axis=1))


class DiscontinuousExponential(Integrand):
    """exp(sum_i (i+4) x_i) where every x_i < (3+i)/10, else 0.

    The thresholds are taken literally, so axes with (3+i)/10 >= 1 are
    never cut inside the unit cube.
    """

    def __init__(self, d: int):
        super().__init__(d)
        self.coeffs = np.arange(1, d + 1, dtype=float) + 4.0
        self.thresholds = (3.0 + np.arange(1, d + 1, dtype=float)) / 10.0

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if np.any(x >= self.thresholds):
            return 0.0
        return math.exp(float(np.dot(self.coeffs, x)))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        inside = np.all(points < self.thresholds, axis=1)
        out = np.zeros(len(points))
        if inside.any():
            out[inside] = np.exp(points[inside] @ self.coeffs)
        return out


class SumIntegrand(Integrand):
    """sum_i x_i; unit-cube integral d/2."""

    def __call__(self, x) -> float:
        return float(np.sum(x))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        return np.sum(points, axis=1)


BENCHMARKS = {
    "f1": Oscillatory,
    "f2": ProductPeak,
    "f3": CornerPeak,
    "f4": GaussianPeak,
    "f5": KinkedExponential,
    "f6": DiscontinuousExponential,
    "sum": SumIntegrand,
}


def get_integrand(name: str, d: int) -> Integrand:
    """Look up a benchmark integrand by string id ("f1".."f6", "sum")."""
    try:
        cls = BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown integrand {name!r}; choose from {sorted(BENCHMARKS)}")
    return cls(check_dimension(d))


def sum_integrand(d: int) -> SumIntegrand:
    return SumIntegrand(d)


@dataclass(frozen=True)
class ReferenceValue:
    value: float
    method: str
    claimed_abs_error: float

    def __post_init__(self):
        if self.claimed_abs_error < 0:
            raise ValueError("claimed_abs_error must be nonnegative")


def _corner_peak_closed_form(d: int) -> tuple[float, float]:
    """Inclusion-exclusion closed form for (1 + sum i*x_i)^(-d-1).

    value = (1 / (d! * prod(c))) * sum_{S subset} (-1)^|S| / (1 + sum_{i in S} c_i).
    The alternating sum loses digits as d grows; the claimed error tracks
    the cancellation magnitude.
    """
    coeffs = list(range(1, d + 1))
    terms = []
    for r in range(d + 1):
        for subset in combinations(coeffs, r):
            terms.append((-1.0) ** r / (1.0 + sum(subset)))
    scale = 1.0 / (math.factorial(d) * math.prod(coeffs))
    total = math.fsum(terms)
    # fsum is exact; residual cancellation error enters via the terms' own
    # representation, about one ulp of the largest term each
    err = scale * len(terms) * np.finfo(float).eps
    return scale * total, err


def reference_value(name: str, d: int) -> ReferenceValue:
    """Independently derived unit-cube integral for a benchmark family."""
    d = check_dimension(d)
    eps = np.finfo(float).eps
    if name == "f1":
        prod = complex(1.0, 0.0)
        for k in range(1, d + 1):
            prod *= (cmath.exp(1j * k) - 1.0) / (1j * k)
        value = prod.real
        return ReferenceValue(value, CLOSED_FORM, 8 * d * eps * max(abs(prod), abs(value)))
    if name == "f2":
        axis = 100.0 * math.atan(25.0)
        value = axis**d
        return ReferenceValue(value, SEPARABLE_ANALYTIC, 8 * d * eps * value)
    if name == "f3":
        value, err = _corner_peak_closed_form(d)
        return ReferenceValue(value, CLOSED_FORM, err)
    if name == "f4":
        axis = math.sqrt(math.pi) * math.erf(12.5) / 25.0
        value = axis**d
        return ReferenceValue(value, SEPARABLE_ANALYTIC, 8 * d * eps * value)
    if name == "f5":
        axis = (1.0 - math.exp(-5.0)) / 5.0
        value = axis**d
        return ReferenceValue(value, SEPARABLE_ANALYTIC, 8 * d * eps * value)
    if name == "f6":
        value = 1.0
        for i in range(1, d + 1):
            c = i + 4.0
            t = min((3.0 + i) / 10.0, 1.0)
            value *= (math.exp(c * t) - 1.0) / c
        return ReferenceValue(value, SEPARABLE_ANALYTIC, 16 * d * eps * value)
    if name == "sum":
        return ReferenceValue(d / 2.0, CLOSED_FORM, 0.0)
    raise KeyError(f"no reference value for integrand {name!r}")


def oracle_integral(
    f: Integrand,
    d: int,
    n_points: int,
    n_shifts: int = 16,
    seed: int = 20260810,
) -> tuple[float, float]:
    """Independent brute-force integral: randomized digital-sequence average.

    Averages `f` over `n_points` Sobol points (rounded up to a power of
    two for balance), repeated under `n_shifts` independent random
    rotations x -> frac(x + u); the estimate is the mean over shifts and
    the error bound is three standard errors of that mean.  Deterministic
    for fixed `seed`.
    """
    if n_points < 2**16:
        raise ValueError("oracle needs n_points >= 2**16")
    if n_shifts < 2:
        raise ValueError("need at least two shifts for an error bound")
    d = check_dimension(d)
    m = max(16, int(math.ceil(math.log2(n_points))))
    shifts = np.random.default_rng(seed).random((n_shifts, d))
    acc = np.zeros(n_shifts)
    batch = 2**18
    engine = qmc.Sobol(d=d, scramble=False)
    remaining = 2**m
    while remaining:
        take = min(batch, remaining)
        base = engine.random(take)
        for s in range(n_shifts):
            pts = base + shifts[s]
            pts -= np.floor(pts)
            acc[s] += float(np.sum(f.eval_many(pts)))
        remaining -= take
    estimates = acc / 2**m
    value = float(np.mean(estimates))
    bound = 3.0 * float(np.std(estimates, ddof=1)) / math.sqrt(n_shifts)
    return value, bound
