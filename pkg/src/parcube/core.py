"""Shared domain types: regions of the unit cube, integrands, bounds.

All integration machinery works in unit-cube coordinates.  User-facing
bounds are applied once, at the integrand boundary, by `scale_to_bounds`:
the wrapped integrand absorbs the affine map and its constant Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DIM = 12
DEFAULT_REGION_CAP = 2**26


class UnsupportedDimensionError(ValueError):
    """Dimensionality outside the supported range [1, MAX_DIM]."""


class BudgetExceededError(RuntimeError):
    """A requested workload would exceed a configured cap."""


class NonFiniteEvaluationError(ArithmeticError):
    """An integrand returned NaN or infinity.

    Carries the offending point and, when known, the region index.
    """

    def __init__(self, point, value, region_index=None):
        self.point = np.asarray(point, dtype=float)
        self.value = value
        self.region_index = region_index
        where = f" in region {region_index}" if region_index is not None else ""
        super().__init__(f"non-finite integrand value {value!r} at {self.point}{where}")


def check_dimension(d: int) -> int:
    d = int(d)
    if not 1 <= d <= MAX_DIM:
        raise UnsupportedDimensionError(f"dimension {d} outside [1, {MAX_DIM}]")
    return d


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class Integrand:
    """A pure function of a d-dimensional point.

    Subclasses implement `__call__` for a single point and may override
    `eval_many` with a vectorized version; the default loops.  Evaluation
    must be side-effect free: the engines call it concurrently.
    """

    def __init__(self, d: int):
        self.d = check_dimension(d)

    def __call__(self, x) -> float:
        raise NotImplementedError

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.array([self(p) for p in points], dtype=float)


class FunctionIntegrand(Integrand):
    """Adapter turning a plain callable into an Integrand.

    `vectorized=True` means `fn` accepts an (n, d) array and returns (n,).
    """

    def __init__(self, fn, d: int, vectorized: bool = False):
        super().__init__(d)
        self._fn = fn
        self._vectorized = vectorized

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self._vectorized:
            return float(self._fn(x[None, :])[0])
        return float(self._fn(x))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self._vectorized:
            return np.asarray(self._fn(points), dtype=float).reshape(len(points))
        return super().eval_many(points)


def as_integrand(f, d: int, vectorized: bool = False) -> Integrand:
    if isinstance(f, Integrand):
        return f
    return FunctionIntegrand(f, d, vectorized=vectorized)


@dataclass(frozen=True)
class IntegrationBounds:
    """Axis-aligned integration box, low[j] < high[j] on every axis."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = _readonly(np.atleast_1d(self.low))
        high = _readonly(np.atleast_1d(self.high))
        if low.shape != high.shape or low.ndim != 1:
            raise ValueError("low/high must be 1-d arrays of equal length")
        check_dimension(low.size)
        if not np.all(low < high):
            raise ValueError("require low[j] < high[j] on every axis")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def d(self) -> int:
        return self.low.size

    @property
    def jacobian(self) -> float:
        return float(np.prod(self.high - self.low))

    @classmethod
    def unit(cls, d: int) -> "IntegrationBounds":
        d = check_dimension(d)
        return cls(np.zeros(d), np.ones(d))


class _BoundedIntegrand(Integrand):
    def __init__(self, inner: Integrand, bounds: IntegrationBounds):
        super().__init__(bounds.d)
        self.inner = inner
        self.bounds = bounds
        self._width = bounds.high - bounds.low
        self._jac = bounds.jacobian

    def __call__(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return self.inner(self.bounds.low + self._width * y) * self._jac

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.inner.eval_many(self.bounds.low + self._width * points) * self._jac


def scale_to_bounds(f: Integrand, bounds: IntegrationBounds) -> Integrand:
    """Wrap `f` so integrating the wrapper over the unit cube equals
    integrating `f` over `bounds` (affine map plus constant Jacobian)."""
    if f.d != bounds.d:
        raise ValueError(f"integrand dimension {f.d} != bounds dimension {bounds.d}")
    return _BoundedIntegrand(f, bounds)


@dataclass(frozen=True)
class Region:
    """One axis-aligned sub-box of the unit cube: left corner and extents."""

    left: np.ndarray
    length: np.ndarray

    def __post_init__(self):
        left = _readonly(np.atleast_1d(self.left))
        length = _readonly(np.atleast_1d(self.length))
        if left.shape != length.shape or left.ndim != 1:
            raise ValueError("left/length must be 1-d arrays of equal length")
        check_dimension(left.size)
        if np.any(length <= 0) or np.any(left < 0) or np.any(left + length > 1 + 1e-12):
            raise ValueError("region must lie in the unit cube with positive extent")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "length", length)

    @property
    def d(self) -> int:
        return self.left.size


def region_volume(region: Region) -> float:
    """Product of the region's extents; strictly positive."""
    return float(np.prod(region.length))


@dataclass(frozen=True)
class RegionList:
    """A batch of regions in structure-of-lists layout.

    `lefts` and `lengths` are (n, d) float64 arrays, one row per region,
    contiguous in memory.  Immutable after construction.
    """

    lefts: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        lefts = _readonly(np.atleast_2d(self.lefts))
        lengths = _readonly(np.atleast_2d(self.lengths))
        if lefts.shape != lengths.shape or lefts.ndim != 2:
            raise ValueError("lefts/lengths must be (n, d) arrays of equal shape")
        check_dimension(lefts.shape[1])
        if np.any(lengths <= 0) or np.any(lefts < -1e-15) or np.any(lefts + lengths > 1 + 1e-12):
            raise ValueError("all regions must lie in the unit cube with positive extent")
        object.__setattr__(self, "lefts", lefts)
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self) -> int:
        return self.lefts.shape[0]

    @property
    def d(self) -> int:
        return self.lefts.shape[1]

    def region(self, i: int) -> Region:
        return Region(self.lefts[i], self.lengths[i])

    def volumes(self) -> np.ndarray:
        return np.prod(self.lengths, axis=1)


@dataclass(frozen=True)
class RegionEstimates:
    """Per-region integral estimates, error estimates, and split axes."""

    integrals: np.ndarray
    errors: np.ndarray
    split_axes: np.ndarray

    def __post_init__(self):
        integrals = _readonly(np.atleast_1d(self.integrals))
        errors = _readonly(np.atleast_1d(self.errors))
        axes = np.ascontiguousarray(np.atleast_1d(self.split_axes), dtype=np.int64)
        axes.setflags(write=False)
        if not (integrals.shape == errors.shape == axes.shape):
            raise ValueError("integrals/errors/split_axes must have equal length")
        if np.any(errors < 0):
            raise ValueError("error estimates must be nonnegative")
        object.__setattr__(self, "integrals", integrals)
        object.__setattr__(self, "errors", errors)
        object.__setattr__(self, "split_axes", axes)

    @property
    def n(self) -> int:
        return self.integrals.size


def uniform_split(d: int, g: int, region_cap: int = DEFAULT_REGION_CAP) -> RegionList:
    """Tile the unit cube with g^d congruent regions of side 1/g.

    Ordering is lexicographic with axis 0 as the most significant index,
    so the result is deterministic.  Raises BudgetExceededError when g^d
    exceeds `region_cap`.
    """
    d = check_dimension(d)
    g = int(g)
    if g < 1:
        raise ValueError("splits-per-axis must be >= 1")
    n = g**d
    if n > region_cap:
        raise BudgetExceededError(f"uniform split needs {n} regions, cap is {region_cap}")
    # integer lattice of left-corner indices, axis 0 slowest
    idx = np.indices((g,) * d).reshape(d, n).T.astype(np.float64)
    h = 1.0 / g
    lefts = idx * h
    lengths = np.full((n, d), h)
    return RegionList(lefts, lengths)
