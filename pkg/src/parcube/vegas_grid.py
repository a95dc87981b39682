"""Per-axis importance-sampling grid: transform, contributions, refinement.

The grid stores d independent piecewise-linear maps of [0,1] onto itself,
each defined by n_bins + 1 boundaries.  Sampling pushes uniform variates
through the map and corrects by its Jacobian; squared sample values
accumulated per bin drive the between-iteration refinement that narrows
bins where the integrand contributes most.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_dimension

DEFAULT_N_BINS = 500


@dataclass(frozen=True)
class VegasGrid:
    """Immutable bin boundaries, shape (d, n_bins + 1), pinned to [0, 1]."""

    d: int
    n_bins: int
    boundaries: np.ndarray

    def __post_init__(self):
        b = np.array(self.boundaries, dtype=np.float64)  # private copy
        if b.shape != (self.d, self.n_bins + 1):
            raise ValueError(f"boundaries must have shape ({self.d}, {self.n_bins + 1})")
        if not np.allclose(b[:, 0], 0.0) or not np.allclose(b[:, -1], 1.0):
            raise ValueError("boundaries must start at 0 and end at 1")
        if np.any(np.diff(b, axis=1) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        b[:, 0] = 0.0
        b[:, -1] = 1.0
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries, axis=1)


class BinContributions:
    """Accumulated squared sample contributions, one row per axis.

    Reset at the start of every sampling iteration; entries never go
    negative because contributions are squares.
    """

    def __init__(self, d: int, n_bins: int):
        self.d = check_dimension(d)
        self.n_bins = int(n_bins)
        self.c = np.zeros((self.d, self.n_bins))

    def reset(self) -> None:
        self.c.fill(0.0)

    def total(self) -> np.ndarray:
        return self.c.sum(axis=1)


@dataclass(frozen=True)
class GridRefineParams:
    """Damping exponent and smoothing switch for grid refinement."""

    alpha: float = 1.5
    smoothing: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


def init_grid(d: int, n_bins: int = DEFAULT_N_BINS) -> VegasGrid:
    """Uniform grid: boundaries k / n_bins on every axis."""
    d = check_dimension(d)
    n_bins = int(n_bins)
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    b = np.tile(np.arange(n_bins + 1) / n_bins, (d, 1))
    return VegasGrid(d=d, n_bins=n_bins, boundaries=b)


def transform(y, grid: VegasGrid):
    """Map one uniform point through the grid.

    Per axis j: z = y[j] * n_bins selects bin b = floor(z), and the point
    lands at B[b] + (z - b) * (B[b+1] - B[b]).  Returns (x, jacobian,
    bin_ids) where jacobian is the product of n_bins * bin_width factors.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x, jac, bins = transform_many(y[None, :], grid)
    return x[0], float(jac[0]), bins[0]


def transform_many(y: np.ndarray, grid: VegasGrid):
    """Vectorized transform for an (n, d) array of uniform points."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != grid.d:
        raise ValueError(f"expected (n, {grid.d}) points")
    if np.any(y < 0.0) or np.any(y >= 1.0):
        raise ValueError("transform inputs must lie in [0, 1)")
    z = y * grid.n_bins
    b = z.astype(np.int64)  # floor; z < n_bins since y < 1
    frac = z - b
    cols = np.arange(grid.d)
    lo = grid.boundaries[cols, b]
    width = grid.boundaries[cols, b + 1] - lo
    x = lo + frac * width
    jac = np.prod(grid.n_bins * width, axis=1)
    return x, jac, b


def accumulate(contributions: BinContributions, bin_ids, contribution: float) -> None:
    """Add one squared sample value to its bin on every axis."""
    if contribution < 0:
        raise ValueError("contributions are squares, must be >= 0")
    bin_ids = np.asarray(bin_ids, dtype=np.int64)
    contributions.c[np.arange(contributions.d), bin_ids] += contribution


def accumulate_many(contributions: BinContributions, bin_ids: np.ndarray, values: np.ndarray) -> None:
    """Add many squared sample values at once (bincount per axis)."""
    for j in range(contributions.d):
        contributions.c[j] += np.bincount(
            bin_ids[:, j], weights=values, minlength=contributions.n_bins
        )


def _smooth(c: np.ndarray) -> np.ndarray:
    # three-point average inside, two-point at the edges
    out = np.empty_like(c)
    out[1:-1] = (c[:-2] + c[1:-1] + c[2:]) / 3.0
    out[0] = (c[0] + c[1]) / 2.0
    out[-1] = (c[-2] + c[-1]) / 2.0
    return out


def refine_grid(grid: VegasGrid, contributions: BinContributions, params: GridRefineParams | None = None) -> VegasGrid:
    """Rebuild boundaries so each bin carries an equal damped contribution.

    Per axis independently: smooth the contributions, damp them through
    w = ((1 - r) / ln(1/r))^alpha with r the normalized contribution, then
    redistribute boundaries piecewise-linearly so every new bin holds the
    same total w.  An axis with all-zero contributions is left unchanged.
    """
    params = params or GridRefineParams()
    if contributions.d != grid.d or contributions.n_bins != grid.n_bins:
        raise ValueError("contribution table does not match grid shape")
    n = grid.n_bins
    new_b = np.array(grid.boundaries)
    for j in range(grid.d):
        c = contributions.c[j]
        if not np.any(c > 0):
            continue
        if params.smoothing and n >= 2:
            c = _smooth(c)
        total = c.sum()
        r = c / total
        w = np.zeros(n)
        interior = (r > 0) & (r < 1)
        w[interior] = ((1.0 - r[interior]) / np.log(1.0 / r[interior])) ** params.alpha
        w[r >= 1.0] = 1.0
        wsum = w.sum()
        if wsum <= 0:
            continue
        cw = np.concatenate(([0.0], np.cumsum(w)))
        cw[-1] = wsum  # guard cumsum rounding at the top end
        targets = wsum * np.arange(1, n) / n
        idx = np.searchsorted(cw, targets, side="right") - 1
        idx = np.clip(idx, 0, n - 1)
        seg_w = cw[idx + 1] - cw[idx]
        frac = np.where(seg_w > 0, (targets - cw[idx]) / np.where(seg_w > 0, seg_w, 1.0), 0.0)
        old = grid.boundaries[j]
        interior_b = old[idx] + frac * (old[idx + 1] - old[idx])
        new_b[j, 1:-1] = interior_b
        new_b[j, 0] = 0.0
        new_b[j, -1] = 1.0
        # strict monotonicity can be lost to rounding when w is extremely
        # concentrated; nudge any collapsed boundaries upward
        row = new_b[j]
        for k in range(1, n + 1):
            if row[k] <= row[k - 1]:
                row[k] = np.nextafter(row[k - 1], 2.0)
        if row[-1] != 1.0:
            row[-1] = 1.0
            for k in range(n, 0, -1):
                if row[k - 1] >= row[k]:
                    row[k - 1] = np.nextafter(row[k], -1.0)
    return VegasGrid(d=grid.d, n_bins=grid.n_bins, boundaries=new_b)


def grid_snapshot_text(grid: VegasGrid) -> str:
    """Boundary dump for diagnostics: one line per axis."""
    lines = [f"# d={grid.d} n_bins={grid.n_bins}"]
    for j in range(grid.d):
        vals = " ".join(f"{v:.12g}" for v in grid.boundaries[j])
        lines.append(f"axis {j}: {vals}")
    return "\n".join(lines) + "\n"
