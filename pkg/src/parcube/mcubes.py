"""Stratified importance-sampled Monte Carlo over sub-cubes of the unit cube.

The domain is cut into m = g^d congruent sub-cubes, each sampled p times
through the importance grid.  Logical threads own contiguous batches of s
sub-cubes; work-groups of `group_size` threads reduce their members with
a fixed pairwise tree, and group results merge in group order, so a run
is bit-reproducible for any worker count.  Random draws come from a
counter-based splittable hash: every draw is a pure function of
(seed, stream_id, counter), independent of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as _engine
from .core import Integrand, NonFiniteEvaluationError, check_dimension
from .engine import ExecConfig, tree_sum
from .vegas_grid import (
    BinContributions,
    GridRefineParams,
    VegasGrid,
    init_grid,
    refine_grid,
    transform_many,
)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_VARIANCE_FLOOR = 1e-30


def _mix64(z: np.ndarray) -> np.ndarray:
    """64-bit avalanche (xorshift-multiply), bijective on uint64."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _stream_key(seed: int, stream_id) -> np.ndarray:
    seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    sid = np.asarray(stream_id, dtype=np.uint64)
    return _mix64(seed ^ _mix64(sid * _GOLDEN + np.uint64(1)))


def _uniform(seed: int, stream_id, counter) -> np.ndarray:
    """U[0,1) draws, a pure function of (seed, stream_id, counter)."""
    key = _stream_key(seed, stream_id)
    h = _mix64(key + (np.asarray(counter, dtype=np.uint64) + np.uint64(1)) * _GOLDEN)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_seed(seed: int, label: int) -> int:
    """Child seed for iteration `label`; avoids reusing draws across iterations."""
    return int(_mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.uint64(label) * _GOLDEN))


@dataclass
class RngStream:
    """Counter-based stream: state is just (seed, stream_id, counter)."""

    seed: int
    stream_id: int
    counter: int = 0

    def take(self, n: int) -> np.ndarray:
        counters = self.counter + np.arange(n, dtype=np.uint64)
        self.counter += int(n)
        return _uniform(self.seed, np.uint64(self.stream_id), counters)


@dataclass(frozen=True)
class McubesPlan:
    """Sub-cube partition geometry and the per-thread batch layout."""

    d: int
    g: int
    m: int
    p: int
    s: int
    group_size: int = 128
    n_requested: int = 0

    def __post_init__(self):
        if self.m != self.g**self.d:
            raise ValueError("m must equal g^d")
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.s < 1 or self.group_size < 1:
            raise ValueError("s and group_size must be >= 1")

    @property
    def n_actual(self) -> int:
        return self.m * self.p

    @property
    def n_threads(self) -> int:
        return -(-self.m // self.s)

    @property
    def n_groups(self) -> int:
        return -(-self.n_threads // self.group_size)


def make_plan(n, d: int, group_size: int = 128, target_groups: int = 256) -> McubesPlan:
    """Partition for ~n samples: g^d sub-cubes with at least 2 samples each.

    g = floor((n/2)^(1/d)), p = round(n / g^d) floored at 2, and the batch
    size s targets `target_groups` work-groups of `group_size` threads.
    """
    d = check_dimension(d)
    n = int(n)
    if n < 2 ** (d + 1):
        raise ValueError(f"need n >= 2^(d+1) = {2 ** (d + 1)} to give every sub-cube 2 samples")
    half = n // 2
    g = max(1, int((n / 2.0) ** (1.0 / d)))
    while (g + 1) ** d <= half:
        g += 1
    while g > 1 and g**d > half:
        g -= 1
    m = g**d
    p = max(2, int(math.floor(n / m + 0.5)))
    s = max(1, -(-m // (group_size * target_groups)))
    return McubesPlan(d=d, g=g, m=m, p=p, s=s, group_size=group_size, n_requested=n)


def cube_coordinates(cube_index, g: int, d: int) -> np.ndarray:
    """Integer lattice coordinates of sub-cubes, axis 0 most significant."""
    idx = np.atleast_1d(np.asarray(cube_index, dtype=np.int64))
    coords = np.empty((idx.size, d), dtype=np.int64)
    rem = idx.copy()
    for j in range(d - 1, -1, -1):
        coords[:, j] = rem % g
        rem //= g
    return coords


def sample_cube(f: Integrand, cube_index: int, plan: McubesPlan, grid: VegasGrid, rng: RngStream):
    """Draw p samples in one sub-cube; returns (S1, S2, bin_hits).

    Each sample maps a stratified uniform y through the grid, evaluates
    v = f(x) * jacobian, and contributes (bin_ids, v^2) to bin_hits.
    """
    if not 0 <= cube_index < plan.m:
        raise IndexError(f"cube index {cube_index} out of range [0, {plan.m})")
    coords = cube_coordinates(cube_index, plan.g, plan.d)[0]
    u = rng.take(plan.p * plan.d).reshape(plan.p, plan.d)
    y = (coords + u) / plan.g
    x, jac, bins = transform_many(y, grid)
    fx = np.asarray(f.eval_many(x), dtype=np.float64)
    bad = ~np.isfinite(fx)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteEvaluationError(x[i], float(fx[i]))
    v = fx * jac
    s1 = float(tree_sum(v))
    s2 = float(tree_sum(v * v))
    hits = [(bins[k], float(v[k] * v[k])) for k in range(plan.p)]
    return s1, s2, hits


def update_variance(s1: float, s2: float, p: int, m: int):
    """Stratified per-cube estimate and variance from sample sums.

    cube_estimate = S1 / (p m); cube_variance = (S2 - S1^2/p) / (p (p-1) m^2),
    clamped at zero.  Returns (estimate, variance, clamped_flag).
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    est = s1 / (p * m)
    raw = (s2 - s1 * s1 / p) / (p * (p - 1) * m * m)
    if raw < 0.0:
        return est, 0.0, True
    return est, raw, False


@dataclass(frozen=True)
class McubesIterationResult:
    integral: float
    variance: float
    contributions: BinContributions
    n_samples: int
    clamp_events: int

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be >= 0")


@dataclass(frozen=True)
class MonteCarloResult:
    """Weighted combination of the per-iteration estimates."""

    estimate: float
    errorest: float
    chi2_per_dof: float
    iterations: list
    plan: McubesPlan

    def __post_init__(self):
        if self.errorest < 0 or self.chi2_per_dof < 0:
            raise ValueError("errorest and chi2_per_dof must be >= 0")


def _group_task(f, plan: McubesPlan, grid: VegasGrid, seed: int, group_id: int, squared_weighted: bool):
    """Process one work-group: group_size threads, s sub-cubes each.

    Returns (I_group, E_group, per-axis bin totals, clamp count, n_cubes).
    """
    t0 = group_id * plan.group_size
    t1 = min(t0 + plan.group_size, plan.n_threads)
    c0 = t0 * plan.s
    c1 = min(t1 * plan.s, plan.m)
    cubes = np.arange(c0, c1, dtype=np.int64)
    n_cubes = cubes.size
    if n_cubes == 0:
        return 0.0, 0.0, np.zeros((plan.d, grid.n_bins)), 0, 0

    threads = cubes // plan.s
    local = cubes - threads * plan.s
    p, d = plan.p, plan.d

    # counters enumerate (local cube, sample, axis) within each thread's stream
    stream_ids = np.repeat(threads, p * d).astype(np.uint64)
    base = (local[:, None] * p + np.arange(p)[None, :]) * d
    counters = (base[:, :, None] + np.arange(d)[None, None, :]).astype(np.uint64)
    u = _uniform(seed, stream_ids, counters.reshape(-1)).reshape(n_cubes * p, d)

    coords = cube_coordinates(cubes, plan.g, d)
    y = (np.repeat(coords, p, axis=0) + u) / plan.g
    x, jac, bins = transform_many(y, grid)
    fx = np.asarray(f.eval_many(x), dtype=np.float64)
    bad = ~np.isfinite(fx)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteEvaluationError(x[i], float(fx[i]), region_index=int(cubes[i // p]))
    v = fx * jac

    vv = v.reshape(n_cubes, p)
    s1 = vv.sum(axis=1)
    s2 = (vv * vv).sum(axis=1)
    est = s1 / (p * plan.m)
    raw = (s2 - s1 * s1 / p) / (p * (p - 1) * plan.m * plan.m)
    clamps = int(np.count_nonzero(raw < 0))
    var = np.maximum(raw, 0.0)

    # serial accumulation per thread over its cubes, then a pairwise tree
    # across the group's threads (two-level reduction)
    boundaries = np.nonzero(np.diff(threads))[0] + 1
    seg_starts = np.concatenate(([0], boundaries))
    thread_i = np.add.reduceat(est, seg_starts)
    thread_e = np.add.reduceat(var, seg_starts)
    group_i = float(tree_sum(thread_i))
    group_e = float(tree_sum(thread_e))

    contrib = v * v if squared_weighted else fx * fx
    c = np.empty((d, grid.n_bins))
    for j in range(d):
        c[j] = np.bincount(bins[:, j], weights=contrib, minlength=grid.n_bins)
    return group_i, group_e, c, clamps, n_cubes


def mcubes_kernel(
    f: Integrand,
    plan: McubesPlan,
    grid: VegasGrid,
    exec_cfg: ExecConfig | None = None,
    seed: int = 0,
    squared_weighted: bool = True,
) -> McubesIterationResult:
    """One sampling pass over all sub-cubes.

    `squared_weighted` selects whether bin contributions carry
    (f * jacobian)^2 (default) or raw f^2.  In deterministic mode the
    result is bit-identical for any worker count.
    """
    if plan.d != grid.d or plan.d != f.d:
        raise ValueError("plan, grid, and integrand dimensions must agree")
    exec_cfg = exec_cfg or ExecConfig()

    results = _engine.parallel_for_groups(
        plan.n_groups,
        lambda gid: _group_task(f, plan, grid, seed, gid, squared_weighted),
        exec_cfg,
    )
    mode = exec_cfg.reduction_mode
    integral = _engine.reduce([r[0] for r in results], mode)
    variance = max(_engine.reduce([r[1] for r in results], mode), 0.0)
    acc = _engine.accumulator((plan.d, grid.n_bins), mode)
    for gid, r in enumerate(results):
        acc.add_array(r[2], stream=gid)
    contributions = BinContributions(plan.d, grid.n_bins)
    contributions.c[:] = acc.snapshot()
    clamps = sum(r[3] for r in results)
    covered = sum(r[4] for r in results)
    assert covered == plan.m, "sub-cube coverage mismatch"
    return McubesIterationResult(
        integral=integral,
        variance=variance,
        contributions=contributions,
        n_samples=plan.n_actual,
        clamp_events=clamps,
    )


def combine_iterations(iteration_results: list) -> tuple[float, float, float]:
    """Inverse-variance weighted mean, its standard deviation, and chi2/dof.

    Variances are floored at 1e-30 so exactly-integrated functions do not
    divide by zero; zero-variance iterations then dominate the weights.
    """
    if not iteration_results:
        raise ValueError("need at least one iteration")
    ivals = np.array([r.integral for r in iteration_results])
    ivars = np.maximum(np.array([r.variance for r in iteration_results]), _VARIANCE_FLOOR)
    weights = 1.0 / ivars
    wsum = float(weights.sum())
    estimate = float(np.dot(weights, ivals) / wsum)
    errorest = wsum**-0.5
    if len(iteration_results) > 1:
        chi2 = float(np.dot(weights, (ivals - estimate) ** 2) / (len(iteration_results) - 1))
    else:
        chi2 = 0.0
    return estimate, errorest, chi2


def run(
    f: Integrand,
    n,
    d: int,
    iterations: int,
    params: GridRefineParams | None = None,
    seed: int = 0,
    exec_cfg: ExecConfig | None = None,
    n_bins: int = 500,
    group_size: int = 128,
    target_groups: int = 256,
    adapt: bool = True,
    progress=None,
) -> MonteCarloResult:
    """Iterate {sample; refine grid} and combine the iteration estimates.

    Each iteration draws from its own derived seed.  `adapt=False` freezes
    the uniform grid (used for adaptation-efficacy comparisons).
    `progress`, when given, receives one dict per iteration.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    params = params or GridRefineParams()
    plan = make_plan(n, d, group_size=group_size, target_groups=target_groups)
    grid = init_grid(d, n_bins)
    history = []
    for it in range(iterations):
        res = mcubes_kernel(f, plan, grid, exec_cfg, seed=derive_seed(seed, it))
        history.append(res)
        if adapt:
            grid = refine_grid(grid, res.contributions, params)
        if progress is not None:
            est, err, chi2 = combine_iterations(history)
            progress(
                {
                    "iteration": it,
                    "estimate": est,
                    "errorest": err,
                    "chi2_per_dof": chi2,
                    "iter_integral": res.integral,
                    "iter_sd": math.sqrt(res.variance),
                }
            )
    estimate, errorest, chi2 = combine_iterations(history)
    return MonteCarloResult(
        estimate=estimate,
        errorest=errorest,
        chi2_per_dof=chi2,
        iterations=history,
        plan=plan,
    )
