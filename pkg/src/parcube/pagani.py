"""Adaptive cubature: per-region rule evaluation and a refinement driver.

Every region is one logical work-group: its rule sums follow the
group-strided evaluation schedule (thread t accumulates point indices
t, t + G, t + 2G, ... serially, then a pairwise tree merges the G
threads), so a fixed configuration yields bit-identical results for any
worker count.  The driver bisects regions along their reported split
axis until the summed error estimate meets the relative tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as _engine
from .core import (
    DEFAULT_REGION_CAP,
    Integrand,
    NonFiniteEvaluationError,
    Region,
    RegionEstimates,
    RegionList,
    uniform_split,
)
from .engine import ExecConfig, tree_sum
from .quadrature import RuleEstimates, RuleTable, build_rule, region_points

ERR_TWO_LEVEL = "two-level"
ERR_MAX_NULL = "max-null"
ERR_MAX_PAIRWISE = "max-pairwise"

# safety constant of the two-level estimator's asymptotic correction, and
# the largest low-order-null fraction of the region scale that still counts
# as asymptotic (an unresolved narrow feature keeps the low nulls at the
# scale of the estimate itself, which must block the correction)
TWO_LEVEL_SAFETY = 10.0
TWO_LEVEL_REGIME = 0.05


@dataclass(frozen=True)
class PaganiConfig:
    """Tolerance, iteration and memory budgets, and schedule shape.

    `group_size` fixes the strided evaluation schedule inside a region;
    `chunk` fixes how many regions one scheduling unit evaluates.  Both
    affect only floating-point association, never which points are used,
    and neither depends on the worker count.
    """

    rel_tol: float = 1e-3
    max_iterations: int = 50
    group_size: int = 64
    region_cap: int = DEFAULT_REGION_CAP
    initial_regions: int = 1024
    err_mode: str = ERR_TWO_LEVEL
    rel_floor: float = 1e-15
    chunk: int = 512

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        if self.group_size < 1 or self.chunk < 1:
            raise ValueError("group_size and chunk must be >= 1")
        if self.err_mode not in (ERR_TWO_LEVEL, ERR_MAX_NULL, ERR_MAX_PAIRWISE):
            raise ValueError(f"unknown err_mode {self.err_mode!r}")


@dataclass(frozen=True)
class RegionRecord:
    """Evaluation summary for one region."""

    region: Region
    volume: float
    integral: float
    error: float
    split_axis: int

    def __post_init__(self):
        if self.error < 0:
            raise ValueError("error must be >= 0")
        if not 0 <= self.split_axis < self.region.d:
            raise ValueError("split_axis out of range")


@dataclass(frozen=True)
class IntegralResult:
    estimate: float
    errorest: float
    iterations: int
    regions_processed: int
    converged: bool
    history: list = field(default_factory=list)
    reason: str = ""

    def __post_init__(self):
        if self.errorest < 0:
            raise ValueError("errorest must be >= 0")


def _error_estimates(values: np.ndarray, rule: RuleTable, mode: str, rel_floor: float) -> np.ndarray:
    """Per-region error estimates from an (n, 5) array of rule values.

    `two-level` starts from the magnitude of the degree-5-and-up nulls
    and, when the lower-order nulls (at their natural scale) certify the
    asymptotic regime, sharpens it by the observed high/low ratio times a
    safety constant; outside that regime the raw high-null magnitude
    stands.  `max-null` is the plain maximum of the four null magnitudes;
    `max-pairwise` the largest pairwise difference among them.  Every
    estimate is floored at rel_floor * |values[0]|.
    """
    nulls = np.abs(values[:, 1:5])
    if mode == ERR_MAX_NULL:
        err = nulls.max(axis=1)
    elif mode == ERR_MAX_PAIRWISE:
        spread = values[:, 1:5]
        err = np.abs(spread[:, :, None] - spread[:, None, :]).max(axis=(1, 2))
    elif mode == ERR_TWO_LEVEL:
        degrees = np.array(rule.null_degrees)
        scales = np.array(rule.null_scales)
        high = degrees >= 5
        e_high = nulls[:, high].max(axis=1)
        e_low = (nulls[:, ~high] / scales[~high]).max(axis=1)
        correction = np.ones(len(nulls))
        np.divide(TWO_LEVEL_SAFETY * e_high, e_low, out=correction, where=e_low > 0)
        err = e_high * np.minimum(1.0, correction)
    else:
        raise ValueError(f"unknown err_mode {mode!r}")
    return np.maximum(err, rel_floor * np.abs(values[:, 0]))


def find_max_err(
    est: RuleEstimates,
    volume: float,
    rel_floor: float = 1e-15,
    mode: str = ERR_TWO_LEVEL,
    rule: RuleTable | None = None,
) -> float:
    """Error estimate for one region from its null-rule values.

    See `_error_estimates` for the modes; `rule` is required for the
    default two-level mode (it carries the null-rule metadata).  Estimates
    below rel_floor * |values[0]| are raised to that floor so cancellation
    can not fake convergence.
    """
    v = est.values
    if not np.all(np.isfinite(v)):
        raise NonFiniteEvaluationError(np.full(1, np.nan), float(v[np.argmax(~np.isfinite(v))]))
    if mode == ERR_TWO_LEVEL and rule is None:
        raise ValueError("two-level mode needs the rule table for null metadata")
    return float(_error_estimates(v[None, :], rule, mode, rel_floor)[0])


def compute_split_axis(stored_evals: np.ndarray, rule: RuleTable, d: int) -> int:
    """Axis with the largest fourth-difference indicator; ties pick the lowest.

    The indicator per axis combines the two axial second differences at
    offsets +-lambda2 and +-lambda3 with the coefficients stored in the
    rule's split_weights.
    """
    fx = np.asarray(stored_evals, dtype=np.float64)
    if d == 1:
        return 0
    f0 = fx[0]
    axial = fx[rule.axial_indices]  # (d, 4)
    c0, c1 = rule.split_weights
    d2a = axial[:, 0] + axial[:, 1] - 2.0 * f0
    d2b = axial[:, 2] + axial[:, 3] - 2.0 * f0
    return int(np.argmax(np.abs(c0 * d2a - c1 * d2b)))


def _strided_rule_sums(products: np.ndarray, group_size: int) -> np.ndarray:
    """Reduce (n, 5, f_eval) products with the strided two-level schedule.

    Thread t of a group owns point indices t, t + G, ...; its serial
    partial sums are then merged across the G threads with a pairwise
    tree.  Zero padding keeps the schedule shape fixed.
    """
    n, five, fe = products.shape
    g = group_size
    steps = -(-fe // g)
    if steps * g != fe:
        pad = np.zeros((n, five, steps * g - fe))
        products = np.concatenate([products, pad], axis=2)
    strided = products.reshape(n, five, steps, g)
    acc = strided[:, :, 0, :].copy()
    for s in range(1, steps):
        acc += strided[:, :, s, :]
    return tree_sum(acc, axis=-1)


def _kernel_chunk(
    f: Integrand,
    lefts: np.ndarray,
    lengths: np.ndarray,
    rule: RuleTable,
    cfg: PaganiConfig,
    base_index: int,
):
    points = region_points(rule, lefts, lengths)
    n, fe, d = points.shape
    fx = np.asarray(f.eval_many(points.reshape(n * fe, d)), dtype=np.float64).reshape(n, fe)
    bad = ~np.isfinite(fx)
    if bad.any():
        r, i = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise NonFiniteEvaluationError(points[r, i], float(fx[r, i]), region_index=base_index + int(r))

    volumes = np.prod(lengths, axis=1)
    values = volumes[:, None] * _strided_rule_sums(rule.weights[None, :, :] * fx[:, None, :], cfg.group_size)
    errors = _error_estimates(values, rule, cfg.err_mode, cfg.rel_floor)

    if d > 1:
        f0 = fx[:, 0][:, None]
        axial = fx[:, rule.axial_indices]  # (n, d, 4)
        c0, c1 = rule.split_weights
        d2a = axial[:, :, 0] + axial[:, :, 1] - 2.0 * f0
        d2b = axial[:, :, 2] + axial[:, :, 3] - 2.0 * f0
        split = np.argmax(np.abs(c0 * d2a - c1 * d2b), axis=1)
    else:
        split = np.zeros(n, dtype=np.int64)
    return values[:, 0], errors, split


def pagani_kernel(
    f: Integrand,
    regions: RegionList,
    rule: RuleTable,
    exec_cfg: ExecConfig | None = None,
    cfg: PaganiConfig | None = None,
) -> RegionEstimates:
    """Evaluate integral, error, and split axis for every region.

    One logical work-group per region; regions are dispatched to workers
    in fixed chunks of cfg.chunk, so output is bit-identical for any
    worker count.
    """
    if regions.n == 0:
        raise ValueError("region list is empty")
    if rule.d != regions.d or rule.d != f.d:
        raise ValueError("rule, regions, and integrand dimensions must agree")
    cfg = cfg or PaganiConfig()
    exec_cfg = exec_cfg or ExecConfig()

    lefts, lengths = regions.lefts, regions.lengths
    chunks = _engine.parallel_map_chunks(
        regions.n,
        cfg.chunk,
        lambda a, b: _kernel_chunk(f, lefts[a:b], lengths[a:b], rule, cfg, a),
        exec_cfg,
    )
    integrals = np.concatenate([c[0] for c in chunks])
    errors = np.concatenate([c[1] for c in chunks])
    split_axes = np.concatenate([c[2] for c in chunks])
    return RegionEstimates(integrals=integrals, errors=errors, split_axes=split_axes)


def evaluate_region(f: Integrand, region: Region, rule: RuleTable, cfg: PaganiConfig | None = None) -> RegionRecord:
    """Single-region convenience wrapper around the kernel path."""
    cfg = cfg or PaganiConfig()
    i, e, k = _kernel_chunk(f, region.left[None, :], region.length[None, :], rule, cfg, 0)
    return RegionRecord(
        region=region,
        volume=float(np.prod(region.length)),
        integral=float(i[0]),
        error=float(e[0]),
        split_axis=int(k[0]),
    )


def _initial_g(d: int, target: int) -> int:
    g = max(1, int(round(target ** (1.0 / d))))
    while g**d < target:
        g += 1
    while g > 1 and (g - 1) ** d >= target:
        g -= 1
    return g


def _bisect(lefts, lengths, axes):
    """Split each region in half along its axis; children stay adjacent."""
    n, d = lefts.shape
    rows = np.arange(n)
    half = lengths.copy()
    half[rows, axes] *= 0.5
    lo_l = lefts
    hi_l = lefts.copy()
    hi_l[rows, axes] += half[rows, axes]
    out_lefts = np.empty((2 * n, d))
    out_lengths = np.empty((2 * n, d))
    out_lefts[0::2] = lo_l
    out_lefts[1::2] = hi_l
    out_lengths[0::2] = half
    out_lengths[1::2] = half
    return out_lefts, out_lengths


def refine(
    f: Integrand,
    cfg: PaganiConfig | None = None,
    exec_cfg: ExecConfig | None = None,
    rule: RuleTable | None = None,
    progress=None,
) -> IntegralResult:
    """Iteratively bisect regions until errorest <= rel_tol * |estimate|.

    Iteration 0 evaluates a uniform split with the smallest g satisfying
    g^d >= cfg.initial_regions.  Afterwards, a region whose error exceeds
    its volume-prorated share of the global tolerance is bisected along
    its split axis and re-evaluated; the rest retire with their estimates.
    Region-cap and iteration exhaustion surface in the result, never as
    exceptions.  `progress` receives one dict per iteration when given.
    """
    cfg = cfg or PaganiConfig()
    exec_cfg = exec_cfg or ExecConfig()
    rule = rule or build_rule(f.d)
    d = f.d

    g = _initial_g(d, cfg.initial_regions)
    initial = uniform_split(d, g, region_cap=cfg.region_cap)
    est = pagani_kernel(f, initial, rule, exec_cfg, cfg)
    lefts, lengths = initial.lefts, initial.lengths
    act_i, act_e, act_k = est.integrals, est.errors, est.split_axes

    fin_i = 0.0
    fin_e = 0.0
    fin_count = 0
    processed = initial.n
    history = []
    converged = False
    reason = ""

    for iteration in range(cfg.max_iterations + 1):
        estimate = fin_i + tree_sum(act_i)
        errorest = fin_e + tree_sum(act_e)
        n_leaves = fin_count + act_i.size
        history.append((estimate, errorest, n_leaves))
        if progress is not None:
            progress(
                {
                    "iteration": iteration,
                    "n_regions": int(n_leaves),
                    "active": int(act_i.size),
                    "estimate": estimate,
                    "errorest": errorest,
                }
            )
        if errorest <= cfg.rel_tol * abs(estimate):
            converged = True
            reason = "tolerance met"
            break
        if iteration == cfg.max_iterations:
            reason = "max iterations reached"
            break
        if act_i.size == 0:
            reason = "no active regions left"
            break

        volumes = np.prod(lengths, axis=1)
        budget = 0.8 * cfg.rel_tol * abs(estimate)
        split_mask = act_e > budget * volumes
        if not split_mask.any():
            split_mask = act_e >= act_e.max()  # force progress on the worst region
        n_split = int(np.count_nonzero(split_mask))
        if processed + 2 * n_split > cfg.region_cap:
            reason = "region cap reached"
            break

        fin_i += tree_sum(act_i[~split_mask])
        fin_e += tree_sum(act_e[~split_mask])
        fin_count += act_i.size - n_split

        lefts, lengths = _bisect(
            lefts[split_mask], lengths[split_mask], act_k[split_mask]
        )
        children = RegionList(lefts, lengths)
        processed += children.n
        est = pagani_kernel(f, children, rule, exec_cfg, cfg)
        act_i, act_e, act_k = est.integrals, est.errors, est.split_axes

    return IntegralResult(
        estimate=estimate,
        errorest=errorest,
        iterations=len(history) - 1,
        regions_processed=processed,
        converged=converged,
        history=history,
        reason=reason,
    )


def progress_to_stream(stream):
    """Adapter: per-iteration records as line-delimited JSON on `stream`."""

    def emit(record):
        stream.write(json.dumps(record) + "\n")

    return emit
