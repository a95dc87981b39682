"""Parallel multidimensional numerical integration toolkit.

Two integrators over the unit hypercube: `pagani.refine`, a deterministic
adaptive cubature built on fully symmetric degree-7 rules with null-rule
error estimation, and `mcubes.run`, a stratified importance-sampled Monte
Carlo integrator with per-axis grid adaptation.  Both parallelize over a
shared execution engine with deterministic reductions, so results are
bit-reproducible for any worker count.
"""

from .core import (
    BudgetExceededError,
    FunctionIntegrand,
    Integrand,
    IntegrationBounds,
    NonFiniteEvaluationError,
    Region,
    RegionEstimates,
    RegionList,
    UnsupportedDimensionError,
    as_integrand,
    region_volume,
    scale_to_bounds,
    uniform_split,
)
from .engine import ExecConfig, GroupTaskError, accumulator, parallel_for_groups, reduce, tree_sum
from .integrands import get_integrand, oracle_integral, reference_value, sum_integrand
from .mcubes import McubesPlan, MonteCarloResult, RngStream, make_plan, mcubes_kernel, update_variance
from .mcubes import run as mcubes_run
from .pagani import IntegralResult, PaganiConfig, compute_split_axis, find_max_err, pagani_kernel, refine
from .quadrature import RuleTable, apply_rules, build_rule, eval_point, f_eval_count
from .vegas_grid import GridRefineParams, VegasGrid, init_grid, refine_grid, transform

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ExecConfig",
    "FunctionIntegrand",
    "GridRefineParams",
    "GroupTaskError",
    "Integrand",
    "IntegralResult",
    "IntegrationBounds",
    "McubesPlan",
    "MonteCarloResult",
    "NonFiniteEvaluationError",
    "PaganiConfig",
    "Region",
    "RegionEstimates",
    "RegionList",
    "RngStream",
    "RuleTable",
    "UnsupportedDimensionError",
    "VegasGrid",
    "accumulator",
    "apply_rules",
    "as_integrand",
    "build_rule",
    "compute_split_axis",
    "eval_point",
    "f_eval_count",
    "find_max_err",
    "get_integrand",
    "init_grid",
    "make_plan",
    "mcubes_kernel",
    "mcubes_run",
    "oracle_integral",
    "pagani_kernel",
    "parallel_for_groups",
    "reduce",
    "reference_value",
    "refine",
    "refine_grid",
    "region_volume",
    "scale_to_bounds",
    "sum_integrand",
    "transform",
    "tree_sum",
    "uniform_split",
    "update_variance",
]
