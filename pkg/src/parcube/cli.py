"""Command-line benchmark harness.

Subcommands:
  integrate     run one integrator on one benchmark integrand
  bench-invoke  time serial integrand invocation over pre-generated points
  compare       time scenarios under two configurations, emit a ratio table

Estimates (not timings) are deterministic given --seed and deterministic
mode.  The compare CSV schema is fixed:
id,mean_a_ms,mean_b_ms,std_a,std_b,ratio
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time

import numpy as np

from .core import BudgetExceededError, uniform_split
from .engine import ExecConfig
from .integrands import BENCHMARKS, get_integrand, reference_value
from .mcubes import make_plan, mcubes_kernel
from .mcubes import run as mcubes_run
from .pagani import PaganiConfig, build_rule, pagani_kernel, refine
from .vegas_grid import init_grid

COMPARE_HEADER = "id,mean_a_ms,mean_b_ms,std_a,std_b,ratio"


class CliError(Exception):
    """Invalid arguments or scenario specs; exits with status 2."""


def _common_flags(parser):
    parser.add_argument("--workers", type=int, default=0,
                        help="worker count; 0 = PARCUBE_WORKERS env var or cpu count")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--deterministic", dest="deterministic", action="store_true", default=True,
                      help="fixed-order reductions, bit-reproducible (default)")
    mode.add_argument("--unordered", dest="deterministic", action="store_false",
                      help="unordered accumulation, no bit-reproducibility promise")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--format", choices=("text", "csv", "json"), default="text")
    parser.add_argument("--out", default=None, help="write the report to FILE instead of stdout")


def _exec_config(args) -> ExecConfig:
    return ExecConfig(workers=max(0, args.workers), deterministic=args.deterministic)


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_to_format(rows: list[dict], fmt: str, footer: str = "") -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    lines = []
    for row in rows:
        for k, v in row.items():
            lines.append(f"{k}: {v}")
        lines.append("")
    if footer:
        lines.append(footer)
    return "\n".join(lines) + "\n"


def cmd_integrate(args) -> int:
    if args.integrand not in BENCHMARKS:
        raise CliError(f"unknown integrand {args.integrand!r}; choose from {sorted(BENCHMARKS)}")
    f = get_integrand(args.integrand, args.d)
    exec_cfg = _exec_config(args)
    ref = reference_value(args.integrand, args.d)
    t0 = time.perf_counter()
    if args.integrator == "pagani":
        cfg = PaganiConfig(rel_tol=args.rel_tol, max_iterations=args.max_iterations)
        res = refine(f, cfg, exec_cfg)
        estimate, errorest, converged = res.estimate, res.errorest, res.converged
        extra = {"iterations": res.iterations, "regions_processed": res.regions_processed,
                 "reason": res.reason}
    else:
        res = mcubes_run(f, args.samples, args.d, args.iterations, seed=args.seed,
                         exec_cfg=exec_cfg)
        estimate, errorest = res.estimate, res.errorest
        converged = bool(np.isfinite(estimate))
        extra = {"iterations": args.iterations, "chi2_per_dof": res.chi2_per_dof,
                 "samples_per_iteration": res.plan.n_actual}
    elapsed_ms = 1e3 * (time.perf_counter() - t0)
    row = {
        "integrator": args.integrator,
        "integrand": args.integrand,
        "d": args.d,
        "estimate": estimate,
        "errorest": errorest,
        "reference": ref.value,
        "reference_method": ref.method,
        "abs_deviation": abs(estimate - ref.value),
        "converged": converged,
        "seed": args.seed,
        **extra,
        "elapsed_ms": round(elapsed_ms, 3),
    }
    _emit(args, _rows_to_format([row], args.format))
    return 0 if converged else 1


def cmd_bench_invoke(args) -> int:
    if args.integrand not in BENCHMARKS:
        raise CliError(f"unknown integrand {args.integrand!r}; choose from {sorted(BENCHMARKS)}")
    n = int(args.points)
    if n <= 0:
        raise CliError("--points must be positive")
    if args.repetitions < 1:
        raise CliError("--repetitions must be >= 1")
    f = get_integrand(args.integrand, args.d)
    points = np.random.default_rng(args.seed).random((n, args.d))
    timings = []
    accumulator = 0.0
    for _ in range(args.repetitions):
        t0 = time.perf_counter()
        acc = 0.0
        for i in range(n):
            acc += f(points[i])
        timings.append(1e3 * (time.perf_counter() - t0))
        accumulator = acc  # written to the report so the loop cannot be elided
    row = {
        "integrand": args.integrand,
        "d": args.d,
        "invocations": n,
        "repetitions": args.repetitions,
        "mean_ms": statistics.fmean(timings),
        "std_ms": statistics.stdev(timings) if len(timings) > 1 else 0.0,
        "accumulator": accumulator,
        "samples_ms": [round(t, 3) for t in timings],
    }
    _emit(args, _rows_to_format([row], args.format))
    return 0


def parse_config(spec: str) -> ExecConfig:
    """Parse "workers=8,deterministic=true" into an ExecConfig."""
    workers = 0
    deterministic = True
    for part in filter(None, (p.strip() for p in spec.split(","))):
        key, _, value = part.partition("=")
        if not value:
            raise CliError(f"bad config entry {part!r}, expected key=value")
        if key == "workers":
            workers = int(value)
        elif key == "deterministic":
            if value.lower() not in ("true", "false", "1", "0"):
                raise CliError(f"bad boolean {value!r} for deterministic")
            deterministic = value.lower() in ("true", "1")
        else:
            raise CliError(f"unknown config key {key!r} (use workers, deterministic)")
    return ExecConfig(workers=workers, deterministic=deterministic)


def parse_scenario(spec: str) -> dict:
    """Parse "pagani:f4:d=8:g=4:reps=5" or "mcubes:f5:d=5:n=1e5:reps=5"."""
    parts = spec.split(":")
    if len(parts) < 3:
        raise CliError(f"scenario {spec!r} needs integrator:integrand:key=value...")
    integrator, integrand = parts[0], parts[1]
    if integrator not in ("pagani", "mcubes"):
        raise CliError(f"scenario {spec!r}: unknown integrator {integrator!r}")
    if integrand not in BENCHMARKS:
        raise CliError(f"scenario {spec!r}: unknown integrand {integrand!r}")
    scenario = {"id": spec, "integrator": integrator, "integrand": integrand,
                "d": None, "g": 4, "n": 1e5, "reps": 100}
    for part in parts[2:]:
        key, _, value = part.partition("=")
        if key == "d":
            scenario["d"] = int(value)
        elif key == "g":
            scenario["g"] = int(value)
        elif key == "n":
            scenario["n"] = int(float(value))
        elif key == "reps":
            scenario["reps"] = int(value)
        else:
            raise CliError(f"scenario {spec!r}: unknown key {key!r}")
    if scenario["d"] is None:
        raise CliError(f"scenario {spec!r}: missing d=")
    if scenario["reps"] < 1:
        raise CliError(f"scenario {spec!r}: reps must be >= 1")
    return scenario


def _time_scenario(scenario: dict, exec_cfg: ExecConfig, seed: int) -> tuple[float, float]:
    """Mean and sample std (ms) of the scenario's kernel over its repetitions."""
    d = scenario["d"]
    f = get_integrand(scenario["integrand"], d)
    timings = []
    if scenario["integrator"] == "pagani":
        regions = uniform_split(d, scenario["g"])
        rule = build_rule(d)
        cfg = PaganiConfig()
        for _ in range(scenario["reps"]):
            t0 = time.perf_counter()
            pagani_kernel(f, regions, rule, exec_cfg, cfg)
            timings.append(1e3 * (time.perf_counter() - t0))
    else:
        plan = make_plan(scenario["n"], d)
        grid = init_grid(d)
        for _ in range(scenario["reps"]):
            t0 = time.perf_counter()
            mcubes_kernel(f, plan, grid, exec_cfg, seed=seed)
            timings.append(1e3 * (time.perf_counter() - t0))
    mean = statistics.fmean(timings)
    std = statistics.stdev(timings) if len(timings) > 1 else 0.0
    return mean, std


def cmd_compare(args) -> int:
    scenarios = [parse_scenario(s) for s in args.scenario or []]
    if args.scenarios_file:
        with open(args.scenarios_file, encoding="utf-8") as fh:
            for entry in json.load(fh):
                scenarios.append(parse_scenario(entry) if isinstance(entry, str)
                                 else {**parse_scenario(entry.pop("spec")), **entry})
    if not scenarios:
        raise CliError("no scenarios given (use --scenario or --scenarios-file)")
    cfg_a = parse_config(args.config_a)
    cfg_b = parse_config(args.config_b)

    rows = []
    for scenario in sorted(scenarios, key=lambda s: s["id"]):
        try:
            mean_a, std_a = _time_scenario(scenario, cfg_a, args.seed)
            mean_b, std_b = _time_scenario(scenario, cfg_b, args.seed)
        except Exception as exc:  # noqa: BLE001 - abort naming the scenario
            sys.stderr.write(f"scenario {scenario['id']!r} failed: {exc}\n")
            return 1
        rows.append({
            "id": scenario["id"],
            "mean_a_ms": round(mean_a, 6),
            "mean_b_ms": round(mean_b, 6),
            "std_a": round(std_a, 6),
            "std_b": round(std_b, 6),
            "ratio": round(mean_b / mean_a, 6),
        })

    footer = ("# configurations compared on one machine: "
              f"A = {args.config_a!r}, B = {args.config_b!r}; ratio = mean_b / mean_a")
    if args.format == "csv":
        lines = [COMPARE_HEADER]
        for r in rows:
            lines.append(",".join(str(r[k]) for k in
                                  ("id", "mean_a_ms", "mean_b_ms", "std_a", "std_b", "ratio")))
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, _rows_to_format(rows, args.format, footer=footer))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parcube",
        description="Parallel multidimensional integration benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_int = sub.add_parser("integrate", help="run one integrator on one integrand")
    _common_flags(p_int)
    p_int.add_argument("--integrator", choices=("pagani", "mcubes"), required=True)
    p_int.add_argument("--integrand", required=True, help="f1..f6 or sum")
    p_int.add_argument("-d", "--dim", dest="d", type=int, required=True)
    p_int.add_argument("--rel-tol", type=float, default=1e-3, help="pagani relative tolerance")
    p_int.add_argument("--max-iterations", type=int, default=50, help="pagani iteration budget")
    p_int.add_argument("--samples", type=float, default=1e5, help="mcubes samples per iteration")
    p_int.add_argument("--iterations", type=int, default=10, help="mcubes iterations")
    p_int.set_defaults(func=cmd_integrate)

    p_bench = sub.add_parser("bench-invoke", help="time serial integrand invocation")
    _common_flags(p_bench)
    p_bench.add_argument("--integrand", required=True)
    p_bench.add_argument("-d", "--dim", dest="d", type=int, required=True)
    p_bench.add_argument("--points", type=float, default=1e6)
    p_bench.add_argument("--repetitions", type=int, default=10)
    p_bench.set_defaults(func=cmd_bench_invoke)

    p_cmp = sub.add_parser("compare", help="time scenarios under two configurations")
    _common_flags(p_cmp)
    p_cmp.add_argument("--config-a", required=True, help='e.g. "workers=1"')
    p_cmp.add_argument("--config-b", required=True, help='e.g. "workers=8"')
    p_cmp.add_argument("--scenario", action="append",
                       help="pagani:f4:d=8:g=4:reps=5 or mcubes:f5:d=5:n=1e5:reps=5")
    p_cmp.add_argument("--scenarios-file", help="JSON list of scenario spec strings")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        parser.print_usage(sys.stderr)
        return 2
    except BudgetExceededError as exc:
        sys.stderr.write(f"budget exceeded: {exc}\n")
        return 1
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
