"""
k2gof - Main Module

Command-line front end: fit models, simulate null distributions, test
candidate models against one reference null, run power studies and
benchmark the projected bootstrap against the refit bootstrap.

Usage:
    k2gof fit data.csv --out out/
    k2gof null --fit-file out/fit.json --replicates 2000 --out out/
    k2gof test data.csv --null-dir out/ --out out/
    k2gof power --config power.yaml --threads 4
    k2gof bench --replicates 500

Exit codes: 0 ok, 2 input error, 3 no convergence, 4 harness error,
5 audit or dimension failure.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from k2gof import __version__
from k2gof.config.logging_config import get_logger, setup_logging
from k2gof.config.settings import SCHEMA_VERSION, RunConfig, load_run_config
from k2gof.errors import DimensionMismatch, InputError, K2GofError
from k2gof.estimation.fit import FitResult, mle_fit, require_converged
from k2gof.models.base import ModelSpec, ParamVector, instantiate
from k2gof.models.builtin import build_registry, resolve_model
from k2gof.process.projection import build_projection_plan, projected_process
from k2gof.quadrature.grid import Grid, SupportRect, build_grid
from k2gof.rotation.k2 import build_rotation_plan, rotated_process
from k2gof.simulation.power import power_study
from k2gof.simulation.replication import (
    NullDistribution,
    compare_distributions,
    p_value,
    simulate_null_mc,
    simulate_null_projected,
    simulate_null_refit,
)
from k2gof.stats.functionals import STAT_KINDS, stat_triple
from k2gof.utils.data_processing import (
    ecdf_table,
    histogram_table,
    read_json,
    read_points_csv,
    write_csv,
    write_json,
)

logger = get_logger(__name__)

METHOD_LABELS = {"projected": "bootstrap-projected", "refit": "bootstrap-refit", "mc": "monte-carlo"}


class RunContext:
    """Grid, model registry and output directory derived from a RunConfig"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.config_hash = config.config_hash()
        self.support = SupportRect(tuple(config.support.lower), tuple(config.support.upper))
        self.grid: Grid = build_grid(self.support, config.grid.n1, config.grid.n2)
        self.registry = build_registry(self.support, config.model_files)
        self.out = Path(config.out)

    def model(self, name: str) -> ModelSpec:
        return resolve_model(name, self.registry)

    @property
    def reference(self) -> ModelSpec:
        return self.model(self.config.reference)

    def stamp(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return {"schema": SCHEMA_VERSION, "config_hash": self.config_hash, **payload}

    def reference_params(self, required: bool = True) -> Optional[ParamVector]:
        """Reference parameters from the config or a fit file"""
        spec = self.reference
        if self.config.reference_params is not None:
            return spec.params(self.config.reference_params)
        if self.config.fit_file is not None:
            return FitResult.from_dict(read_json(self.config.fit_file), spec).params
        default_fit = self.out / "fit.json"
        if default_fit.is_file():
            return FitResult.from_dict(read_json(default_fit), spec).params
        if required:
            raise InputError("Reference parameters needed: pass --reference-params or --fit-file, or run `k2gof fit` first")
        return None


def _check_dimensions(reference: ModelSpec, candidates: List[ModelSpec]) -> None:
    for spec in candidates:
        if spec.p != reference.p:
            raise DimensionMismatch(
                f"Candidate {spec.name} has p={spec.p} but reference {reference.name} has p={reference.p}"
            )


def cmd_fit(ctx: RunContext, data_csv: str, model: Optional[str] = None) -> FitResult:
    """
    Fit one model to a data CSV and write fit.json

    Raises:
        InputError: On malformed input
        NoConvergence: After fit.json is written, if the fit did not converge
    """
    spec = ctx.model(model or ctx.config.reference)
    data = read_points_csv(data_csv, d=spec.d, support=spec.support)
    result = mle_fit(spec, data, ctx.grid, config=ctx.config.fit)
    write_json(ctx.out / "fit.json", ctx.stamp(result.to_dict()))
    logger.info("fit_written", model=spec.name, params=list(result.params.values), converged=result.converged)
    return require_converged(result)


def _write_null(ctx: RunContext, dists: Dict[str, NullDistribution], prefix: str = "null") -> None:
    for kind, dist in dists.items():
        dist = replace(dist, config_hash=ctx.config_hash)
        write_json(ctx.out / f"{prefix}_{kind}.json", dist.to_dict())
        write_csv(ctx.out / f"{prefix}_{kind}.csv", dist.to_frame())
        write_csv(ctx.out / f"{prefix}_{kind}_hist.csv", histogram_table(dist.values, ctx.config.histogram_bins))
        write_csv(ctx.out / f"{prefix}_{kind}_ecdf.csv", ecdf_table(dist.values))


def cmd_null(ctx: RunContext) -> Dict[str, NullDistribution]:
    """
    Simulate the reference null distributions and write them with plot tables

    Raises:
        InputError: If no reference parameters are available
        HarnessError: If too many refit replicates fail
    """
    config = ctx.config
    spec = ctx.reference
    params = ctx.reference_params()
    common = dict(n=config.n, replicates=config.replicates, seed=config.seed, grid=ctx.grid,
                  threads=config.threads, progress=config.progress)
    start = time.perf_counter()
    if config.method == "projected":
        dists = simulate_null_projected(spec, params, **common)
    elif config.method == "refit":
        dists = simulate_null_refit(spec, params, fit_config=config.fit, **common)
    else:
        truth = spec.params(config.true_params) if config.true_params is not None else params
        dists = simulate_null_mc(spec, truth, fit_config=config.fit, **common)
    elapsed = time.perf_counter() - start

    _write_null(ctx, dists)
    write_json(ctx.out / "null_timing.json", ctx.stamp({"method": METHOD_LABELS[config.method],
                                                        "replicates": config.replicates,
                                                        "wall_seconds": elapsed}))
    logger.info("null_written", model=spec.name, method=config.method, seconds=round(elapsed, 3))
    return dists


def _load_nulls(ctx: RunContext) -> Dict[str, NullDistribution]:
    null_dir = Path(ctx.config.null_dir or ctx.config.out)
    dists = {}
    for kind in STAT_KINDS:
        dist = NullDistribution.from_dict(read_json(null_dir / f"null_{kind}.json"))
        if dist.model != ctx.config.reference:
            raise InputError(f"Null {kind} in {null_dir} was simulated for {dist.model}, not {ctx.config.reference}")
        if dist.n != ctx.config.n:
            logger.warning("null_sample_size_differs", null_n=dist.n, data_n=ctx.config.n)
        dists[kind] = dist
    return dists


def cmd_test(ctx: RunContext, data_csv: str) -> Dict[str, Any]:
    """
    Test the reference and every candidate on a data set against the reference null

    Raises:
        NoConvergence: If a fit does not converge
        DimensionMismatch: If a candidate's p differs from the reference's
        AuditError: If a rotation plan fails its invariant checks
    """
    config = ctx.config
    reference = ctx.reference
    candidates = [ctx.model(name) for name in config.candidates]
    _check_dimensions(reference, candidates)
    nulls = _load_nulls(ctx)
    data = read_points_csv(data_csv, d=reference.d, support=reference.support)
    if len(data) != config.n:
        logger.warning("data_size_differs_from_config", rows=len(data), n=config.n)

    q_fit = require_converged(mle_fit(reference, data, ctx.grid, config=config.fit))
    q_inst = instantiate(reference, q_fit.params, ctx.grid)
    q_plan = build_projection_plan(q_inst, ctx.grid)
    q_process = projected_process(data, q_plan)
    q_stats = stat_triple(q_process, q_inst.density_field, q_inst.cdf_table)
    write_csv(ctx.out / f"process_{reference.name}.csv", q_process.to_frame())

    def row(name: str, kind: str, fit: FitResult, stats, audit=None) -> Dict[str, Any]:
        return {
            "model": name,
            "kind": kind,
            "params": list(fit.params.values),
            "loglik": fit.log_likelihood,
            **stats.as_dict(),
            "p_values": {k: p_value(nulls[k], stats[k]) for k in STAT_KINDS},
            "audit": audit,
        }

    rows = [row(reference.name, "projected", q_fit, q_stats)]
    for spec in candidates:
        f_fit = require_converged(mle_fit(spec, data, ctx.grid, config=config.fit))
        f_inst = instantiate(spec, f_fit.params, ctx.grid)
        plan = build_rotation_plan(q_inst, f_inst, ctx.grid, q_plan)
        plan.audit(config.audit_tolerance)
        process = rotated_process(data, plan)
        write_csv(ctx.out / f"process_{spec.name}.csv", process.to_frame())
        stats = stat_triple(process, q_inst.density_field, q_inst.cdf_table)
        rows.append(row(spec.name, "rotated", f_fit, stats, plan.summary()))

    report = ctx.stamp({"n": len(data), "reference": reference.name, "null_replicates": nulls["D"].replicates,
                        "rows": rows})
    write_json(ctx.out / "test_report.json", report)
    logger.info("test_written", models=[r["model"] for r in rows])
    return report


def cmd_power(ctx: RunContext):
    """
    Run the power study and write power.csv, power_table.csv and power.json

    Raises:
        DimensionMismatch: If a candidate's p differs from the reference's
        HarnessError: If too many power replicates fail
    """
    config = ctx.config
    reference = ctx.reference
    candidates = [ctx.model(name) for name in config.candidates]
    _check_dimensions(reference, candidates)
    truth_spec = ctx.model(config.truth)
    truth_params = (
        truth_spec.params(config.true_params) if config.true_params is not None else truth_spec.default_params()
    )
    truth = instantiate(truth_spec, truth_params, ctx.grid)

    start = time.perf_counter()
    report = power_study(
        truth,
        reference,
        candidates,
        n=config.n,
        power_replicates=config.power_replicates,
        null_replicates=config.replicates,
        alphas=config.alpha,
        seed=config.seed,
        grid=ctx.grid,
        fit_config=config.fit,
        threads=config.threads,
        recalibrate=config.recalibrate,
        include_direct=config.include_direct,
        progress=config.progress,
    )
    elapsed = time.perf_counter() - start
    write_csv(ctx.out / "power.csv", report.to_frame())
    write_csv(ctx.out / "power_table.csv", report.wide_frame())
    write_json(ctx.out / "power.json", ctx.stamp(report.to_dict()))
    write_json(ctx.out / "power_timing.json", ctx.stamp({"wall_seconds": elapsed}))
    return report


def cmd_bench(ctx: RunContext) -> Dict[str, Any]:
    """
    Time the projected and refit bootstraps with identical seeds

    Writes bench.json (KS comparison of the two sup distributions) and
    bench_timing.json (wall times and their ratio).
    """
    config = ctx.config
    spec = ctx.reference
    params = ctx.reference_params(required=False) or spec.default_params()
    common = dict(n=config.n, replicates=config.replicates, seed=config.seed, grid=ctx.grid,
                  threads=config.threads, progress=config.progress)

    start = time.perf_counter()
    projected = simulate_null_projected(spec, params, **common)
    projected_seconds = time.perf_counter() - start
    start = time.perf_counter()
    refit = simulate_null_refit(spec, params, fit_config=config.fit, **common)
    refit_seconds = time.perf_counter() - start

    comparisons = {}
    for kind in STAT_KINDS:
        result = compare_distributions(projected[kind], refit[kind])
        comparisons[kind] = {"ks_statistic": result.statistic, "p_value": result.p_value}
    write_json(ctx.out / "bench.json", ctx.stamp({"model": spec.name, "params": list(params.values),
                                                  "replicates": config.replicates, "n": config.n,
                                                  "comparisons": comparisons}))
    timing = {"projected_seconds": projected_seconds, "refit_seconds": refit_seconds,
              "ratio": refit_seconds / projected_seconds if projected_seconds > 0 else None}
    write_json(ctx.out / "bench_timing.json", ctx.stamp(timing))
    logger.info("bench_finished", **timing)
    return timing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML config file")
    common.add_argument("--seed", type=int, help="Run seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="Worker threads (results do not depend on it)")
    common.add_argument("--method", choices=["projected", "refit", "mc"], help="Null simulation method")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--reference", help="Reference model name")
    common.add_argument("--candidates", nargs="+", help="Candidate model names")
    common.add_argument("--truth", help="Data-generating model for power studies")
    common.add_argument("--model-file", action="append", dest="model_files", help="User model JSON (repeatable)")
    common.add_argument("--n", type=int, help="Sample size")
    common.add_argument("--replicates", type=int, help="Null replicates")
    common.add_argument("--power-replicates", type=int, help="Power replicates")
    common.add_argument("--alpha", type=float, nargs="+", help="Significance levels")
    common.add_argument("--reference-params", type=float, nargs="+", help="Reference model parameters")
    common.add_argument("--true-params", type=float, nargs="+", help="True parameters (mc method, power truth)")
    common.add_argument("--fit-file", help="fit.json with the reference estimate")
    common.add_argument("--null-dir", help="Directory holding null_*.json")
    common.add_argument("--grid", type=int, nargs=2, metavar=("N1", "N2"), help="Cells per axis")
    common.add_argument("--support-lower", type=float, nargs="+", help="Lower corner of the support")
    common.add_argument("--support-upper", type=float, nargs="+", help="Upper corner of the support")
    common.add_argument("--restarts", type=int, help="Jittered MLE restarts")
    common.add_argument("--max-evaluations", type=int, help="Nelder-Mead evaluation budget per start")
    common.add_argument("--recalibrate", action="store_true", default=None, help="Per-replicate null in power studies")
    common.add_argument("--include-direct", action="store_true", default=None,
                        help="Also test candidates against their own null")
    common.add_argument("--histogram-bins", type=int, help="Bins of the null histograms")
    common.add_argument("--audit-tolerance", type=float, help="Largest accepted rotation invariant residual")
    common.add_argument("--no-progress", action="store_false", dest="progress", default=None,
                        help="Hide progress bars")
    common.add_argument("--log-level", help="Log level (default K2GOF_LOG_LEVEL or INFO)")
    common.add_argument("--log-format", choices=["console", "json"], help="Log renderer")

    parser = argparse.ArgumentParser(prog="k2gof", description=__doc__.split("\n\n")[1].strip())
    parser.add_argument("--version", action="version", version=f"k2gof {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fit = sub.add_parser("fit", parents=[common], help="Fit a model to a data CSV")
    fit.add_argument("data_csv")
    fit.add_argument("--model", help="Model to fit (default: the reference)")
    sub.add_parser("null", parents=[common], help="Simulate the reference null distributions")
    test = sub.add_parser("test", parents=[common], help="Test reference and candidates on a data CSV")
    test.add_argument("data_csv")
    sub.add_parser("power", parents=[common], help="Run a power study")
    sub.add_parser("bench", parents=[common], help="Time projected vs refit bootstrap")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """CLI flags as a nested RunConfig override mapping (unset flags are None)"""
    overrides: Dict[str, Any] = {
        key: getattr(args, key, None)
        for key in (
            "seed", "threads", "method", "out", "reference", "candidates", "truth", "model_files", "n",
            "replicates", "power_replicates", "alpha", "reference_params", "true_params", "fit_file",
            "null_dir", "recalibrate", "include_direct", "histogram_bins", "audit_tolerance", "progress",
            "log_level", "log_format",
        )
    }
    if getattr(args, "grid", None):
        overrides["grid"] = {"n1": args.grid[0], "n2": args.grid[1]}
    nested = {
        "support": {"lower": getattr(args, "support_lower", None), "upper": getattr(args, "support_upper", None)},
        "fit": {"restarts": getattr(args, "restarts", None), "max_evaluations": getattr(args, "max_evaluations", None)},
    }
    for key, values in nested.items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            overrides[key] = values
    return overrides


def run_command(args: argparse.Namespace) -> Tuple[RunContext, Any]:
    config = load_run_config(args.config, overrides_from_args(args))
    setup_logging(config.log_level, config.log_format)
    ctx = RunContext(config)
    logger.info("command_started", command=args.command, config_hash=ctx.config_hash, seed=config.seed)
    write_json(ctx.out / "effective_config.json", ctx.stamp({"command": args.command, "config": config.hashed_fields()}))
    if args.command == "fit":
        result = cmd_fit(ctx, args.data_csv, args.model)
    elif args.command == "null":
        result = cmd_null(ctx)
    elif args.command == "test":
        result = cmd_test(ctx, args.data_csv)
    elif args.command == "power":
        result = cmd_power(ctx)
    else:
        result = cmd_bench(ctx)
    logger.info("command_finished", command=args.command, config_hash=ctx.config_hash)
    return ctx, result


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the k2gof command

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        int: Process exit code
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level, args.log_format)
    try:
        run_command(args)
    except K2GofError as e:
        logger.error("command_failed", command=args.command, error=str(e), exit_code=e.exit_code)
        print(f"k2gof {args.command}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception("command_crashed", command=args.command, error=str(e))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
