"""
Power study

Data come from a true model. Every power replicate fits the reference
model and each candidate, computes the reference statistics from the
projected process and the candidates' rotated statistics, and rejects when
a statistic exceeds the critical value of the reference null.

By default the reference null is simulated once, at the estimate from a
dedicated calibration sample, and shared by all replicates and candidates.
``recalibrate`` simulates a fresh null at every replicate's own estimate
instead. ``include_direct`` additionally tests each candidate with its own
projected process against its own shared null.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from k2gof.config.logging_config import get_logger
from k2gof.config.settings import SCHEMA_VERSION, FitConfig
from k2gof.errors import InputError
from k2gof.estimation.fit import mle_fit, require_converged
from k2gof.models.base import ModelInstance, ModelSpec, instantiate, sample
from k2gof.process.projection import build_projection_plan, projected_process
from k2gof.quadrature.grid import Grid
from k2gof.rotation.k2 import build_rotation_plan, rotated_process
from k2gof.simulation.replication import (
    MIN_REPLICATES,
    NullDistribution,
    check_failures,
    critical_value,
    run_replicates,
    simulate_null_projected,
)
from k2gof.simulation.rng import RngStream
from k2gof.stats.functionals import STAT_KINDS, stat_triple

logger = get_logger(__name__)

POWER_FAILURE_LIMIT = 0.02

HAT = {kind: f"{kind}_hat" for kind in STAT_KINDS}
TILDE = {kind: f"{kind}_tilde" for kind in STAT_KINDS}

RowKey = Tuple[str, str, float]


@dataclass(frozen=True, eq=False)
class PowerReport:
    """
    Rejection rates per (null model, statistic, alpha)

    Attributes:
        rows: One dict per (null_model, statistic, alpha) with power, se, replicates
        truth: Name of the data-generating model
        truth_params: Its parameters
        calibration_params: Reference estimate the shared null was built at
        requested: Power replicates requested
        excluded: Power replicates dropped for non-convergence
    """

    rows: List[Dict]
    truth: str
    truth_params: Tuple[float, ...]
    calibration_params: Tuple[float, ...]
    requested: int
    excluded: int
    meta: Dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["null_model", "statistic", "alpha", "power", "se", "replicates"])

    def wide_frame(self) -> pd.DataFrame:
        """Rows = null models, columns = statistic x alpha, in report order"""
        frame = self.to_frame()
        frame["column"] = frame["statistic"] + "@" + frame["alpha"].map(lambda a: f"{a:g}")
        order_rows = list(dict.fromkeys(frame["null_model"]))
        order_cols = list(dict.fromkeys(frame["column"]))
        wide = frame.pivot(index="null_model", columns="column", values="power")
        return wide.reindex(index=order_rows, columns=order_cols).reset_index()

    def power(self, null_model: str, statistic: str, alpha: float) -> float:
        for row in self.rows:
            if row["null_model"] == null_model and row["statistic"] == statistic and row["alpha"] == alpha:
                return row["power"]
        raise KeyError((null_model, statistic, alpha))

    def to_dict(self) -> Dict:
        return {
            "schema": SCHEMA_VERSION,
            "truth": self.truth,
            "truth_params": list(self.truth_params),
            "calibration_params": list(self.calibration_params),
            "requested": self.requested,
            "excluded": self.excluded,
            "meta": dict(self.meta),
            "rows": self.rows,
        }


def _fit_instance(
    spec: ModelSpec, data: np.ndarray, grid: Grid, config: Optional[FitConfig], start: Optional[Sequence[float]]
) -> ModelInstance:
    fit = require_converged(mle_fit(spec, data, grid, config=config, start=start))
    return instantiate(spec, fit.params, grid)


def _derived_seed(seed: int, r: int, domain: str) -> int:
    return int(RngStream(seed, r, domain).generator().integers(0, 2**63))


def power_study(
    truth: ModelInstance,
    reference: ModelSpec,
    candidates: Sequence[ModelSpec],
    n: int,
    power_replicates: int,
    null_replicates: int,
    alphas: Sequence[float],
    seed: int,
    grid: Grid,
    fit_config: Optional[FitConfig] = None,
    threads: int = 1,
    recalibrate: bool = False,
    include_direct: bool = False,
    progress: bool = False,
    null_distributions: Optional[Dict[str, NullDistribution]] = None,
) -> PowerReport:
    """
    Rejection rates of the reference and rotated candidate tests

    Args:
        truth: Data-generating model
        reference: Reference model Q (its null calibrates every test)
        candidates: Candidate models F_m, each with the same p as Q
        n: Sample size per power replicate
        power_replicates: Number of power replicates (>= 100)
        null_replicates: Replicates per simulated null (>= 100)
        alphas: Significance levels
        seed: Run seed
        grid: Shared quadrature grid
        fit_config: Optimizer budget for all fits
        threads: Workers for the replicate loop
        recalibrate: Simulate the reference null at each replicate's estimate
        include_direct: Also test each candidate against its own projected null
        progress: Show progress bars
        null_distributions: Precomputed shared reference null, keyed by statistic

    Returns:
        PowerReport: One row per (null model, statistic, alpha)

    Raises:
        HarnessError: If more than 2% of power replicates fail to converge
        DimensionMismatch: If a candidate's p differs from the reference's
    """
    if power_replicates < MIN_REPLICATES or null_replicates < MIN_REPLICATES:
        raise InputError(f"Power studies need at least {MIN_REPLICATES} power and null replicates")
    alphas = sorted(float(a) for a in alphas)

    calibration = sample(truth, n, RngStream(seed, 0, "calibration"))
    q_cal = _fit_instance(reference, calibration, grid, fit_config, None)
    shared_null = null_distributions
    if shared_null is None and not recalibrate:
        shared_null = simulate_null_projected(
            reference, q_cal.params, n, null_replicates, seed, grid, threads=threads, progress=progress
        )
    f_cal = {spec.name: _fit_instance(spec, calibration, grid, fit_config, None) for spec in candidates}
    direct_null: Dict[str, Dict[str, NullDistribution]] = {}
    if include_direct:
        for spec in candidates:
            direct_null[spec.name] = simulate_null_projected(
                spec, f_cal[spec.name].params, n, null_replicates, seed, grid, threads=threads, progress=progress
            )

    def thresholds(null: Dict[str, NullDistribution]) -> Dict[Tuple[str, float], float]:
        return {(kind, a): critical_value(null[kind], a) for kind in STAT_KINDS for a in alphas}

    shared_cv = thresholds(shared_null) if shared_null is not None else None
    direct_cv = {name: thresholds(null) for name, null in direct_null.items()}

    def task(r: int) -> Dict[RowKey, bool]:
        data = sample(truth, n, RngStream(seed, r, "power"))
        q_inst = _fit_instance(reference, data, grid, fit_config, q_cal.params.values)
        q_plan = build_projection_plan(q_inst, grid)
        q_stats = stat_triple(projected_process(data, q_plan), q_inst.density_field, q_inst.cdf_table)
        if recalibrate:
            null = simulate_null_projected(
                reference, q_inst.params, n, null_replicates, _derived_seed(seed, r, "recalibrate"), grid
            )
            cv = thresholds(null)
        else:
            cv = shared_cv

        rejected: Dict[RowKey, bool] = {}
        for kind in STAT_KINDS:
            for a in alphas:
                rejected[(reference.name, HAT[kind], a)] = q_stats[kind] > cv[(kind, a)]
        for spec in candidates:
            f_inst = _fit_instance(spec, data, grid, fit_config, f_cal[spec.name].params.values)
            rot = build_rotation_plan(q_inst, f_inst, grid, q_plan)
            f_stats = stat_triple(rotated_process(data, rot), q_inst.density_field, q_inst.cdf_table)
            for kind in STAT_KINDS:
                for a in alphas:
                    rejected[(spec.name, TILDE[kind], a)] = f_stats[kind] > cv[(kind, a)]
            if include_direct:
                f_plan = build_projection_plan(f_inst, grid)
                d_stats = stat_triple(projected_process(data, f_plan), f_inst.density_field, f_inst.cdf_table)
                for kind in STAT_KINDS:
                    for a in alphas:
                        rejected[(spec.name, HAT[kind], a)] = d_stats[kind] > direct_cv[spec.name][(kind, a)]
        return rejected

    results = run_replicates(task, power_replicates, threads, progress, "power")
    kept = check_failures(results, POWER_FAILURE_LIMIT, "power")

    rows = []
    for key in kept[0]:
        hits = sum(1 for outcome in kept if outcome[key])
        rate = hits / len(kept)
        null_model, statistic, alpha = key
        rows.append(
            {
                "null_model": null_model,
                "statistic": statistic,
                "alpha": alpha,
                "power": rate,
                "se": float(np.sqrt(rate * (1.0 - rate) / len(kept))),
                "replicates": len(kept),
            }
        )
    report = PowerReport(
        rows=rows,
        truth=truth.spec.name,
        truth_params=truth.params.values,
        calibration_params=q_cal.params.values,
        requested=power_replicates,
        excluded=power_replicates - len(kept),
        meta={
            "n": n,
            "null_replicates": null_replicates,
            "seed": seed,
            "recalibrate": recalibrate,
            "include_direct": include_direct,
        },
    )
    logger.info("power_study_finished", truth=truth.spec.name, replicates=len(kept), excluded=report.excluded)
    return report
