"""
Replication engine for null distributions

Every replicate draws from its own RngStream and returns a StatTriple;
replicates run in chunks, sequentially or on a joblib thread pool, and are
collected in index order, so the resulting distributions do not depend on
the number of workers. Replicates whose refit does not converge are
logged and excluded, up to a failure threshold.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import ks_2samp
from tqdm import tqdm

from k2gof.config.logging_config import get_logger
from k2gof.config.settings import SCHEMA_VERSION, FitConfig
from k2gof.errors import HarnessError, InputError, NoConvergence
from k2gof.models.base import ModelSpec, ParamVector, instantiate, sample
from k2gof.process.projection import build_projection_plan, plugin_fit, projected_process
from k2gof.quadrature.grid import Grid
from k2gof.rotation.k2 import RotationPlan, rotated_process
from k2gof.simulation.rng import RngStream
from k2gof.stats.functionals import STAT_KINDS, StatTriple, stat_triple

logger = get_logger(__name__)

MIN_REPLICATES = 100
NULL_FAILURE_LIMIT = 0.01
CHUNKS_PER_WORKER = 4

METHODS = ("bootstrap-projected", "bootstrap-refit", "monte-carlo", "bootstrap-rotated")

ReplicateTask = Callable[[int], StatTriple]


@dataclass(frozen=True, eq=False)
class NullDistribution:
    """
    Sorted replicate values of one statistic with their provenance

    Attributes:
        stat_kind: "D", "omega2" or "A2"
        values: Sorted replicate values (excluded replicates removed)
        n: Sample size per replicate
        model: Model the data were simulated from
        params_at_build: Parameters the replicates were simulated at
        seed: Run seed
        method: One of METHODS
        requested: Replicates requested, including excluded ones
        reference: Reference model a rotated null is calibrated against
    """

    stat_kind: str
    values: np.ndarray
    n: int
    model: str
    params_at_build: ParamVector
    seed: int
    method: str
    requested: int = 0
    reference: Optional[str] = None
    config_hash: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.sort(np.asarray(self.values, dtype=float))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.requested:
            object.__setattr__(self, "requested", values.size)

    @property
    def replicates(self) -> int:
        return int(self.values.size)

    @property
    def excluded(self) -> int:
        return self.requested - self.replicates

    def meta(self) -> Dict:
        return {
            "stat_kind": self.stat_kind,
            "replicates": self.replicates,
            "requested": self.requested,
            "excluded": self.excluded,
            "n": self.n,
            "model": self.model,
            "reference": self.reference,
            "params_at_build": list(self.params_at_build.values),
            "labels": list(self.params_at_build.labels),
            "seed": self.seed,
            "method": self.method,
            "config_hash": self.config_hash,
        }

    def to_dict(self) -> Dict:
        return {"schema": SCHEMA_VERSION, "meta": self.meta(), "values": self.values}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"rank": np.arange(1, self.replicates + 1), "value": self.values})

    @classmethod
    def from_dict(cls, data: Dict) -> "NullDistribution":
        """Rebuild from the JSON form written by ``to_dict``"""
        try:
            meta = data["meta"]
            return cls(
                stat_kind=meta["stat_kind"],
                values=np.asarray(data["values"], dtype=float),
                n=int(meta["n"]),
                model=meta["model"],
                params_at_build=ParamVector(tuple(meta["params_at_build"]), tuple(meta["labels"])),
                seed=int(meta["seed"]),
                method=meta["method"],
                requested=int(meta.get("requested", 0)),
                reference=meta.get("reference"),
                config_hash=meta.get("config_hash"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Null distribution record is incomplete: {e}") from e


@dataclass(frozen=True)
class DistributionComparison:
    """Two-sample Kolmogorov-Smirnov comparison"""

    statistic: float
    p_value: float
    n_a: int
    n_b: int

    def accepts(self, level: float) -> bool:
        return self.p_value >= level


def _run_chunk(task: ReplicateTask, indices: Sequence[int]) -> List[Tuple[int, Optional[StatTriple]]]:
    out = []
    for r in indices:
        try:
            out.append((r, task(r)))
        except NoConvergence as e:
            logger.warning("replicate_excluded", replicate=r, reason=str(e))
            out.append((r, None))
    return out


def run_replicates(
    task: ReplicateTask,
    replicates: int,
    threads: int = 1,
    progress: bool = False,
    label: str = "replicates",
) -> List[Optional[StatTriple]]:
    """
    Run ``task(r)`` for r in 0..replicates-1

    Args:
        task: Replicate function; NoConvergence marks the replicate as failed
        replicates: Number of replicates
        threads: Worker count; 1 runs sequentially
        progress: Show a tqdm bar (sequential runs only)
        label: Progress bar description

    Returns:
        list: Results in replicate order, None for failed replicates
    """
    if threads <= 1:
        results = []
        for r in tqdm(range(replicates), desc=label, disable=not progress, leave=False):
            results.extend(_run_chunk(task, [r]))
    else:
        n_chunks = min(replicates, threads * CHUNKS_PER_WORKER)
        chunks = [c.tolist() for c in np.array_split(np.arange(replicates), n_chunks)]
        parts = Parallel(n_jobs=threads, prefer="threads")(delayed(_run_chunk)(task, c) for c in chunks)
        results = [item for part in parts for item in part]
    results.sort(key=lambda item: item[0])
    return [value for _, value in results]


def check_failures(results: Sequence[Optional[object]], limit: float, what: str) -> List[object]:
    """
    Drop failed replicates, raising HarnessError above ``limit`` (a fraction)
    """
    kept = [r for r in results if r is not None]
    failed = len(results) - len(kept)
    if failed > limit * len(results):
        logger.error("harness_threshold_exceeded", what=what, failed=failed, total=len(results), limit=limit)
        raise HarnessError(f"{failed} of {len(results)} {what} replicates failed (limit {limit:.0%})")
    if failed:
        logger.warning("replicates_excluded", what=what, failed=failed, total=len(results))
    return kept


def _distributions(
    triples: Sequence[StatTriple],
    requested: int,
    n: int,
    model: str,
    params: ParamVector,
    seed: int,
    method: str,
    reference: Optional[str] = None,
) -> Dict[str, NullDistribution]:
    return {
        kind: NullDistribution(
            stat_kind=kind,
            values=np.array([t[kind] for t in triples]),
            n=n,
            model=model,
            params_at_build=params,
            seed=seed,
            method=method,
            requested=requested,
            reference=reference,
        )
        for kind in STAT_KINDS
    }


def _check_sizes(n: int, replicates: int) -> None:
    if replicates < MIN_REPLICATES:
        raise InputError(f"Null simulations need at least {MIN_REPLICATES} replicates, got {replicates}")
    if n < 1:
        raise InputError(f"Sample size must be at least 1, got {n}")


def _params(spec: ModelSpec, params: Union[ParamVector, Sequence[float]]) -> ParamVector:
    return params if isinstance(params, ParamVector) else spec.params(params)


def simulate_null_projected(
    spec: ModelSpec,
    theta_hat: Union[ParamVector, Sequence[float]],
    n: int,
    replicates: int,
    seed: int,
    grid: Grid,
    threads: int = 1,
    progress: bool = False,
) -> Dict[str, NullDistribution]:
    """
    Parametric bootstrap with one projection plan at ``theta_hat``

    Each replicate samples n points from the model at ``theta_hat`` and
    evaluates the projected process against the fixed plan; no refit.

    Returns:
        Dict[str, NullDistribution]: Keyed by "D", "omega2", "A2"
    """
    _check_sizes(n, replicates)
    params = _params(spec, theta_hat)
    inst = instantiate(spec, params, grid)
    plan = build_projection_plan(inst, grid)

    def task(r: int) -> StatTriple:
        data = sample(inst, n, RngStream(seed, r, "null-projected"))
        return stat_triple(projected_process(data, plan), inst.density_field, inst.cdf_table)

    results = run_replicates(task, replicates, threads, progress, f"null {spec.name} projected")
    logger.info("null_simulated", model=spec.name, method="bootstrap-projected", replicates=replicates, n=n)
    return _distributions(results, replicates, n, spec.name, params, seed, "bootstrap-projected")


def _simulate_refit(
    spec: ModelSpec,
    params: ParamVector,
    n: int,
    replicates: int,
    seed: int,
    grid: Grid,
    method: str,
    fit_config: Optional[FitConfig],
    threads: int,
    progress: bool,
) -> Dict[str, NullDistribution]:
    _check_sizes(n, replicates)
    inst = instantiate(spec, params, grid)
    domain = "null-refit" if method == "bootstrap-refit" else "null-mc"

    def task(r: int) -> StatTriple:
        data = sample(inst, n, RngStream(seed, r, domain))
        process, refit = plugin_fit(data, spec, grid, config=fit_config, start=params.values, restarts=0)
        return stat_triple(process, refit.density_field, refit.cdf_table)

    results = run_replicates(task, replicates, threads, progress, f"null {spec.name} {method}")
    kept = check_failures(results, NULL_FAILURE_LIMIT, f"{method} null")
    logger.info("null_simulated", model=spec.name, method=method, replicates=replicates, excluded=replicates - len(kept))
    return _distributions(kept, replicates, n, spec.name, params, seed, method)


def simulate_null_refit(
    spec: ModelSpec,
    theta_hat: Union[ParamVector, Sequence[float]],
    n: int,
    replicates: int,
    seed: int,
    grid: Grid,
    fit_config: Optional[FitConfig] = None,
    threads: int = 1,
    progress: bool = False,
) -> Dict[str, NullDistribution]:
    """
    Parametric bootstrap refitting the model on every replicate

    Each replicate samples from ``theta_hat``, refits (warm-started at
    ``theta_hat``) and evaluates the plug-in process with the refit model.

    Raises:
        HarnessError: If more than 1% of replicates fail to converge
    """
    params = _params(spec, theta_hat)
    return _simulate_refit(spec, params, n, replicates, seed, grid, "bootstrap-refit", fit_config, threads, progress)


def simulate_null_mc(
    spec: ModelSpec,
    theta_true: Union[ParamVector, Sequence[float]],
    n: int,
    replicates: int,
    seed: int,
    grid: Grid,
    fit_config: Optional[FitConfig] = None,
    threads: int = 1,
    progress: bool = False,
) -> Dict[str, NullDistribution]:
    """
    Monte Carlo null: data from the true parameters, refit on every replicate

    Raises:
        HarnessError: If more than 1% of replicates fail to converge
    """
    params = _params(spec, theta_true)
    return _simulate_refit(spec, params, n, replicates, seed, grid, "monte-carlo", fit_config, threads, progress)


def simulate_null_rotated(
    plan: RotationPlan,
    n: int,
    replicates: int,
    seed: int,
    threads: int = 1,
    progress: bool = False,
) -> Dict[str, NullDistribution]:
    """
    Null of the rotated statistics with data from the candidate at its plan estimate

    The plan is held fixed; statistics are weighted with the reference
    model's density and cdf.
    """
    _check_sizes(n, replicates)
    f_inst = plan.f_inst
    q_inst = plan.q_inst

    def task(r: int) -> StatTriple:
        data = sample(f_inst, n, RngStream(seed, r, f"null-rotated/{f_inst.spec.name}"))
        return stat_triple(rotated_process(data, plan), q_inst.density_field, q_inst.cdf_table)

    results = run_replicates(task, replicates, threads, progress, f"null {f_inst.spec.name} rotated")
    logger.info("null_simulated", model=f_inst.spec.name, method="bootstrap-rotated", replicates=replicates, n=n)
    return _distributions(
        results, replicates, n, f_inst.spec.name, f_inst.params, seed, "bootstrap-rotated", reference=q_inst.spec.name
    )


def _values(dist: Union[NullDistribution, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(dist, NullDistribution):
        return dist.values
    return np.sort(np.asarray(dist, dtype=float))


def p_value(dist: Union[NullDistribution, np.ndarray], observed: float) -> float:
    """
    Right-tail p-value (1 + #{values >= observed}) / (R + 1)

    Example:
        p_value(np.arange(1, 100), 1000.0)  # 0.01
    """
    values = _values(dist)
    if values.size == 0:
        raise InputError("p-value of an empty null distribution")
    exceed = values.size - int(np.searchsorted(values, observed, side="left"))
    return (1.0 + exceed) / (values.size + 1.0)


def critical_value(dist: Union[NullDistribution, np.ndarray], alpha: float) -> float:
    """
    Empirical (1 - alpha) quantile, values[ceil((1 - alpha)(R + 1)) - 1] clamped to range
    """
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    values = _values(dist)
    if values.size == 0:
        raise InputError("Critical value of an empty null distribution")
    position = math.ceil(round((1.0 - alpha) * (values.size + 1), 9)) - 1
    return float(values[min(max(position, 0), values.size - 1)])


def compare_distributions(
    a: Union[NullDistribution, np.ndarray], b: Union[NullDistribution, np.ndarray]
) -> DistributionComparison:
    """Two-sample Kolmogorov-Smirnov comparison of two replicate samples"""
    va, vb = _values(a), _values(b)
    result = ks_2samp(va, vb)
    return DistributionComparison(float(result.statistic), float(result.pvalue), int(va.size), int(vb.size))


def holm_adjust(p_values: Sequence[float]) -> np.ndarray:
    """
    Holm step-down adjustment of a family of p-values

    The k-th smallest p-value is multiplied by (m - k + 1), adjusted values
    are made monotone in that order and capped at 1. Comparing every
    adjusted value with a level controls the family-wise error at that level.

    Example:
        holm_adjust([0.01, 0.04, 0.03])  # [0.03, 0.06, 0.06]
    """
    ps = np.asarray(p_values, dtype=float)
    m = ps.size
    order = np.argsort(ps, kind="stable")
    scaled = ps[order] * (m - np.arange(m))
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(np.maximum.accumulate(scaled), 1.0)
    return adjusted
