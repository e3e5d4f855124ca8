"""
Empirical processes on the grid

    classical   (1/sqrt n) sum_i [1{t_i <= x} - Q(x)]         known parameters
    plugin      same with Q refit on the data                  theta-hat per data set
    projected   psi minus its projection on the normalized scores, at a fixed plan

The projected process needs no refit: at node x it is

    (1/sqrt n) [ N(x) - n Q(x) - sum_j (sum_i b_j(t_i)) C_j(x) ]

with N(x) the cell-level empirical count and C_j(x) = <b_j, psi_x>_Q, which
equals the partial integral of b_j q up to x because b_j has mean zero.
"""

from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from k2gof.config.logging_config import get_logger
from k2gof.config.settings import FitConfig
from k2gof.errors import InputError, OutOfSupport
from k2gof.estimation.fit import NormalizedScores, mle_fit, normalized_scores, require_converged
from k2gof.models.base import ModelInstance, ModelSpec, instantiate
from k2gof.quadrature.grid import Grid, GridField, empirical_cdf, indicator_field, partial_integral

logger = get_logger(__name__)

ProcessKind = Literal["classical", "plugin-Q", "projected-Q", "rotated-F"]


@dataclass(frozen=True, eq=False)
class ProcessField:
    """Process values at the grid nodes for one data set of size ``n``"""

    field: GridField
    n: int
    kind: ProcessKind

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def to_frame(self) -> pd.DataFrame:
        return self.field.to_frame("value")


@dataclass(frozen=True, eq=False)
class ProjectionPlan:
    """
    Everything the projected process needs at a fixed parameter point

    Attributes:
        instance: Model at the plug-in estimate
        scores: Normalized scores b_1..b_p
        proj_coeff: C_j(x) = <b_j, psi_x>_Q as fields
        cdf_field: Q(x) at the nodes
    """

    instance: ModelInstance
    scores: NormalizedScores
    proj_coeff: Tuple[GridField, ...]
    cdf_field: GridField

    @property
    def grid(self) -> Grid:
        return self.instance.grid

    @property
    def p(self) -> int:
        return len(self.proj_coeff)

    def coefficient_matrix(self) -> np.ndarray:
        """C_j at every node, shape (grid.size, p)"""
        return np.column_stack([c.flat() for c in self.proj_coeff])


def data_points(data: np.ndarray, inst: ModelInstance) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(data, dtype=float))
    if pts.shape[0] == 0 or pts.size == 0:
        raise InputError("Empirical processes need at least one data point")
    if pts.shape[1] != inst.spec.d:
        raise InputError(f"Data has {pts.shape[1]} columns, model {inst.spec.name} has d={inst.spec.d}")
    inside = inst.spec.support.contains(pts)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise OutOfSupport(f"Point {pts[bad].tolist()} (row {bad}) lies outside the support of {inst.spec.name}")
    return pts


def psi(node_index: Sequence[int], points: np.ndarray, plan: ProjectionPlan) -> np.ndarray:
    """
    psi_x(t) = 1{t <= x} - Q(x) at the node with multi-index ``node_index``

    The indicator compares cell indices, so t counts as below x when it
    lies in x's cell or any cell below it in every coordinate.
    """
    grid = plan.grid
    idx = grid.cell_index(points)
    below = np.all(idx <= np.asarray(node_index), axis=1)
    return below.astype(float) - plan.cdf_field.values[tuple(node_index)]


def psi_field(node_index: Sequence[int], plan: ProjectionPlan) -> GridField:
    """psi_x as a field over t"""
    grid = plan.grid
    return indicator_field(grid, node_index) - plan.cdf_field.values[tuple(node_index)]


def build_projection_plan(inst: ModelInstance, grid: Grid) -> ProjectionPlan:
    """
    Precompute normalized scores and projection coefficients

    Args:
        inst: Model at the plug-in estimate
        grid: Grid the model was normalized on

    Returns:
        ProjectionPlan: Immutable plan, reusable across replicates

    Raises:
        SingularInformation: Propagated from the Fisher matrix
    """
    scores = normalized_scores(inst, grid)
    coeff = tuple(partial_integral(b, inst.density_field) for b in scores.fields)
    plan = ProjectionPlan(instance=inst, scores=scores, proj_coeff=coeff, cdf_field=inst.cdf_table)
    logger.debug(
        "projection_plan_built",
        model=inst.spec.name,
        params=list(inst.params.values),
        condition=plan.scores.fisher.condition_number,
    )
    return plan


def empirical_process(data: np.ndarray, inst: ModelInstance) -> ProcessField:
    """Classical process (1/sqrt n) sum_i [1{t_i <= x} - Q(x)] at known parameters"""
    pts = data_points(data, inst)
    n = pts.shape[0]
    counts = empirical_cdf(inst.grid, pts)
    values = (counts - n * inst.cdf_table.values) / np.sqrt(n)
    return ProcessField(GridField(inst.grid, values), n, "classical")


def projected_process(data: np.ndarray, plan: ProjectionPlan) -> ProcessField:
    """
    Projected process at the plan's fixed parameters

    Scores are evaluated exactly at the data points.

    Raises:
        OutOfSupport: If a data point lies outside the support
    """
    pts = data_points(data, plan.instance)
    n = pts.shape[0]
    counts = empirical_cdf(plan.grid, pts)
    score_sums = plan.scores.at(pts).sum(axis=0)
    projection = (plan.coefficient_matrix() @ score_sums).reshape(plan.grid.shape)
    values = (counts - n * plan.cdf_field.values - projection) / np.sqrt(n)
    return ProcessField(GridField(plan.grid, values), n, "projected-Q")


def plugin_fit(
    data: np.ndarray,
    spec: ModelSpec,
    grid: Grid,
    config: Optional[FitConfig] = None,
    start: Optional[Sequence[float]] = None,
    restarts: Optional[int] = None,
) -> Tuple[ProcessField, ModelInstance]:
    """
    Refit ``spec`` on ``data`` and return the plug-in process with the refit model

    Raises:
        InputError: On empty data
        NoConvergence: If the refit does not converge
    """
    pts = np.atleast_2d(np.asarray(data, dtype=float))
    if pts.size == 0:
        raise InputError("Empirical processes need at least one data point")
    fit = require_converged(mle_fit(spec, pts, grid, config=config, start=start, restarts=restarts))
    inst = instantiate(spec, fit.params, grid)
    classical = empirical_process(pts, inst)
    return ProcessField(classical.field, classical.n, "plugin-Q"), inst


def plugin_process(
    data: np.ndarray,
    spec: ModelSpec,
    grid: Grid,
    config: Optional[FitConfig] = None,
    start: Optional[Sequence[float]] = None,
    restarts: Optional[int] = None,
) -> ProcessField:
    """
    Process with the model refit on ``data``

    Raises:
        InputError: On empty data
        NoConvergence: If the refit does not converge
    """
    return plugin_fit(data, spec, grid, config=config, start=start, restarts=restarts)[0]
