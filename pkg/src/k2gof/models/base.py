"""
Parametric model abstraction

A ModelSpec describes a family of densities on a truncated rectangle by its
unnormalized log-density (vectorized over points), an optional analytic
gradient with respect to the parameters, and an optional sampler for the
untruncated base law. A ModelInstance fixes the parameters and normalizes
the density by midpoint quadrature on a Grid.

Normalization, scores and cdfs are all computed on the same grid, so the
score mean-zero identity and the cdf total-mass identity hold exactly at
quadrature level.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logit

from k2gof.config.logging_config import get_logger
from k2gof.errors import (
    InputError,
    ModelError,
    NonFiniteDensity,
    OutOfSupport,
    RejectionStall,
    SupportMismatch,
    ZeroMass,
)
from k2gof.quadrature.grid import Grid, GridField, SupportRect, prefix_sum

logger = get_logger(__name__)

LogDensityFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
GradientFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
BaseSampler = Callable[[np.ndarray, np.random.Generator, int], np.ndarray]

MIN_NORM_CONST = 1e-300
FD_RELATIVE_STEP = 1e-5
STALL_WINDOW = 1_000_000
STALL_RATE = 1e-4
ENVELOPE_INFLATION = 1.5


@dataclass(frozen=True)
class ParamDomain:
    """Open interval (low, high) a parameter component lives in"""

    low: float = -math.inf
    high: float = math.inf

    def __post_init__(self):
        if not self.low < self.high:
            raise InputError(f"Empty parameter domain ({self.low}, {self.high})")

    def contains(self, value: float) -> bool:
        return bool(np.isfinite(value)) and self.low < value < self.high

    def to_unconstrained(self, value: float) -> float:
        lo_inf, hi_inf = math.isinf(self.low), math.isinf(self.high)
        if lo_inf and hi_inf:
            return float(value)
        if hi_inf:
            return math.log(value - self.low)
        if lo_inf:
            return math.log(self.high - value)
        return float(logit((value - self.low) / (self.high - self.low)))

    def from_unconstrained(self, z: float) -> float:
        lo_inf, hi_inf = math.isinf(self.low), math.isinf(self.high)
        if lo_inf and hi_inf:
            return float(z)
        if hi_inf:
            return self.low + math.exp(min(z, 700.0))
        if lo_inf:
            return self.high - math.exp(min(z, 700.0))
        return self.low + (self.high - self.low) * float(expit(z))

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high}


POSITIVE = ParamDomain(0.0, math.inf)
REAL = ParamDomain()


@dataclass(frozen=True)
class ParamVector:
    """Parameter values with their labels"""

    values: Tuple[float, ...]
    labels: Tuple[str, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        labels = tuple(self.labels)
        if len(values) != len(labels):
            raise InputError(f"{len(values)} parameter values for {len(labels)} labels")
        if len(values) < 1:
            raise InputError("A parameter vector needs at least one component")
        if not all(np.isfinite(values)):
            raise InputError(f"Parameter values must be finite, got {values}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def p(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def to_dict(self) -> dict:
        return dict(zip(self.labels, self.values))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    A parametric family of densities truncated to ``support``

    Attributes:
        name: Registry name ("Q", "F1", ...)
        support: Truncation rectangle
        labels: Parameter names
        domains: Open interval per parameter
        initial_guess: Starting point for the MLE
        log_density_unnormalized: f(theta, points[m, d]) -> log q~ [m]
        gradient: Optional analytic d/dtheta of log q~, returning [m, p]
        base_sampler: Optional sampler of the untruncated base law
        description: Human-readable formula
    """

    name: str
    support: SupportRect
    labels: Tuple[str, ...]
    domains: Tuple[ParamDomain, ...]
    initial_guess: Tuple[float, ...]
    log_density_unnormalized: LogDensityFn
    gradient: Optional[GradientFn] = None
    base_sampler: Optional[BaseSampler] = None
    description: str = ""

    def __post_init__(self):
        if not (len(self.labels) == len(self.domains) == len(self.initial_guess)):
            raise InputError(f"Model {self.name}: labels, domains and initial guess differ in length")
        self.check_params(self.initial_guess)

    @property
    def p(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.support.dim

    @property
    def score_mode(self) -> str:
        return "analytic" if self.gradient is not None else "finite-difference"

    def params(self, values: Sequence[float]) -> ParamVector:
        """Validate ``values`` against the domains and wrap them"""
        self.check_params(values)
        return ParamVector(tuple(values), self.labels)

    def default_params(self) -> ParamVector:
        return ParamVector(self.initial_guess, self.labels)

    def check_params(self, values: Sequence[float]) -> None:
        if len(values) != self.p:
            raise InputError(f"Model {self.name} takes {self.p} parameters, got {len(values)}")
        for label, domain, value in zip(self.labels, self.domains, values):
            if not domain.contains(value):
                raise InputError(
                    f"Model {self.name}: parameter {label}={value} outside ({domain.low}, {domain.high})"
                )

    def to_unconstrained(self, values: Sequence[float]) -> np.ndarray:
        return np.array([d.to_unconstrained(v) for d, v in zip(self.domains, values)])

    def from_unconstrained(self, z: Sequence[float]) -> np.ndarray:
        return np.array([d.from_unconstrained(v) for d, v in zip(self.domains, z)])

    def summary(self) -> dict:
        return {
            "name": self.name,
            "p": self.p,
            "labels": list(self.labels),
            "domains": [d.to_dict() for d in self.domains],
            "support": self.support.to_dict(),
            "score_mode": self.score_mode,
            "description": self.description,
        }


def log_normalizer(spec: ModelSpec, theta: np.ndarray, grid: Grid) -> float:
    """
    log of the grid-quadrature normalization constant of ``spec`` at ``theta``

    Raises:
        NonFiniteDensity: If any node evaluation is NaN or infinite
        ZeroMass: If the constant is below 1e-300
    """
    log_q = np.asarray(spec.log_density_unnormalized(theta, grid.nodes()), dtype=float)
    if not np.all(np.isfinite(log_q)):
        raise NonFiniteDensity(f"Model {spec.name} has non-finite log-density on the grid at {tuple(theta)}")
    peak = float(np.max(log_q))
    log_norm = peak + math.log(float(np.sum(np.exp(log_q - peak))) * grid.cell_weight)
    if log_norm < math.log(MIN_NORM_CONST):
        raise ZeroMass(f"Model {spec.name} has normalization constant below {MIN_NORM_CONST:g}")
    return log_norm


@dataclass(frozen=True, eq=False)
class ModelInstance:
    """
    A ModelSpec at fixed parameters, normalized on ``grid``

    Attributes:
        spec: The model family
        params: The parameter point
        grid: Quadrature grid used for normalization
        log_norm_const: log of the normalization constant
        density_field: Normalized density at the nodes
        cdf_table: Cumulative cell mass at the nodes (own cell included)
        log_norm_gradient: d/dtheta log norm_const (analytic mode only)
    """

    spec: ModelSpec
    params: ParamVector
    grid: Grid
    log_norm_const: float
    density_field: GridField
    cdf_table: GridField
    log_norm_gradient: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def norm_const(self) -> float:
        return math.exp(self.log_norm_const)

    @property
    def theta(self) -> np.ndarray:
        return self.params.as_array()

    def log_density(self, points: np.ndarray) -> np.ndarray:
        """Normalized log-density at arbitrary points"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.spec.log_density_unnormalized(self.theta, pts)) - self.log_norm_const

    def density(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(points))

    def mean(self, k: int) -> float:
        """Quadrature mean of the k-th coordinate"""
        coord = self.grid.coordinate(k)
        return float(np.sum(coord.values * self.density_field.values) * self.grid.cell_weight)


def instantiate(spec: ModelSpec, params: Union[ParamVector, Sequence[float]], grid: Grid) -> ModelInstance:
    """
    Normalize ``spec`` at ``params`` on ``grid``

    Args:
        spec: Model family
        params: Parameter point inside the declared domains
        grid: Quadrature grid over the model's support

    Returns:
        ModelInstance: Immutable normalized model

    Raises:
        SupportMismatch: If the grid does not cover exactly the support
        NonFiniteDensity: If a grid evaluation is NaN or infinite
        ZeroMass: If the normalization constant is below 1e-300
    """
    if not isinstance(params, ParamVector):
        params = spec.params(params)
    else:
        spec.check_params(params.values)
    if grid.rect != spec.support:
        raise SupportMismatch(f"Grid region {grid.rect} differs from model {spec.name} support {spec.support}")

    theta = params.as_array()
    try:
        log_norm = log_normalizer(spec, theta, grid)
    except ModelError as e:
        logger.error("model_instantiation_failed", model=spec.name, params=list(theta), error=str(e))
        raise
    nodes = grid.nodes()
    log_q = np.asarray(spec.log_density_unnormalized(theta, nodes), dtype=float)
    density = np.exp(log_q - log_norm).reshape(grid.shape)
    cdf = prefix_sum(density * grid.cell_weight)

    grad_log_norm = None
    if spec.gradient is not None:
        raw = np.asarray(spec.gradient(theta, nodes), dtype=float)
        grad_log_norm = (raw * density.reshape(-1, 1)).sum(axis=0) * grid.cell_weight
        grad_log_norm.setflags(write=False)

    return ModelInstance(
        spec=spec,
        params=params,
        grid=grid,
        log_norm_const=log_norm,
        density_field=GridField(grid, density),
        cdf_table=GridField(grid, cdf),
        log_norm_gradient=grad_log_norm,
    )


def _check_support(inst: ModelInstance, pts: np.ndarray) -> None:
    inside = inst.spec.support.contains(pts)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise OutOfSupport(f"Point {pts[bad].tolist()} (row {bad}) lies outside the support of {inst.spec.name}")


def score(inst: ModelInstance, points: np.ndarray) -> np.ndarray:
    """
    Score of the normalized (truncated) log-density

    Args:
        inst: Model at fixed parameters
        points: One point (d,) or many (m, d)

    Returns:
        np.ndarray: (p,) for one point, (m, p) otherwise

    Raises:
        OutOfSupport: If a point lies outside the support
    """
    single = np.asarray(points).ndim == 1
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _check_support(inst, pts)
    result = score_unchecked(inst, pts)
    return result[0] if single else result


def difference_points(spec: ModelSpec, theta: np.ndarray, j: int) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Central-difference neighbours of ``theta`` along component ``j``

    The step is 1e-5 * max(1, |theta_j|), shrunk to half the distance to the
    nearest domain bound so both neighbours stay inside the open domain.

    Returns:
        Tuple of (up, down, step)
    """
    domain = spec.domains[j]
    step = FD_RELATIVE_STEP * max(1.0, abs(theta[j]))
    step = min(step, 0.5 * (theta[j] - domain.low), 0.5 * (domain.high - theta[j]))
    up, down = theta.copy(), theta.copy()
    up[j] += step
    down[j] -= step
    return up, down, step


def score_unchecked(inst: ModelInstance, pts: np.ndarray) -> np.ndarray:
    """Score at points already known to be in the support, shape (m, p)"""
    spec = inst.spec
    theta = inst.theta
    if spec.gradient is not None:
        return np.asarray(spec.gradient(theta, pts), dtype=float) - inst.log_norm_gradient

    out = np.empty((pts.shape[0], spec.p))
    for j in range(spec.p):
        up, down, step = difference_points(spec, theta, j)
        log_up = np.asarray(spec.log_density_unnormalized(up, pts)) - log_normalizer(spec, up, inst.grid)
        log_down = np.asarray(spec.log_density_unnormalized(down, pts)) - log_normalizer(spec, down, inst.grid)
        out[:, j] = (log_up - log_down) / (2.0 * step)
    return out


def node_scores(inst: ModelInstance) -> np.ndarray:
    """Score at every grid node, shape (grid.size, p)"""
    return score_unchecked(inst, inst.grid.nodes())


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream-like object (with ``generator()``) or a numpy Generator"""
    make = getattr(rng, "generator", None)
    return make() if callable(make) else rng


def _envelope_sampler(inst: ModelInstance) -> BaseSampler:
    """Uniform-proposal sampler with a grid-estimated density envelope"""
    lower = np.asarray(inst.spec.support.lower)
    upper = np.asarray(inst.spec.support.upper)
    bound = ENVELOPE_INFLATION * float(np.max(inst.density_field.values))

    def draw(_theta: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
        proposals = gen.uniform(lower, upper, size=(size, lower.size))
        u = gen.uniform(0.0, bound, size=size)
        return proposals[u < inst.density(proposals)]

    return draw


def sample(inst: ModelInstance, n: int, rng) -> np.ndarray:
    """
    Draw ``n`` i.i.d. points from the truncated density

    Proposals come from the model's base sampler (accepted when inside the
    support); models without one use uniform proposals under a density
    envelope estimated on the grid.

    Args:
        inst: Model at fixed parameters
        n: Number of points, >= 1
        rng: RngStream or numpy Generator

    Returns:
        np.ndarray: (n, d) points inside the support

    Raises:
        RejectionStall: If acceptance over a window of 1e6 proposals falls below 1e-4
    """
    if n < 1:
        raise InputError(f"Sample size must be at least 1, got {n}")
    gen = as_generator(rng)
    spec = inst.spec
    theta = inst.theta
    draw = spec.base_sampler or _envelope_sampler(inst)
    accepted = []
    have = 0
    window_proposed = 0
    window_accepted = 0
    rate = 0.25
    while have < n:
        remaining = n - have
        batch = int(min(STALL_WINDOW, max(256, math.ceil(1.5 * remaining / max(rate, 1e-3)))))
        proposals = draw(theta, gen, batch)
        if spec.base_sampler is not None:
            proposals = proposals[spec.support.contains(proposals)]
        accepted.append(proposals)
        have += len(proposals)
        window_proposed += batch
        window_accepted += len(proposals)
        rate = max(window_accepted / window_proposed, 1e-6)
        if window_proposed >= STALL_WINDOW:
            if window_accepted / window_proposed < STALL_RATE:
                logger.error("rejection_stall", model=spec.name, params=list(theta), rate=window_accepted / window_proposed)
                raise RejectionStall(
                    f"Model {spec.name} at {tuple(theta)}: acceptance rate "
                    f"{window_accepted / window_proposed:.2e} over {window_proposed} proposals"
                )
            window_proposed = window_accepted = 0
    return np.concatenate(accepted, axis=0)[:n]
