"""
Maximum-likelihood estimation and Fisher geometry

The likelihood of a truncated model is normalized by the same grid
quadrature used everywhere else, so the fitted model, its Fisher matrix and
its normalized scores are mutually consistent at grid level.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from k2gof.config.logging_config import get_logger
from k2gof.config.settings import FitConfig
from k2gof.errors import GridMismatch, InputError, ModelError, NoConvergence, SingularInformation
from k2gof.models.base import (
    ModelInstance,
    ModelSpec,
    ParamVector,
    difference_points,
    log_normalizer,
    node_scores,
    score,
)
from k2gof.quadrature.grid import Grid, GridField

logger = get_logger(__name__)

MIN_FIT_POINTS = 10
SINGULAR_RATIO = 1e-10
EIGEN_FLOOR = 1e-12
GRADIENT_TOLERANCE = 1e-4
JITTER_KEY = 0x6B32_676F_665F_6E6D
JITTER_SCALE = 0.5


@dataclass(frozen=True)
class FitResult:
    """
    Outcome of one maximum-likelihood fit

    Attributes:
        model: Model name
        params: Best parameter point found
        log_likelihood: Log-likelihood at ``params``
        converged: Simplex converged and the likelihood gradient is small
        iterations: Simplex iterations summed over all starts
        evaluations: Objective evaluations summed over all starts
        gradient_norm: Euclidean norm of the finite-difference gradient
        n: Number of data points
    """

    model: str
    params: ParamVector
    log_likelihood: float
    converged: bool
    iterations: int
    evaluations: int = 0
    gradient_norm: float = float("nan")
    n: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "params": list(self.params.values),
            "labels": list(self.params.labels),
            "loglik": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "gradient_norm": self.gradient_norm,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], spec: ModelSpec) -> "FitResult":
        """Rebuild a FitResult written by ``to_dict``, validating against ``spec``"""
        try:
            if data["model"] != spec.name:
                raise InputError(f"Fit is for model {data['model']}, expected {spec.name}")
            return cls(
                model=spec.name,
                params=spec.params(data["params"]),
                log_likelihood=float(data["loglik"]),
                converged=bool(data["converged"]),
                iterations=int(data["iterations"]),
                evaluations=int(data.get("evaluations", 0)),
                gradient_norm=float(data.get("gradient_norm", float("nan"))),
                n=int(data.get("n", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Fit record is incomplete: {e}") from e


def log_likelihood(spec: ModelSpec, theta: np.ndarray, data: np.ndarray, grid: Grid) -> float:
    """Sum of normalized log-densities of ``data`` at ``theta``"""
    log_norm = log_normalizer(spec, theta, grid)
    values = np.asarray(spec.log_density_unnormalized(theta, data), dtype=float)
    return float(np.sum(values) - data.shape[0] * log_norm)


def _negative_log_likelihood(z: np.ndarray, spec: ModelSpec, data: np.ndarray, grid: Grid) -> float:
    theta = spec.from_unconstrained(z)
    if not all(d.contains(v) for d, v in zip(spec.domains, theta)):
        return np.inf
    try:
        with np.errstate(all="ignore"):
            value = log_likelihood(spec, theta, data, grid)
    except ModelError:
        return np.inf
    return -value if np.isfinite(value) else np.inf


def likelihood_gradient(spec: ModelSpec, theta: np.ndarray, data: np.ndarray, grid: Grid) -> np.ndarray:
    """Central finite-difference gradient of the log-likelihood in natural coordinates"""
    grad = np.empty(theta.size)
    for j in range(theta.size):
        up, down, step = difference_points(spec, theta, j)
        try:
            with np.errstate(all="ignore"):
                grad[j] = (log_likelihood(spec, up, data, grid) - log_likelihood(spec, down, data, grid)) / (2 * step)
        except ModelError:
            grad[j] = np.nan
    return grad


def mle_fit(
    spec: ModelSpec,
    data: np.ndarray,
    grid: Grid,
    config: Optional[FitConfig] = None,
    start: Optional[Sequence[float]] = None,
    restarts: Optional[int] = None,
) -> FitResult:
    """
    Maximize the truncated log-likelihood by Nelder-Mead

    The simplex runs on unconstrained coordinates (log / logit transforms of
    bounded parameters) from ``start`` (default: the model's initial guess)
    and from jittered restarts drawn from a fixed stream; the best optimum
    is kept.

    Args:
        spec: Model family
        data: (n, d) points inside the support, n >= 10
        grid: Quadrature grid used for normalization
        config: Optimizer budget (restarts, max evaluations, xatol)
        start: Optional starting point overriding the initial guess
        restarts: Optional override of ``config.restarts``

    Returns:
        FitResult: Best point found; ``converged`` is False when the simplex
        did not converge or the likelihood gradient is not small

    Raises:
        InputError: If fewer than 10 points are given or a point is outside the support
        NoConvergence: If no start yields a finite likelihood
    """
    config = config or FitConfig()
    pts = np.atleast_2d(np.asarray(data, dtype=float))
    n = pts.shape[0]
    if n < MIN_FIT_POINTS:
        raise InputError(f"Fitting {spec.name} needs at least {MIN_FIT_POINTS} points, got {n}")
    inside = spec.support.contains(pts)
    if not np.all(inside):
        raise InputError(f"Row {int(np.flatnonzero(~inside)[0])} lies outside the support of {spec.name}")

    base = spec.to_unconstrained(start if start is not None else spec.initial_guess)
    n_restarts = config.restarts if restarts is None else restarts
    jitter = np.random.Generator(np.random.Philox(key=JITTER_KEY))
    starts = [base] + [base + jitter.normal(scale=JITTER_SCALE, size=base.size) for _ in range(n_restarts)]
    logger.debug("fit_started", model=spec.name, n=n, starts=len(starts))

    best = None
    iterations = evaluations = 0
    for z0 in starts:
        if not np.isfinite(_negative_log_likelihood(z0, spec, pts, grid)):
            continue
        res = minimize(
            _negative_log_likelihood,
            z0,
            args=(spec, pts, grid),
            method="Nelder-Mead",
            options={"maxfev": config.max_evaluations, "xatol": config.xatol, "fatol": 1e-8},
        )
        iterations += int(res.nit)
        evaluations += int(res.nfev)
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res

    if best is None:
        logger.error("fit_failed", model=spec.name, n=n)
        raise NoConvergence(f"No finite likelihood for {spec.name} from any start")

    theta = spec.from_unconstrained(best.x)
    grad_norm = float(np.linalg.norm(likelihood_gradient(spec, theta, pts, grid)))
    converged = bool(best.success) and bool(grad_norm < GRADIENT_TOLERANCE * n)
    result = FitResult(
        model=spec.name,
        params=ParamVector(tuple(theta), spec.labels),
        log_likelihood=float(-best.fun),
        converged=converged,
        iterations=iterations,
        evaluations=evaluations,
        gradient_norm=grad_norm,
        n=n,
    )
    logger.debug("fit_finished", model=spec.name, params=list(theta), loglik=result.log_likelihood, converged=converged)
    return result


def require_converged(result: FitResult) -> FitResult:
    """Return ``result`` or raise NoConvergence carrying it"""
    if not result.converged:
        raise NoConvergence(
            f"Fit of {result.model} did not converge (gradient norm {result.gradient_norm:.3g})",
            result=result,
        )
    return result


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Symmetric p x p Fisher information with its spectrum"""

    matrix: np.ndarray
    eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        mat = 0.5 * (mat + mat.T)
        mat.setflags(write=False)
        eig = np.linalg.eigvalsh(mat)
        eig.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def condition_number(self) -> float:
        low = max(float(self.eigenvalues[0]), EIGEN_FLOOR)
        return float(self.eigenvalues[-1]) / low

    def check_nonsingular(self) -> None:
        low, high = float(self.eigenvalues[0]), float(self.eigenvalues[-1])
        if not high > 0 or low < SINGULAR_RATIO * high:
            raise SingularInformation(
                f"Fisher information is singular: eigenvalues {self.eigenvalues.tolist()}"
            )


def fisher_information(inst: ModelInstance, grid: Grid) -> FisherMatrix:
    """
    Fisher information of ``inst`` by grid quadrature of score products

    Raises:
        GridMismatch: If ``grid`` differs from the instance's grid
        SingularInformation: If the smallest eigenvalue is below 1e-10 x the largest
    """
    if not grid.same_as(inst.grid):
        raise GridMismatch("Fisher information must use the grid the model was normalized on")
    u = node_scores(inst)
    weights = inst.density_field.flat() * grid.cell_weight
    fisher = FisherMatrix((u * weights[:, None]).T @ u)
    fisher.check_nonsingular()
    return fisher


def inverse_sqrt(fisher: Union[FisherMatrix, np.ndarray]) -> np.ndarray:
    """
    Symmetric inverse square root via eigendecomposition

    Eigenvalues are clamped below at 1e-12 before inversion.

    Example:
        inverse_sqrt(np.diag([4.0, 9.0, 25.0]))  # diag(1/2, 1/3, 1/5)
    """
    if not isinstance(fisher, FisherMatrix):
        fisher = FisherMatrix(np.asarray(fisher, dtype=float))
    fisher.check_nonsingular()
    eigvals, eigvecs = np.linalg.eigh(fisher.matrix)
    eigvals = np.maximum(eigvals, EIGEN_FLOOR)
    root = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (root + root.T)


@dataclass(frozen=True, eq=False)
class NormalizedScores:
    """
    Scores premultiplied by the inverse square root of the Fisher matrix

    Attributes:
        instance: Model the scores belong to
        fields: b_1..b_p on the grid
        transform: The symmetric matrix Gamma^(-1/2)
        fisher: The Fisher matrix it was built from
    """

    instance: ModelInstance
    fields: tuple
    transform: np.ndarray
    fisher: FisherMatrix

    @property
    def p(self) -> int:
        return len(self.fields)

    def node_matrix(self) -> np.ndarray:
        """b_j at every node, shape (grid.size, p)"""
        return np.column_stack([f.flat() for f in self.fields])

    def at(self, points: np.ndarray) -> np.ndarray:
        """b evaluated exactly at data points, shape (m, p)"""
        return np.atleast_2d(score(self.instance, np.atleast_2d(points))) @ self.transform


def normalized_scores(inst: ModelInstance, grid: Grid) -> NormalizedScores:
    """
    Orthonormal score fields b = Gamma^(-1/2) u on ``grid``

    Raises:
        SingularInformation: Propagated from the Fisher matrix
    """
    fisher = fisher_information(inst, grid)
    transform = inverse_sqrt(fisher)
    transform.setflags(write=False)
    b = node_scores(inst) @ transform
    fields = tuple(grid.field_from_nodes(b[:, j]) for j in range(b.shape[1]))
    return NormalizedScores(instance=inst, fields=fields, transform=transform, fisher=fisher)
