"""
Builtin models of the reference studies

All five live on the same truncation rectangle (by default [1,20]x[1,25]):

    Q   independent bivariate normal, common variance theta3
    P   bivariate Cauchy with Sigma = [[20, 10], [10, 20]], location (mu1, mu2)
    F1  bivariate gamma with independent components, common rate beta3
    F2  bivariate Cauchy with scale matrix beta3 * I
    F3  correlated bivariate normal in relative coordinates x_k / beta_k - 1

Each model carries its analytic parameter gradient and a sampler for the
untruncated base law, so scores are exact and sampling is plain rejection
against the rectangle.

F3 keeps beta3 in (-2, 2), where its quadratic form is positive definite and
the Gaussian base law exists. The truncated density is also proper outside
that range, but fits there would need the uniform envelope sampler.
"""

import math
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

import numpy as np

from k2gof.config.logging_config import get_logger
from k2gof.config.settings import STUDY_LOWER, STUDY_UPPER
from k2gof.errors import InputError
from k2gof.models.base import POSITIVE, REAL, ModelSpec, ParamDomain
from k2gof.quadrature.grid import SupportRect

logger = get_logger(__name__)

BUILTIN_NAMES = ("Q", "P", "F1", "F2", "F3")

P_SIGMA = np.array([[20.0, 10.0], [10.0, 20.0]])
P_SIGMA_INV = np.linalg.inv(P_SIGMA)
P_SIGMA_CHOL = np.linalg.cholesky(P_SIGMA)
P_LOCATION = (0.0, 3.0)


def study_support() -> SupportRect:
    return SupportRect(STUDY_LOWER, STUDY_UPPER)


# Q ---------------------------------------------------------------------------


def _q_log_density(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    r2 = (x[:, 0] - theta[0]) ** 2 + (x[:, 1] - theta[1]) ** 2
    return -r2 / (2.0 * theta[2])


def _q_gradient(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    d1 = x[:, 0] - theta[0]
    d2 = x[:, 1] - theta[1]
    return np.column_stack([d1 / theta[2], d2 / theta[2], (d1**2 + d2**2) / (2.0 * theta[2] ** 2)])


def _q_sampler(theta: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
    return gen.normal(loc=theta[:2], scale=math.sqrt(theta[2]), size=(size, 2))


# P ---------------------------------------------------------------------------


def _p_quad(theta: np.ndarray, x: np.ndarray):
    diff = x - theta[:2]
    return diff, np.einsum("ij,jk,ik->i", diff, P_SIGMA_INV, diff)


def _p_log_density(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    _, quad = _p_quad(theta, x)
    return -1.5 * np.log1p(quad)


def _p_gradient(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    diff, quad = _p_quad(theta, x)
    return 3.0 * (diff @ P_SIGMA_INV) / (1.0 + quad)[:, None]


def _p_sampler(theta: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
    z = gen.standard_normal(size=(size, 2)) @ P_SIGMA_CHOL.T
    chi = np.sqrt(gen.chisquare(1.0, size=size))
    return theta[:2] + z / chi[:, None]


# F1 --------------------------------------------------------------------------


def _f1_log_density(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return (
        (beta[0] - 1.0) * np.log(x[:, 0])
        + (beta[1] - 1.0) * np.log(x[:, 1])
        - beta[2] * (x[:, 0] + x[:, 1])
    )


def _f1_gradient(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.log(x[:, 0]), np.log(x[:, 1]), -(x[:, 0] + x[:, 1])])


def _f1_sampler(beta: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
    scale = 1.0 / beta[2]
    return np.column_stack(
        [gen.gamma(beta[0], scale, size=size), gen.gamma(beta[1], scale, size=size)]
    )


# F2 --------------------------------------------------------------------------


def _f2_s(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return (x[:, 0] - beta[0]) ** 2 + (x[:, 1] - beta[1]) ** 2 + beta[2]


def _f2_log_density(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.log(beta[2]) - math.log(2.0 * math.pi) - 1.5 * np.log(_f2_s(beta, x))


def _f2_gradient(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = _f2_s(beta, x)
    return np.column_stack(
        [
            3.0 * (x[:, 0] - beta[0]) / s,
            3.0 * (x[:, 1] - beta[1]) / s,
            1.0 / beta[2] - 1.5 / s,
        ]
    )


def _f2_sampler(beta: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
    z = gen.standard_normal(size=(size, 2)) * math.sqrt(beta[2])
    chi = np.sqrt(gen.chisquare(1.0, size=size))
    return beta[:2] + z / chi[:, None]


# F3 --------------------------------------------------------------------------


def _f3_uv(beta: np.ndarray, x: np.ndarray):
    return x[:, 0] / beta[0] - 1.0, x[:, 1] / beta[1] - 1.0


def _f3_log_density(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    u, v = _f3_uv(beta, x)
    return -(u**2 + v**2 - beta[2] * u * v) / 200.0


def _f3_gradient(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    u, v = _f3_uv(beta, x)
    return np.column_stack(
        [
            (2.0 * u - beta[2] * v) * x[:, 0] / (200.0 * beta[0] ** 2),
            (2.0 * v - beta[2] * u) * x[:, 1] / (200.0 * beta[1] ** 2),
            u * v / 200.0,
        ]
    )


def _f3_sampler(beta: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
    # (u, v) is normal with precision (1/100) [[1, -b3/2], [-b3/2, 1]], PD for |b3| < 2
    precision = np.array([[1.0, -beta[2] / 2.0], [-beta[2] / 2.0, 1.0]]) / 100.0
    uv = gen.multivariate_normal(np.zeros(2), np.linalg.inv(precision), size=size, method="cholesky")
    return np.column_stack([beta[0] * (1.0 + uv[:, 0]), beta[1] * (1.0 + uv[:, 1])])


def register_builtin_models(support: Optional[SupportRect] = None) -> Dict[str, ModelSpec]:
    """
    Build the five builtin model specs

    Args:
        support: Truncation rectangle; defaults to [1,20]x[1,25]

    Returns:
        Dict[str, ModelSpec]: Specs keyed by name, in the order Q, P, F1, F2, F3

    Example:
        models = register_builtin_models()
        models["Q"].p   # 3
    """
    rect = support or study_support()
    if rect.dim != 2:
        raise InputError(f"Builtin models are bivariate, support has dimension {rect.dim}")
    specs = [
        ModelSpec(
            name="Q",
            support=rect,
            labels=("theta1", "theta2", "theta3"),
            domains=(REAL, REAL, POSITIVE),
            initial_guess=(-1.0, 6.0, 22.0),
            log_density_unnormalized=_q_log_density,
            gradient=_q_gradient,
            base_sampler=_q_sampler,
            description="exp(-[(x1-theta1)^2 + (x2-theta2)^2] / (2 theta3))",
        ),
        ModelSpec(
            name="P",
            support=rect,
            labels=("mu1", "mu2"),
            domains=(REAL, REAL),
            initial_guess=P_LOCATION,
            log_density_unnormalized=_p_log_density,
            gradient=_p_gradient,
            base_sampler=_p_sampler,
            description="[1 + (x-mu)' Sigma^-1 (x-mu)]^(-3/2), Sigma = [[20,10],[10,20]]",
        ),
        ModelSpec(
            name="F1",
            support=rect,
            labels=("beta1", "beta2", "beta3"),
            domains=(POSITIVE, POSITIVE, POSITIVE),
            initial_guess=(2.0, 2.0, 0.2),
            log_density_unnormalized=_f1_log_density,
            gradient=_f1_gradient,
            base_sampler=_f1_sampler,
            description="x1^(beta1-1) x2^(beta2-1) exp(-beta3 (x1 + x2))",
        ),
        ModelSpec(
            name="F2",
            support=rect,
            labels=("beta1", "beta2", "beta3"),
            domains=(REAL, REAL, POSITIVE),
            initial_guess=(0.0, 3.0, 20.0),
            log_density_unnormalized=_f2_log_density,
            gradient=_f2_gradient,
            base_sampler=_f2_sampler,
            description="beta3/(2 pi) [(x1-beta1)^2 + (x2-beta2)^2 + beta3]^(-3/2)",
        ),
        ModelSpec(
            name="F3",
            support=rect,
            labels=("beta1", "beta2", "beta3"),
            domains=(POSITIVE, POSITIVE, ParamDomain(-2.0, 2.0)),
            initial_guess=(8.0, 10.0, 0.5),
            log_density_unnormalized=_f3_log_density,
            gradient=_f3_gradient,
            base_sampler=_f3_sampler,
            description="exp(-[u^2 + v^2 - beta3 u v] / 200), u = x1/beta1 - 1, v = x2/beta2 - 1",
        ),
    ]
    return {spec.name: spec for spec in specs}


def build_registry(
    support: Optional[SupportRect] = None,
    model_files: Iterable[Union[str, Path]] = (),
) -> Dict[str, ModelSpec]:
    """
    Builtin models plus any user models loaded from JSON files

    Raises:
        InputError: If a user model reuses a registered name or its support
            differs from the run's support
    """
    from k2gof.models.expression import load_model_file

    rect = support or study_support()
    registry = register_builtin_models(rect)
    for path in model_files:
        spec = load_model_file(path)
        if spec.name in registry:
            raise InputError(f"Model file {path} redefines registered model {spec.name}")
        if spec.support != rect:
            raise InputError(f"Model {spec.name} support {spec.support} differs from run support {rect}")
        registry[spec.name] = spec
        logger.info("model_registered", model=spec.name, path=str(path), p=spec.p)
    return registry


def resolve_model(name: str, registry: Dict[str, ModelSpec]) -> ModelSpec:
    try:
        return registry[name]
    except KeyError:
        raise InputError(f"Unknown model {name!r}; registered: {', '.join(registry)}") from None
