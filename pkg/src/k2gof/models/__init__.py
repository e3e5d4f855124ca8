"""Parametric models truncated to a rectangular support"""

from k2gof.models.base import (
    ModelInstance,
    ModelSpec,
    ParamDomain,
    ParamVector,
    as_generator,
    instantiate,
    log_normalizer,
    node_scores,
    sample,
    score,
)
from k2gof.models.builtin import (
    BUILTIN_NAMES,
    build_registry,
    study_support,
    register_builtin_models,
    resolve_model,
)
from k2gof.models.expression import load_model_file, model_from_dict, parse_expression
from k2gof.quadrature.grid import SupportRect

__all__ = [
    "BUILTIN_NAMES",
    "ModelInstance",
    "ModelSpec",
    "ParamDomain",
    "ParamVector",
    "SupportRect",
    "as_generator",
    "build_registry",
    "instantiate",
    "load_model_file",
    "log_normalizer",
    "model_from_dict",
    "node_scores",
    "study_support",
    "parse_expression",
    "register_builtin_models",
    "resolve_model",
    "sample",
    "score",
]
