"""
User models from JSON files

A model file declares its support, parameters and density as an
arithmetic expression:

    {
      "name": "Exp2",
      "d": 2,
      "support": {"lower": [1, 1], "upper": [20, 25]},
      "params": [
        {"name": "rate1", "domain": [0, null], "initial": 0.2},
        {"name": "rate2", "domain": [0, null], "initial": 0.2}
      ],
      "density": "exp(-b1*x1 - b2*x2)"
    }

``density`` is the unnormalized density; ``log_density`` may be given
instead. Expressions use + - * / ^, unary minus, numbers, the constant
``pi``, the functions exp, log and pow(a, b), data variables x1..xd and
parameters b1..bp. Models loaded this way score by finite differences and
sample by uniform-proposal rejection.
"""

import ast
import math
from pathlib import Path
from typing import Any, Callable, Dict, Union

import numpy as np
import orjson

from k2gof.errors import InputError
from k2gof.models.base import ModelSpec, ParamDomain
from k2gof.quadrature.grid import SupportRect

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

_BINARY = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_FUNCTIONS = {"exp": (np.exp, 1), "log": (np.log, 1), "pow": (np.power, 2)}


def _compile(node: ast.AST, d: int, p: int) -> Evaluator:
    if isinstance(node, ast.Expression):
        return _compile(node.body, d, p)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda theta, x: np.full(x.shape[0], value)
    if isinstance(node, ast.Name):
        return _variable(node.id, d, p)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _compile(node.operand, d, p)
        if isinstance(node.op, ast.USub):
            return lambda theta, x: -operand(theta, x)
        return operand
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op = _BINARY[type(node.op)]
        left = _compile(node.left, d, p)
        right = _compile(node.right, d, p)
        return lambda theta, x: op(left(theta, x), right(theta, x))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS:
        fn, arity = _FUNCTIONS[node.func.id]
        if len(node.args) != arity or node.keywords:
            raise InputError(f"{node.func.id} takes {arity} argument(s)")
        args = [_compile(a, d, p) for a in node.args]
        return lambda theta, x: fn(*(a(theta, x) for a in args))
    raise InputError(f"Unsupported expression element: {ast.dump(node)}")


def _variable(name: str, d: int, p: int) -> Evaluator:
    if name == "pi":
        return lambda theta, x: np.full(x.shape[0], math.pi)
    kind, index = name[:1], name[1:]
    if kind in ("x", "b") and index.isdigit():
        k = int(index) - 1
        limit = d if kind == "x" else p
        if not 0 <= k < limit:
            raise InputError(f"Variable {name} out of range (model has {limit} {kind}-variables)")
        if kind == "x":
            return lambda theta, x: x[:, k]
        return lambda theta, x: np.full(x.shape[0], theta[k])
    raise InputError(f"Unknown variable {name!r}; use x1..x{d}, b1..b{p} or pi")


def parse_expression(text: str, d: int, p: int) -> Evaluator:
    """
    Compile an arithmetic expression into a vectorized evaluator

    Args:
        text: Expression source, ``^`` meaning power
        d: Number of data coordinates
        p: Number of parameters

    Returns:
        Callable: f(theta[p], x[m, d]) -> values[m]

    Raises:
        InputError: On syntax errors or unsupported elements
    """
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as e:
        raise InputError(f"Cannot parse expression {text!r}: {e.msg}") from e
    return _compile(tree, d, p)


def _domain(entry: Any) -> ParamDomain:
    if entry is None:
        return ParamDomain()
    if not isinstance(entry, (list, tuple)) or len(entry) != 2:
        raise InputError(f"Parameter domain must be [low, high], got {entry!r}")
    low = -math.inf if entry[0] is None else float(entry[0])
    high = math.inf if entry[1] is None else float(entry[1])
    return ParamDomain(low, high)


def model_from_dict(data: Dict[str, Any]) -> ModelSpec:
    """Build a finite-difference ModelSpec from a parsed model file"""
    try:
        name = str(data["name"])
        d = int(data["d"])
        support = SupportRect(tuple(data["support"]["lower"]), tuple(data["support"]["upper"]))
        params = list(data["params"])
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"Model file is missing or has an invalid field: {e}") from e
    if support.dim != d:
        raise InputError(f"Model {name}: d={d} but support has dimension {support.dim}")
    if not params:
        raise InputError(f"Model {name} declares no parameters")

    labels = tuple(str(entry.get("name", f"b{i + 1}")) for i, entry in enumerate(params))
    domains = tuple(_domain(entry.get("domain")) for entry in params)
    initial = []
    for entry, domain in zip(params, domains):
        if "initial" in entry:
            initial.append(float(entry["initial"]))
        elif math.isfinite(domain.low) and math.isfinite(domain.high):
            initial.append(0.5 * (domain.low + domain.high))
        elif math.isfinite(domain.low):
            initial.append(domain.low + 1.0)
        elif math.isfinite(domain.high):
            initial.append(domain.high - 1.0)
        else:
            initial.append(0.0)

    if "log_density" in data:
        source = str(data["log_density"])
        log_fn = parse_expression(source, d, len(params))
    elif "density" in data:
        source = str(data["density"])
        density_fn = parse_expression(source, d, len(params))

        def log_fn(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(density_fn(theta, x))

    else:
        raise InputError(f"Model {name} needs a 'density' or 'log_density' expression")

    def log_density(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return np.asarray(log_fn(theta, x), dtype=float)

    return ModelSpec(
        name=name,
        support=support,
        labels=labels,
        domains=domains,
        initial_guess=tuple(initial),
        log_density_unnormalized=log_density,
        description=source,
    )


def load_model_file(path: Union[str, Path]) -> ModelSpec:
    """
    Load a user model from a JSON file

    Raises:
        InputError: If the file is missing, malformed or declares an invalid model
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Model file not found: {path}")
    try:
        data = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise InputError(f"Model file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise InputError(f"Model file {path} must hold a JSON object")
    return model_from_dict(data)
