"""
Configuration for k2gof runs

Resolution order for every RunConfig field:
    CLI flag > config file (JSON or YAML) > builtin default

Environment variables (read through ``get_variable``, which loads a local
``.env`` file on first use) only supply logging and thread defaults:

    K2GOF_LOG_LEVEL    log level name (default INFO)
    K2GOF_LOG_FORMAT   console | json (default console)
    K2GOF_THREADS      default worker count (default 1)

Usage:
    from k2gof.config.settings import load_run_config

    config = load_run_config("run.yaml", overrides={"seed": 7})
"""

import hashlib
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import orjson
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from k2gof.errors import InputError

SCHEMA_VERSION = 1

# The search region and grid used throughout the reference studies
STUDY_LOWER = (1.0, 1.0)
STUDY_UPPER = (20.0, 25.0)
STUDY_GRID = (50, 40)

_DOTENV_LOADED = False


def get_variable(name: str, default: Optional[str] = None) -> Optional[str]:
    """
    Read a setting from the environment, loading ``.env`` once

    Args:
        name: Variable name
        default: Value returned when the variable is unset

    Returns:
        Optional[str]: The variable's value or ``default``
    """
    global _DOTENV_LOADED
    if not _DOTENV_LOADED:
        load_dotenv(override=False)
        _DOTENV_LOADED = True
    value = os.getenv(name)
    return default if value is None or value == "" else value


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SupportConfig(_Strict):
    """Search region shared by every model in a run"""

    lower: List[float] = Field(default_factory=lambda: list(STUDY_LOWER))
    upper: List[float] = Field(default_factory=lambda: list(STUDY_UPPER))

    @model_validator(mode="after")
    def _ordered(self) -> "SupportConfig":
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("support lower/upper must be nonempty and of equal length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("support requires lower[k] < upper[k] for every k")
        return self


class GridConfig(_Strict):
    """Cells per axis of the midpoint quadrature grid"""

    n1: int = STUDY_GRID[0]
    n2: int = STUDY_GRID[1]

    @field_validator("n1", "n2")
    @classmethod
    def _at_least_two(cls, value: int) -> int:
        if value < 2:
            raise ValueError("grid needs at least 2 cells per axis")
        return value


class FitConfig(_Strict):
    """Maximum-likelihood optimizer budget"""

    restarts: int = Field(default=4, ge=0)
    max_evaluations: int = Field(default=2000, ge=50)
    xatol: float = Field(default=1e-6, gt=0)


class RunConfig(_Strict):
    """
    Effective configuration of one CLI command

    Every field can be set in a config file and overridden by a CLI flag.
    """

    reference: str = "Q"
    candidates: List[str] = Field(default_factory=lambda: ["F1", "F2", "F3"])
    truth: str = "P"
    model_files: List[str] = Field(default_factory=list)

    support: SupportConfig = Field(default_factory=SupportConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    fit: FitConfig = Field(default_factory=FitConfig)

    n: int = 100
    replicates: int = 2000
    power_replicates: int = 2000
    alpha: List[float] = Field(default_factory=lambda: [0.001, 0.05, 0.1])
    seed: int = 20190917
    threads: int = Field(default_factory=lambda: int(get_variable("K2GOF_THREADS", "1")))

    method: Literal["projected", "refit", "mc"] = "projected"
    reference_params: Optional[List[float]] = None
    true_params: Optional[List[float]] = None
    fit_file: Optional[str] = None
    null_dir: Optional[str] = None
    out: str = "out"

    recalibrate: bool = False
    include_direct: bool = False
    histogram_bins: int = Field(default=60, ge=2)
    audit_tolerance: float = Field(default=1e-3, gt=0)
    progress: bool = True

    log_level: Optional[str] = None
    log_format: Optional[Literal["console", "json"]] = None

    @field_validator("n")
    @classmethod
    def _min_sample(cls, value: int) -> int:
        if value < 10:
            raise ValueError("n must be at least 10")
        return value

    @field_validator("replicates", "power_replicates")
    @classmethod
    def _min_replicates(cls, value: int) -> int:
        if value < 100:
            raise ValueError("replicate counts must be at least 100")
        return value

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, value: List[float]) -> List[float]:
        if not value or any(not 0.0 < a < 1.0 for a in value):
            raise ValueError("every alpha must lie in (0, 1)")
        return sorted(set(value))

    @field_validator("seed")
    @classmethod
    def _seed_u64(cls, value: int) -> int:
        if not 0 <= value < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        return value

    @field_validator("threads")
    @classmethod
    def _threads_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("threads must be at least 1")
        return value

    def hashed_fields(self) -> Dict[str, Any]:
        """Fields that determine results (threads, logging and progress excluded)"""
        return self.model_dump(exclude={"threads", "log_level", "log_format", "progress", "out"})

    def config_hash(self) -> str:
        """First 16 hex digits of the SHA-256 of the canonical result-determining config"""
        payload = orjson.dumps(self.hashed_fields(), option=orjson.OPT_SORT_KEYS)
        return hashlib.sha256(payload).hexdigest()[:16]


def _read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = orjson.loads(text)
    except (yaml.YAMLError, orjson.JSONDecodeError) as e:
        raise InputError(f"Config file {path} is not valid: {e}") from e
    if not isinstance(data, dict):
        raise InputError(f"Config file {path} must hold a mapping at top level")
    return data


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Build the effective RunConfig

    Args:
        path: Optional JSON/YAML config file
        overrides: CLI flag values; ``None`` entries are ignored

    Returns:
        RunConfig: Validated, frozen configuration

    Raises:
        InputError: If the file is unreadable or any field is invalid
    """
    data = _read_config_file(path) if path else {}
    data = _merge(data, overrides or {})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise InputError(f"Invalid configuration: {e}") from e
