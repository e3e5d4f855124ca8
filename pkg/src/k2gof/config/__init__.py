"""Configuration and logging setup"""

from k2gof.config.logging_config import get_logger, setup_logging
from k2gof.config.settings import (
    SCHEMA_VERSION,
    FitConfig,
    GridConfig,
    RunConfig,
    SupportConfig,
    get_variable,
    load_run_config,
)

__all__ = [
    "SCHEMA_VERSION",
    "FitConfig",
    "GridConfig",
    "RunConfig",
    "SupportConfig",
    "get_logger",
    "get_variable",
    "load_run_config",
    "setup_logging",
]
