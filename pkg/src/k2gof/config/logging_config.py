"""
Logging setup for k2gof

structlog is configured once per process by ``setup_logging``; modules get
their logger with ``get_logger(__name__)`` and log key/value events.

Usage:
    from k2gof.config.logging_config import get_logger

    logger = get_logger(__name__)
    logger.info("null_simulated", model="Q", replicates=2000)
"""

import logging
import sys
from typing import Optional

import structlog


def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """
    Configure structlog and the stdlib root logger

    Args:
        level: Log level name; defaults to K2GOF_LOG_LEVEL or INFO
        fmt: "console" or "json"; defaults to K2GOF_LOG_FORMAT or console
    """
    from k2gof.config.settings import get_variable

    level_name = (level or get_variable("K2GOF_LOG_LEVEL", "INFO")).upper()
    fmt = (fmt or get_variable("K2GOF_LOG_FORMAT", "console")).lower()
    numeric_level = getattr(logging, level_name, logging.INFO)

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=numeric_level,
        force=True,
    )

    renderer = (
        structlog.processors.JSONRenderer()
        if fmt == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=False,
    )


def get_logger(name: str):
    """Return a structlog logger bound to ``name``"""
    return structlog.get_logger(name)
