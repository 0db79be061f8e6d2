"""
Logger configuration for snaplin.

structlog is bridged into the standard logging module so library code logs
through ``get_logger(__name__)`` while entry points decide where output goes.
Training runs additionally write a JSON-lines run log through a dedicated,
non-propagating logger.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import structlog
from structlog.stdlib import BoundLogger, ProcessorFormatter
from structlog.typing import Processor

_RUN_LOG_NAME = "snaplin.runlog"

_PRE_CHAIN: tuple[Processor, ...] = (
    structlog.stdlib.add_log_level,
    structlog.stdlib.add_logger_name,
    structlog.stdlib.PositionalArgumentsFormatter(),
    structlog.processors.StackInfoRenderer(),
    structlog.processors.format_exc_info,
    structlog.processors.TimeStamper(fmt="iso"),
)


def _configure_structlog(min_level: int) -> None:
    structlog.configure(
        processors=_PRE_CHAIN + (ProcessorFormatter.wrap_for_formatter,),
        wrapper_class=structlog.make_filtering_bound_logger(min_level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=False,
    )


def _console_formatter() -> ProcessorFormatter:
    return ProcessorFormatter(
        processor=structlog.dev.ConsoleRenderer(colors=False),
        foreign_pre_chain=_PRE_CHAIN,
    )


def configure_logging(
    level: int = logging.INFO,
    enable_console: bool = True,
    console_level: int | None = None,
) -> None:
    """
    Configure global logging.

    Parameters
    ----------
    level:
        Base logging level for the root logger.
    enable_console:
        When False, suppress log emission to stderr.
    console_level:
        Severity threshold for console messages. Defaults to ``level``.
    """
    _configure_structlog(level)
    logging.captureWarnings(True)

    handler: logging.Handler
    if enable_console:
        handler = logging.StreamHandler()
        handler.setLevel(console_level if console_level is not None else level)
        handler.setFormatter(_console_formatter())
    else:
        handler = logging.NullHandler()

    logging.basicConfig(level=level, handlers=[handler], force=True)


def get_logger(name: Optional[str] = None) -> BoundLogger:
    """Retrieve a structlog logger with the provided name."""
    return structlog.get_logger(name)


def redirect_logging_to_file(path: Path, level: int = logging.INFO) -> None:
    """Send standard logging output at ``level`` and above to ``path`` instead of the console."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(_console_formatter())
    root.addHandler(handler)
    root.setLevel(level)
    _configure_structlog(level)


def open_run_log(path: Path) -> BoundLogger:
    """
    Return a logger that writes one JSON object per event to ``path``.

    The run log is isolated from the console: records do not propagate to the
    root logger, and reopening the same path truncates the previous run.
    """
    std_logger = logging.getLogger(f"{_RUN_LOG_NAME}.{path.resolve()}")
    for handler in list(std_logger.handlers):
        std_logger.removeHandler(handler)
        handler.close()
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    std_logger.addHandler(handler)
    std_logger.setLevel(logging.DEBUG)
    std_logger.propagate = False
    return structlog.wrap_logger(
        std_logger,
        processors=[
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.JSONRenderer(sort_keys=True),
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
    )


def close_run_log(path: Path) -> None:
    """Flush and detach the handlers of a run log opened with ``open_run_log``."""
    std_logger = logging.getLogger(f"{_RUN_LOG_NAME}.{path.resolve()}")
    for handler in list(std_logger.handlers):
        handler.flush()
        std_logger.removeHandler(handler)
        handler.close()
