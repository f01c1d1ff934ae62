"""
Logging Setup

Root logger configuration shared by the CLI and the test suite.

- Human-readable output through rich's RichHandler
- Optional structured key-value rendering through structlog's ProcessorFormatter,
  so library `logging` calls and structlog loggers share one stream
"""

import logging
from typing import Optional

import structlog
from rich.console import Console
from rich.logging import RichHandler

NOISY_LOGGERS = ("matplotlib", "numexpr", "urllib3")


def _structured_formatter() -> structlog.stdlib.ProcessorFormatter:
    shared = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
    ]
    structlog.configure(
        processors=[*shared, structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    return structlog.stdlib.ProcessorFormatter(
        processor=structlog.processors.KeyValueRenderer(key_order=["timestamp", "level", "logger", "event"]),
        foreign_pre_chain=shared,
    )


def setup_logging(level: str = "INFO", structured: bool = False, console: Optional[Console] = None) -> logging.Logger:
    """
    Set up logging for the package.

    Args:
        level: level name (DEBUG..CRITICAL)
        structured: render key-value records through structlog
        console: rich console to write to (stderr by default)

    Returns:
        The package logger "TDPT"
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    if structured:
        handler: logging.Handler = logging.StreamHandler()
        handler.setFormatter(_structured_formatter())
    else:
        handler = RichHandler(
            console=console or Console(stderr=True),
            show_path=False,
            rich_tracebacks=True,
            markup=False,
        )
        handler.setFormatter(logging.Formatter("%(name)s - %(message)s"))

    logging.basicConfig(level=log_level, handlers=[handler], force=True)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    logger = logging.getLogger("TDPT")
    logger.debug(f"Log level set to: {logging.getLevelName(log_level)}")
    return logger
