"""Centralized logger configuration for chainvqa.

Every module logs through ``get_logger(__name__)`` so training runs, dataset
builders and the inference service share one timestamped line format.
"""

import logging
import os
import sys
from typing import Optional

# Track if root logger has been configured
_root_logger_configured = False

LOG_FORMAT = "%(asctime)s.%(msecs)03d | %(levelname)-8s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class _ChainFormatter(logging.Formatter):
    """Formatter that cleans up confusing logger names.

    Renames 'uvicorn.error' to 'uvicorn' since the '.error' doesn't mean
    error-level logs - it's just Uvicorn's naming for the stderr stream.
    """

    def format(self, record: logging.LogRecord) -> str:
        if record.name == "uvicorn.error":
            record.name = "uvicorn"
        return super().format(record)


def build_handler(level: str) -> logging.Handler:
    """Return a stdout handler using the package line format."""

    handler = logging.StreamHandler(sys.stdout)
    handler.setLevel(level)
    handler.setFormatter(_ChainFormatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def configure_uvicorn_logging(level: Optional[str] = None) -> None:
    """Point the Uvicorn loggers at the package handler.

    Must run after Uvicorn has configured its own loggers (the inference
    service calls it from a startup hook), otherwise Uvicorn overwrites it.
    """
    level = (level or os.environ.get("CHAINVQA_LOG_LEVEL", "INFO")).upper()
    handler = build_handler(level)
    for logger_name in ("uvicorn", "uvicorn.error", "uvicorn.access"):
        uvicorn_logger = logging.getLogger(logger_name)
        uvicorn_logger.handlers.clear()
        uvicorn_logger.addHandler(handler)
        uvicorn_logger.setLevel(level)
        uvicorn_logger.propagate = False


def configure_root_logger(level: Optional[str] = None) -> None:
    """Configure the root logger with standard formatting.

    Subsequent calls are idempotent.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
               If None, reads CHAINVQA_LOG_LEVEL or defaults to INFO.
    """
    global _root_logger_configured

    if _root_logger_configured:
        return

    if level is None:
        level = os.environ.get("CHAINVQA_LOG_LEVEL", "INFO")
    level = level.upper()

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers.clear()
    root_logger.addHandler(build_handler(level))

    configure_uvicorn_logging(level)

    _root_logger_configured = True


def get_logger(name: str, level: Optional[str] = None) -> logging.Logger:
    """Return a logger with the package formatting.

    The root logger is configured automatically on first call.

    Example:
        >>> logger = get_logger(__name__)
        >>> logger.info("epoch %d done", 3)
        2026-01-15 10:30:45.123 | INFO     | chainvqa.training | epoch 3 done
    """
    if not _root_logger_configured:
        configure_root_logger(level)

    logger = logging.getLogger(name)

    if level is not None:
        logger.setLevel(level.upper())

    return logger
