"""
Logger Module

This module provides the application logger. Library modules log through get_logger();
only the command-line entry point attaches file sinks.
"""

import os
import sys
from datetime import datetime
from typing import Optional

from loguru import logger as loguru_logger


LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")

# Console format; {extra[command]} is the running subcommand ("-" outside the CLI)
DEFAULT_LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<magenta>{extra[command]}</magenta> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
    "<level>{message}</level>"
)

FILE_LOG_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {extra[command]} | {name}:{function}:{line} - {message}"
)

_logger = None


def setup_logger(log_directory: str = "logs", log_level: str = "INFO", command: Optional[str] = None):
    """
    Set up console and file logging for one CLI invocation.

    Args:
        log_directory: Directory for the timestamped log and latest.log
        log_level: Minimum level, one of LOG_LEVELS
        command: Subcommand name stamped on every record

    Returns:
        loguru.logger: Configured logger instance
    """
    global _logger

    level = log_level.upper()
    if level not in LOG_LEVELS:
        raise ValueError(f"log level must be one of {LOG_LEVELS}, got {log_level!r}")

    os.makedirs(log_directory, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = os.path.join(log_directory, f"aee_ts_{timestamp}.log")

    loguru_logger.remove()
    loguru_logger.configure(extra={"command": command or "-"})
    loguru_logger.add(sys.stderr, format=DEFAULT_LOG_FORMAT, level=level, colorize=True)
    loguru_logger.add(
        log_file,
        format=FILE_LOG_FORMAT,
        level=level,
        rotation="10 MB",
        retention="1 month",
        compression="zip"
    )
    # latest.log holds the current invocation only
    loguru_logger.add(
        os.path.join(log_directory, "latest.log"),
        format=FILE_LOG_FORMAT,
        level=level,
        mode="w",
    )

    _logger = loguru_logger
    _logger.info(f"Logger initialized. Log file: {log_file}")
    return _logger


def get_logger():
    """
    Get the shared logger instance.

    Until setup_logger runs, records go to loguru's default stderr sink and no files are
    created.

    Returns:
        loguru.logger: Logger instance
    """
    global _logger

    if _logger is None:
        _logger = loguru_logger

    return _logger
