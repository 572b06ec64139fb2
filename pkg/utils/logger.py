"""
NumHTML - Logger Utility

Provides logging utilities for the command-line runs.
"""

import logging
import sys
from pathlib import Path
from typing import Optional


def setup_logger(
    name: str = "numhtml",
    level: Optional[str] = None,
    log_file: Optional[Path] = None,
) -> logging.Logger:
    """
    Setup a logger with consistent formatting.

    Console output goes to stderr so that report blocks printed on stdout
    stay machine-readable.

    Args:
        name: Logger name ("" configures the root logger)
        level: Log level (DEBUG, INFO, WARNING, ERROR)
        log_file: Optional file to write logs to

    Returns:
        Configured logger instance
    """
    from config.settings import LoggingConfig

    logger = logging.getLogger(name)

    if level is None:
        level = LoggingConfig().level
    log_level = getattr(logging, level.upper(), logging.INFO)
    logger.setLevel(log_level)

    formatter = logging.Formatter(LoggingConfig().format, datefmt="%Y-%m-%d %H:%M:%S")

    # Avoid adding the console handler multiple times
    if not any(getattr(h, "_numhtml_console", False) for h in logger.handlers):
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        console_handler._numhtml_console = True
        logger.addHandler(console_handler)

    for handler in logger.handlers:
        handler.setLevel(log_level)

    if log_file:
        log_file = Path(log_file)
        already = any(
            isinstance(h, logging.FileHandler) and Path(h.baseFilename) == log_file.resolve()
            for h in logger.handlers
        )
        if not already:
            log_file.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_file, encoding="utf-8")
            file_handler.setLevel(log_level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    return logger
