"""
Logging configuration for the sea-fog forecasting pipeline.

Provides consistent logging setup across all pipeline components. Console output goes to
stderr by default so that CLI commands can keep stdout for their own results; every stage
obtains its logger through get_logger(__name__) and reports progress, warnings about dropped
or missing data, and a summary block at the end of its run.
"""

import logging
import sys
from pathlib import Path
from typing import IO, Optional


def setup_logging(
    level: str = "INFO",
    log_file: Optional[Path] = None,
    include_timestamp: bool = True,
    stream: Optional[IO[str]] = None
) -> None:
    """
    Set up logging configuration for the pipeline.

    Replaces any handlers already attached to the root logger, so calling it again (as each
    CLI command does after resolving its configuration) changes the level and destinations
    instead of duplicating output.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file path for logging output; parent directories are created
        include_timestamp: Whether to include timestamps in log messages
        stream: Console stream, stderr when not given
    """
    # Create formatter
    if include_timestamp:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
    else:
        formatter = logging.Formatter(
            '%(name)s - %(levelname)s - %(message)s'
        )

    # Get root logger
    logger = logging.getLogger()
    logger.setLevel(getattr(logging, level.upper()))

    # Clear any existing handlers
    logger.handlers.clear()

    # Console handler
    console_handler = logging.StreamHandler(stream or sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # File handler (if specified)
    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a specific component.

    Args:
        name: Logger name (typically __name__ of the module)

    Returns:
        Configured logger instance
    """
    return logging.getLogger(name)
