"""
Logging configuration for the laboratory pipeline.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

from src.utils.settings import load_settings


def setup_logger(name: str, log_dir: Optional[Path] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Set up a logger with file and console handlers.

    Args:
        name: Name of the logger
        log_dir: Directory for log files. Defaults to the LSP_LOG_DIR setting.
        level: Log level name. Defaults to the LSP_LOG_LEVEL setting.

    Returns:
        Configured logger instance
    """
    settings = load_settings()
    log_dir = Path(log_dir) if log_dir is not None else settings.log_dir
    level_value = getattr(logging, (level or settings.log_level).upper(), logging.INFO)

    logger = logging.getLogger(name)
    logger.setLevel(level_value)

    # Already configured by an earlier call
    if logger.handlers:
        return logger

    log_dir.mkdir(parents=True, exist_ok=True)

    file_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    console_formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s'
    )

    # File handler - with timestamp in filename
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    file_handler = logging.FileHandler(log_dir / f'lsp_{timestamp}.log')
    file_handler.setLevel(level_value)
    file_handler.setFormatter(file_formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level_value)
    console_handler.setFormatter(console_formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    return logger
