"""
Environment-driven settings for the laboratory.
"""

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

DEFAULT_OUT_DIR = 'runs'
DEFAULT_LOG_DIR = 'logs'


@dataclass(frozen=True)
class Settings:
    """Process-wide defaults that are not part of an experiment config."""

    out_dir: Path
    log_dir: Path
    log_level: str
    jobs: int


def load_settings(env_path: str = '.env') -> Settings:
    """
    Load settings from environment variables, reading a .env file first.

    Args:
        env_path: Path to the .env file. A missing file is not an error.

    Returns:
        Settings instance

    Raises:
        ValueError: If LSP_JOBS is not a positive integer
    """
    load_dotenv(env_path)

    jobs_raw = os.getenv('LSP_JOBS', '1')
    try:
        jobs = int(jobs_raw)
    except ValueError:
        raise ValueError(f"LSP_JOBS must be an integer, got {jobs_raw!r}") from None
    if jobs < 1:
        raise ValueError(f"LSP_JOBS must be >= 1, got {jobs}")

    return Settings(
        out_dir=Path(os.getenv('LSP_OUT_DIR', DEFAULT_OUT_DIR)),
        log_dir=Path(os.getenv('LSP_LOG_DIR', DEFAULT_LOG_DIR)),
        log_level=os.getenv('LSP_LOG_LEVEL', 'INFO').upper(),
        jobs=jobs,
    )
