"""
Data loading module for storing and reading run artifacts.

This module provides functionality for writing datasets, model checkpoints,
triggers and report tables under a run directory, and for reading them back.
"""

from .artifact_reader import ArtifactReader
from .artifact_writer import ArtifactWriter

__all__ = ['ArtifactWriter', 'ArtifactReader']
