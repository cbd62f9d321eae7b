"""
Data ingestion module for image datasets.

This module provides functionality for reading IDX (Fashion-MNIST layout) files
and for drawing the procedural desk-scale dataset.
"""

from .idx_loader import load_idx_dataset, dataset_summary
from .synthetic import generate_synthetic_dataset

__all__ = [
    'load_idx_dataset',
    'dataset_summary',
    'generate_synthetic_dataset',
]
