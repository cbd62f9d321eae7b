"""
Core value types and dataset splitting shared by every other package.
"""

from .types import (
    ImageTensor,
    SoftLabel,
    LabeledDataset,
    RngSeed,
    SplitTag,
    one_hot_matrix,
)
from .splits import split_for_poisoning, train_test_split

__all__ = [
    'ImageTensor',
    'SoftLabel',
    'LabeledDataset',
    'RngSeed',
    'SplitTag',
    'one_hot_matrix',
    'split_for_poisoning',
    'train_test_split',
]
