"""
Stratified dataset splitting.
"""

import logging
import math
from typing import Tuple

import numpy as np

from src.core.types import LabeledDataset, RngSeed, SplitTag

logger = logging.getLogger(__name__)


def _stratified_pick(hard_labels: np.ndarray, total: int, num_classes: int,
                     rng: np.random.Generator) -> np.ndarray:
    """
    Pick `total` indices so each class contributes its proportional share,
    within one sample. Returns a sorted index array.
    """
    n = hard_labels.size
    counts = np.bincount(hard_labels, minlength=num_classes)
    exact = counts * (total / n) if n else np.zeros(num_classes)
    quotas = np.floor(exact).astype(np.int64)

    # Largest remainders get the leftover samples; ties broken at random
    leftover = total - int(quotas.sum())
    if leftover > 0:
        remainders = exact - quotas
        remainders[quotas >= counts] = -1.0
        order = np.lexsort((rng.random(num_classes), -remainders))
        quotas[order[:leftover]] += 1

    picked = []
    for cls in range(num_classes):
        members = np.flatnonzero(hard_labels == cls)
        if quotas[cls]:
            picked.append(rng.choice(members, size=int(quotas[cls]), replace=False))
    if not picked:
        return np.zeros(0, dtype=np.int64)
    return np.sort(np.concatenate(picked))


def _complement(n: int, picked: np.ndarray) -> np.ndarray:
    keep = np.ones(n, dtype=bool)
    keep[picked] = False
    return np.flatnonzero(keep)


def split_for_poisoning(dataset: LabeledDataset, poison_fraction: float,
                        seed: RngSeed) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Partition a dataset into a benign training part and a poison source part.

    Args:
        dataset: Dataset to split
        poison_fraction: Fraction r_p of samples routed to the poison source, 0 <= r_p < 1
        seed: Seed of the split

    Returns:
        (benign_train, poison_source) with |poison_source| = floor(|X| * r_p),
        stratified by class

    Raises:
        ValueError: If the fraction is out of range or the dataset is empty
    """
    if not 0.0 <= poison_fraction < 1.0:
        raise ValueError(f"poison_fraction must lie in [0, 1), got {poison_fraction}")
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")

    n = len(dataset)
    n_poison = math.floor(round(n * poison_fraction, 9))
    rng = seed.generator(0x5011)
    poison_idx = _stratified_pick(dataset.hard_labels, n_poison, dataset.num_classes, rng)
    benign_idx = _complement(n, poison_idx)

    logger.info(f"Split {n} samples into {benign_idx.size} benign and {poison_idx.size} poison-source samples")
    return (
        dataset.subset(benign_idx, SplitTag.BENIGN_TRAIN),
        dataset.subset(poison_idx, SplitTag.POISON_SOURCE),
    )


def train_test_split(dataset: LabeledDataset, test_fraction: float,
                     seed: RngSeed) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Stratified train/test split.

    Returns:
        (train, test) with |test| = floor(|X| * test_fraction)
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")

    n = len(dataset)
    rng = seed.generator(0x7e57)
    test_idx = _stratified_pick(dataset.hard_labels, math.floor(round(n * test_fraction, 9)),
                                dataset.num_classes, rng)
    train_idx = _complement(n, test_idx)
    return (
        dataset.subset(train_idx, SplitTag.BENIGN_TRAIN),
        dataset.subset(test_idx, SplitTag.TEST),
    )
