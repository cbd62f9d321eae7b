"""
Shared fixtures: a tiny synthetic dataset and small classifiers.
"""

import numpy as np
import pytest
import torch

from src.core.types import LabeledDataset, RngSeed, one_hot_matrix
from src.extraction import generate_synthetic_dataset
from src.models import ArchitectureSpec, Classifier, LayerSpec


@pytest.fixture
def seed() -> RngSeed:
    return RngSeed(1234)


@pytest.fixture
def tiny_dataset(seed) -> LabeledDataset:
    """4 classes, 20 samples each, 8x8 grayscale."""
    return generate_synthetic_dataset(4, 20, 8, 8, seed)


@pytest.fixture
def small_architecture() -> ArchitectureSpec:
    return ArchitectureSpec((8, 8, 1), 4, (LayerSpec('conv', 4), LayerSpec('dense', 8)))


@pytest.fixture
def small_model(small_architecture, seed) -> Classifier:
    return Classifier(small_architecture, seed)


@pytest.fixture
def random_batch():
    def make(count: int, height: int = 8, width: int = 8, channels: int = 1,
             num_classes: int = 4, seed: int = 0) -> LabeledDataset:
        rng = np.random.default_rng(seed)
        images = rng.random((count, height, width, channels)).astype(np.float32)
        labels = one_hot_matrix(np.arange(count) % num_classes, num_classes)
        return LabeledDataset(images, labels, num_classes)
    return make


def constant_model(num_classes: int, target: int, shape=(8, 8, 1)) -> Classifier:
    """Classifier whose logits ignore the input and favour `target`."""
    model = Classifier(ArchitectureSpec(shape, num_classes, (LayerSpec('dense', 4),)), RngSeed(0))
    with torch.no_grad():
        for param in model.parameters():
            param.zero_()
        model.blocks[-1][1].bias[target] = 5.0
    return model
