"""
Soft-label training loop.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional

import numpy as np
import torch
from scipy.special import logsumexp

from src.core.types import LabeledDataset, RngSeed, SoftLabel
from src.models.classifier import Classifier
from src.utils.errors import TrainingError

logger = logging.getLogger(__name__)

Monitor = Callable[[Classifier], Dict[str, float]]


class OptimizerKind(str, Enum):
    ADAM = 'adam'
    SGD_MOMENTUM = 'sgd_momentum'


@dataclass(frozen=True)
class TrainConfig:
    """
    Training hyper-parameters.

    Attributes:
        epochs: Passes over the training set (>= 1)
        batch_size: Mini-batch size
        learning_rate: Step size (> 0)
        optimizer: 'adam' or 'sgd_momentum'
        momentum: Momentum for 'sgd_momentum'
        seed: Seed of the per-epoch shuffles
    """

    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: OptimizerKind = OptimizerKind.ADAM
    momentum: float = 0.9
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        object.__setattr__(self, 'optimizer', OptimizerKind(self.optimizer))
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epochs': self.epochs,
            'batch_size': self.batch_size,
            'learning_rate': self.learning_rate,
            'optimizer': self.optimizer.value,
            'momentum': self.momentum,
            'seed': self.seed.seed,
        }


def soft_cross_entropy(predicted_logits, label) -> float:
    """
    Cross entropy of logits against a soft label: -sum_i label_i * log softmax(logits)_i.

    Args:
        predicted_logits: Logit vector of length K
        label: SoftLabel or probability vector of length K

    Raises:
        ValueError: If the lengths differ
    """
    logits = np.asarray(predicted_logits, dtype=np.float64)
    probs = label.probs if isinstance(label, SoftLabel) else np.asarray(label, dtype=np.float64)
    if logits.shape != probs.shape:
        raise ValueError(f"logits shape {logits.shape} does not match label shape {probs.shape}")
    log_probs = logits - logsumexp(logits)
    # 0 * -inf contributes nothing
    return float(-np.sum(probs[probs > 0] * log_probs[probs > 0]))


def soft_cross_entropy_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Batch-mean soft cross entropy for torch tensors."""
    return -(targets * torch.log_softmax(logits, dim=1)).sum(dim=1).mean()


def _make_optimizer(model: Classifier, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer is OptimizerKind.SGD_MOMENTUM:
        return torch.optim.SGD(model.parameters(), lr=config.learning_rate, momentum=config.momentum)
    return torch.optim.Adam(model.parameters(), lr=config.learning_rate)


def train(model: Classifier, train_set: LabeledDataset, config: TrainConfig,
          monitor: Optional[Monitor] = None) -> Classifier:
    """
    Train a classifier on (possibly soft) labels, shuffling every epoch.

    Args:
        model: Classifier to train in place
        train_set: Union of benign and poisoned samples
        config: Training hyper-parameters
        monitor: Optional callable evaluated after each epoch; its metrics are
            stored alongside the epoch loss in `model.history`

    Returns:
        The trained model, in eval mode

    Raises:
        ValueError: If the dataset is empty or does not match the model
        TrainingError: If the loss becomes non-finite
    """
    if len(train_set) == 0:
        raise ValueError("cannot train on an empty dataset")
    if train_set.image_shape != model.input_shape or train_set.num_classes != model.num_classes:
        raise ValueError(
            f"dataset {train_set.image_shape}/K={train_set.num_classes} does not match "
            f"model {model.input_shape}/K={model.num_classes}"
        )

    start_time = time.time()
    images = model.to_input(train_set.images)
    targets = torch.tensor(train_set.labels, dtype=model.dtype)
    optimizer = _make_optimizer(model, config)
    n = len(train_set)

    for epoch in range(config.epochs):
        model.train()
        order = torch.from_numpy(config.seed.generator(0x5f1, epoch).permutation(n))
        total_loss = 0.0
        for begin in range(0, n, config.batch_size):
            idx = order[begin:begin + config.batch_size]
            optimizer.zero_grad()
            loss = soft_cross_entropy_loss(model(images[idx]), targets[idx])
            if not torch.isfinite(loss):
                model.eval()
                raise TrainingError(epoch)
            loss.backward()
            optimizer.step()
            total_loss += loss.item() * idx.numel()
        model.eval()

        record = {'epoch': epoch, 'loss': total_loss / n}
        if monitor is not None:
            record.update(monitor(model))
        model.history.append(record)
        logger.debug(f"Epoch {epoch + 1}/{config.epochs}: {record}")

    duration = time.time() - start_time
    logger.info(
        f"Trained on {n} samples for {config.epochs} epochs in {duration:.2f} seconds "
        f"(final loss {model.history[-1]['loss']:.4f})"
    )
    return model
