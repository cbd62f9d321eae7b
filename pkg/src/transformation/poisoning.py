"""
Dataset poisoning: stamp the trigger on poison-source samples and relabel
them with the constrained smoothed label.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from src.core.types import LabeledDataset, RngSeed, SplitTag
from src.transformation.label_smoothing import smooth_label
from src.transformation.triggers import TriggerSpec, apply_trigger
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoisonConfig:
    """
    Parameters of one poisoning run.

    Attributes:
        target_class: Target class y_t
        attack_rate: Target-class logit ar; math.inf recovers one-hot poisoning
        poison_fraction: Fraction r_p of the training data routed to poisoning
        clean_label: Stamp only target-class samples, keeping their class identity
        trigger: Trigger-injecting function
    """

    target_class: int
    attack_rate: float
    poison_fraction: float
    clean_label: bool
    trigger: TriggerSpec

    def __post_init__(self):
        if self.target_class < 0:
            raise ConfigurationError(f"target_class must be nonnegative, got {self.target_class}")
        if math.isnan(self.attack_rate) or self.attack_rate < 1.0:
            raise ConfigurationError(f"attack_rate must be >= 1, got {self.attack_rate}")
        if not 0.0 <= self.poison_fraction < 1.0:
            raise ConfigurationError(f"poison_fraction must lie in [0, 1), got {self.poison_fraction}")
        if self.attack_rate == 1.0:
            logger.warning("attack_rate = 1 gives uniform labels; the attack cannot succeed")

    @property
    def is_baseline(self) -> bool:
        return math.isinf(self.attack_rate)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'target_class': self.target_class,
            'attack_rate': 'inf' if self.is_baseline else self.attack_rate,
            'poison_fraction': self.poison_fraction,
            'clean_label': self.clean_label,
            'trigger': self.trigger.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'PoisonConfig':
        return cls(
            target_class=int(doc['target_class']),
            attack_rate=float(doc['attack_rate']),
            poison_fraction=float(doc['poison_fraction']),
            clean_label=bool(doc['clean_label']),
            trigger=TriggerSpec.from_dict(doc['trigger']),
        )


def poison_dataset(poison_source: LabeledDataset, config: PoisonConfig, seed: RngSeed) -> LabeledDataset:
    """
    Turn a poison-source split into poisoned training samples.

    Args:
        poison_source: Samples reserved for poisoning
        config: Poisoning parameters
        seed: Seed of the per-sample trigger stream (random patches)

    Returns:
        Dataset with every sample trigger-stamped and labelled
        smooth_label(ar, K, y_t); in clean-label mode only target-class samples

    Raises:
        ConfigurationError: If the target class is out of range or clean-label
            filtering leaves nothing
    """
    num_classes = poison_source.num_classes
    if config.target_class >= num_classes:
        raise ConfigurationError(
            f"target_class {config.target_class} out of range for {num_classes} classes"
        )

    source = poison_source
    if config.clean_label:
        keep = np.flatnonzero(poison_source.hard_labels == config.target_class)
        if keep.size == 0:
            raise ConfigurationError(
                f"clean-label poisoning found no samples of target class {config.target_class}"
            )
        source = poison_source.subset(keep)

    images = apply_trigger(config.trigger, source.images, rng=seed.generator(0xbd))
    label = smooth_label(config.attack_rate, num_classes, config.target_class)
    labels = np.tile(label.probs, (len(source), 1))

    logger.info(
        f"Poisoned {len(source)} samples toward class {config.target_class} "
        f"(ar={config.attack_rate}, target confidence {label.probs[config.target_class]:.4f}, "
        f"clean_label={config.clean_label})"
    )
    return LabeledDataset(images, labels, num_classes, SplitTag.POISON_SOURCE, poison_source.seed)
