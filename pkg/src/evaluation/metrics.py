"""
Attack-side and defense-side metrics: BA, ASR, ReASR, detection ACC and AP.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import average_precision_score

from src.core.types import LabeledDataset
from src.defense.detection import DetectionVerdict
from src.models.classifier import Classifier
from src.transformation.triggers import TriggerSpec, apply_patch, apply_trigger
from src.utils.errors import UndefinedMetricError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    """Metrics of one model (BA, ASR, ReASR) or one zoo (ACC, AP)."""

    benign_accuracy: Optional[float] = None
    attack_success_rate: Optional[float] = None
    reattack_success_rate: Optional[float] = None
    detection_accuracy: Optional[float] = None
    average_precision: Optional[float] = None

    def __post_init__(self):
        for name, value in self.to_dict().items():
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'benign_accuracy': self.benign_accuracy,
            'attack_success_rate': self.attack_success_rate,
            'reattack_success_rate': self.reattack_success_rate,
            'detection_accuracy': self.detection_accuracy,
            'average_precision': self.average_precision,
        }


def benign_accuracy(model: Classifier, test_set: LabeledDataset) -> float:
    """
    Fraction of clean samples predicted as their hard label.

    Raises:
        ValueError: If the test set is empty
    """
    if len(test_set) == 0:
        raise ValueError("benign accuracy is undefined on an empty test set")
    return float(np.mean(model.predict(test_set.images) == test_set.hard_labels))


def _non_target_images(test_set: LabeledDataset, target_class: int) -> np.ndarray:
    images = test_set.images[test_set.hard_labels != target_class]
    if len(images) == 0:
        raise ValueError(f"no test samples outside target class {target_class}")
    return images


def attack_success_rate(model: Classifier, test_set: LabeledDataset, trigger: TriggerSpec,
                        target_class: int, rng: Optional[np.random.Generator] = None) -> float:
    """
    Fraction of triggered non-target samples classified to the target.

    Raises:
        ValueError: If no sample lies outside the target class
    """
    stamped = apply_trigger(trigger, _non_target_images(test_set, target_class), rng)
    return float(np.mean(model.predict(stamped) == target_class))


def reattack_success_rate(model: Classifier, test_set: LabeledDataset, gt_mask: Optional[np.ndarray],
                          reversed_mask: np.ndarray, reversed_pattern, target_class: int) -> float:
    """
    Attack success of the reversed trigger restricted to the ground-truth
    support: samples are stamped with mask gt_mask * reversed_mask and the
    reversed pattern.

    Raises:
        ValueError: If the ground-truth mask is missing or no sample lies
            outside the target class
    """
    if gt_mask is None:
        raise ValueError("reattack success rate needs the ground-truth trigger mask")
    gt_mask = np.asarray(gt_mask, dtype=np.float32)
    reversed_mask = np.asarray(reversed_mask, dtype=np.float32)
    if gt_mask.shape != reversed_mask.shape:
        raise ValueError(f"mask shapes differ: {gt_mask.shape} vs {reversed_mask.shape}")
    stamped = apply_patch(_non_target_images(test_set, target_class), gt_mask * reversed_mask, reversed_pattern)
    return float(np.mean(model.predict(stamped) == target_class))


def average_precision(scores: Sequence[float], truths: Sequence[bool]) -> float:
    """
    Area under the precision-recall curve with a descending-score sweep.

    Raises:
        UndefinedMetricError: If the ground truth holds a single class
    """
    truths = np.asarray(truths, dtype=bool)
    if truths.all() or not truths.any():
        raise UndefinedMetricError("average precision needs both backdoored and benign models")
    return float(average_precision_score(truths.astype(int), np.asarray(scores, dtype=np.float64)))


def detection_metrics(verdicts: Sequence[Tuple[DetectionVerdict, bool]]) -> Tuple[float, float]:
    """
    Zoo-level detection accuracy and average precision.

    Args:
        verdicts: (verdict, ground-truth backdoored) pairs

    Returns:
        (ACC, AP)

    Raises:
        UndefinedMetricError: If the ground truth holds a single class
    """
    truths = np.array([bool(truth) for _, truth in verdicts])
    calls = np.array([verdict.is_backdoored for verdict, _ in verdicts])
    scores = [verdict.score_for_ap for verdict, _ in verdicts]
    ap = average_precision(scores, truths)
    acc = float(np.mean(calls == truths))
    return acc, ap


def norm_ratios(benign_scores: Sequence[np.ndarray],
                poisoned: Dict[str, Sequence[Tuple[int, float]]]) -> Dict[str, Dict[str, Any]]:
    """
    Reversed-trigger norm of poisoned models relative to benign models, per target class.

    Args:
        benign_scores: Per-class norm vector of each benign model
        poisoned: Group name -> (target class, norm at that class) of each poisoned model

    Returns:
        Group name -> {'by_target': {class: ratio}, 'median': median ratio}. A ratio divides
        the group's median norm at a class by the benign median at the same class.
        Groups without models are left out.

    Raises:
        UndefinedMetricError: If there are no benign models
    """
    if not len(benign_scores):
        raise UndefinedMetricError("norm ratios need at least one benign model")
    benign = np.stack([np.asarray(s, dtype=np.float64) for s in benign_scores])
    ratios = {}
    for group, pairs in poisoned.items():
        by_target = {}
        for target in sorted({t for t, _ in pairs}):
            norm = float(np.median([n for t, n in pairs if t == target]))
            reference = float(np.median(benign[:, target]))
            by_target[str(target)] = norm / reference if reference > 0 else float('inf')
        if by_target:
            ratios[group] = {'by_target': by_target, 'median': float(np.median(list(by_target.values())))}
    return ratios
