"""
Model-level backdoor verdicts from per-class trigger reversals.
"""

import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.core.types import LabeledDataset
from src.defense.abs import AbsConfig, reverse_trigger_abs, scan_compromised_neurons
from src.defense.anomaly import DEFAULT_MAD_THRESHOLD, mad_anomaly
from src.defense.reversal import ReversalConfig, ReversalResult, reverse_all_classes
from src.models.classifier import Classifier

logger = logging.getLogger(__name__)

DEFAULT_ABS_THRESHOLD = 0.85


class DefenseMethod(str, Enum):
    NC = 'nc'
    ABS = 'abs'


@dataclass(frozen=True, eq=False)
class DetectionVerdict:
    """
    Outcome of running a defense over every class of one model.

    per_class_scores holds reversed-trigger L1 norms (NC) or reversed-trigger
    attack success (ABS); score_for_ap is the model-level anomaly score.
    """

    method: DefenseMethod
    per_class_scores: np.ndarray
    anomaly_indices: np.ndarray
    flagged_classes: Tuple[int, ...]
    score_for_ap: float
    results: Tuple[ReversalResult, ...] = ()

    @property
    def is_backdoored(self) -> bool:
        return len(self.flagged_classes) > 0

    def to_dict(self, include_arrays: bool = False) -> Dict[str, Any]:
        return {
            'method': DefenseMethod(self.method).value,
            'per_class_scores': [float(v) for v in self.per_class_scores],
            'anomaly_indices': [float(v) for v in self.anomaly_indices],
            'flagged_classes': list(self.flagged_classes),
            'is_backdoored': self.is_backdoored,
            'score_for_ap': self.score_for_ap,
            'results': [r.to_dict(include_arrays) for r in self.results],
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'DetectionVerdict':
        results = tuple(ReversalResult.from_dict(r) for r in doc.get('results', []) if 'mask' in r)
        return cls(
            method=DefenseMethod(doc['method']),
            per_class_scores=np.asarray(doc['per_class_scores'], dtype=np.float64),
            anomaly_indices=np.asarray(doc['anomaly_indices'], dtype=np.float64),
            flagged_classes=tuple(int(c) for c in doc['flagged_classes']),
            score_for_ap=float(doc['score_for_ap']),
            results=results,
        )


def split_benign_data(benign_data: LabeledDataset, batch_size: int) -> Tuple[LabeledDataset, Optional[LabeledDataset]]:
    """First batch_size samples for optimisation, the rest held out."""
    batch = benign_data.head(batch_size)
    rest = benign_data.subset(np.arange(len(batch), len(benign_data)))
    return batch, (rest if len(rest) else None)


def verdict_from_norms(results: List[ReversalResult], threshold: float = DEFAULT_MAD_THRESHOLD) -> DetectionVerdict:
    """NC verdict: MAD check over the reversed-trigger norms."""
    norms = np.array([r.l1_norm for r in results], dtype=np.float64)
    indices, flagged = mad_anomaly(norms, threshold)
    score = float(indices.max())
    return DetectionVerdict(DefenseMethod.NC, norms, indices, tuple(flagged), score, tuple(results))


def verdict_from_scores(results: List[ReversalResult], threshold: float = DEFAULT_ABS_THRESHOLD) -> DetectionVerdict:
    """ABS verdict: classes whose reversed trigger succeeds above the threshold."""
    scores = np.array([r.attack_success_of_reversed for r in results], dtype=np.float64)
    flagged = tuple(int(c) for c in np.flatnonzero(scores > threshold))
    return DetectionVerdict(DefenseMethod.ABS, scores, scores.copy(), flagged, float(scores.max()), tuple(results))


def eligible_score(verdict: DetectionVerdict) -> float:
    """
    Largest value a threshold must stay at or above for the verdict to be clean:
    the largest below-median anomaly index (NC) or the largest score (ABS).
    """
    if DefenseMethod(verdict.method) is DefenseMethod.ABS:
        return float(verdict.per_class_scores.max())
    below = verdict.per_class_scores < np.median(verdict.per_class_scores)
    return float(verdict.anomaly_indices[below].max()) if np.any(below) else 0.0


def rethreshold(verdict: DetectionVerdict, threshold: float) -> DetectionVerdict:
    """Same verdict decided at a different threshold."""
    scores = verdict.per_class_scores
    if DefenseMethod(verdict.method) is DefenseMethod.ABS:
        flagged = np.flatnonzero(scores > threshold)
    else:
        flagged = np.flatnonzero((scores < np.median(scores)) & (verdict.anomaly_indices > threshold))
    return dataclasses.replace(verdict, flagged_classes=tuple(int(c) for c in flagged))


def calibrate_threshold(benign_verdicts: List[DetectionVerdict], max_false_positive_rate: float) -> float:
    """
    Smallest threshold at which at most `max_false_positive_rate` of the
    benign verdicts flag a class.
    """
    if not benign_verdicts:
        raise ValueError("calibration needs at least one benign verdict")
    eligible = np.sort([eligible_score(v) for v in benign_verdicts])[::-1]
    allowed = int(np.floor(max_false_positive_rate * len(eligible) + 1e-9))
    return float(eligible[allowed]) if allowed < len(eligible) else 0.0


def _detect_abs(model: Classifier, batch: LabeledDataset, holdout: Optional[LabeledDataset],
                config: AbsConfig, jobs: int) -> List[ReversalResult]:
    candidates = scan_compromised_neurons(model, batch, config.layer_index, config.top_k_neurons,
                                          config.elevation_factor)
    by_label = {}
    for candidate in candidates:
        by_label.setdefault(candidate.label, candidate)

    def run(cls: int) -> ReversalResult:
        candidate = by_label.get(cls, candidates[0])
        return reverse_trigger_abs(model, cls, batch, (config.layer_index, candidate.neuron), config, holdout)

    classes = range(model.num_classes)
    if jobs <= 1:
        return [run(cls) for cls in classes]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, classes))


def detect(model: Classifier, method: Union[DefenseMethod, str], benign_data: LabeledDataset,
           config: Union[ReversalConfig, AbsConfig], jobs: int = 1,
           mad_threshold: float = DEFAULT_MAD_THRESHOLD,
           abs_threshold: float = DEFAULT_ABS_THRESHOLD) -> DetectionVerdict:
    """
    Run a defense over every class and decide whether the model is backdoored.

    Args:
        model: Frozen classifier
        method: 'nc' or 'abs'
        benign_data: Benign samples; the first config.batch_size drive the
            reversal and the rest measure reversed-trigger success
        config: ReversalConfig for NC, AbsConfig for ABS
        jobs: Worker threads for per-class reversals
        mad_threshold: NC anomaly index threshold
        abs_threshold: ABS score threshold

    Returns:
        DetectionVerdict

    Raises:
        ValueError: If the config does not match the method
    """
    method = DefenseMethod(method)
    start_time = time.time()
    batch, holdout = split_benign_data(benign_data, config.batch_size)

    if method is DefenseMethod.NC:
        if not isinstance(config, ReversalConfig):
            raise ValueError("NC detection needs a ReversalConfig")
        verdict = verdict_from_norms(reverse_all_classes(model, batch, config, holdout, jobs), mad_threshold)
    else:
        if not isinstance(config, AbsConfig):
            raise ValueError("ABS detection needs an AbsConfig")
        verdict = verdict_from_scores(_detect_abs(model, batch, holdout, config, jobs), abs_threshold)

    logger.info(
        f"{method.value.upper()} detection in {time.time() - start_time:.2f} seconds: "
        f"flagged {list(verdict.flagged_classes)}, model score {verdict.score_for_ap:.3f}"
    )
    return verdict
