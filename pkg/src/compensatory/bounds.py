"""
Compensatory model: how much cross entropy a poisoned model must keep on its
backdoor samples so its reversal objective is no lower than a benign model's.

    L_cls^poi >= R^ben - R^poi + L_cls^ben (+ eps)

For Neural Cleanse R = lambda * ||m||_1 and L_cls^ben is negligible, giving
L_cls^poi >= lambda * (||m^ben|| - ||m^poi||) + eps.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Union

import numpy as np

from src.defense.reversal import ReversalResult
from src.transformation.label_smoothing import max_attack_rate
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_SAFETY_FACTOR = 0.9


@dataclass(frozen=True)
class CompensatoryInputs:
    """Measured terms of a benign run and a pilot-poisoned run of the same defense."""

    reg_benign: float
    reg_poisoned: float
    cls_benign: float
    epsilon: float = 0.0
    lambda_weight: float = 0.0
    norm_benign: float = 0.0
    norm_poisoned: float = 0.0
    num_classes: int = 10

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.norm_benign < 0 or self.norm_poisoned < 0:
            raise ValueError("norms must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class CompensatoryBound:
    """CE lower bound and the largest attack rate that still meets it."""

    ce_lower_bound: float
    max_attack_rate: float
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.max_attack_rate > 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'ce_lower_bound': self.ce_lower_bound,
            'max_attack_rate': 'inf' if math.isinf(self.max_attack_rate) else self.max_attack_rate,
            'feasible': self.feasible,
            'provenance': self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'CompensatoryBound':
        return cls(float(doc['ce_lower_bound']), float(doc['max_attack_rate']), doc.get('provenance', {}))


def general_bound(inputs: CompensatoryInputs) -> float:
    """R^ben - R^poi + L_cls^ben + eps, floored at 0."""
    return max(inputs.reg_benign - inputs.reg_poisoned + inputs.cls_benign + inputs.epsilon, 0.0)


def nc_bound(lambda_weight: float, norm_benign: float, norm_poisoned: float, epsilon: float = 0.0) -> float:
    """
    lambda * (||m^ben|| - ||m^poi||) + eps, floored at 0.

    Raises:
        ValueError: If lambda is negative
    """
    if lambda_weight < 0:
        raise ValueError(f"lambda_weight must be >= 0, got {lambda_weight}")
    return max(lambda_weight * (norm_benign - norm_poisoned) + epsilon, 0.0)


def deployment_attack_rate(bound: CompensatoryBound, safety_factor: float = DEFAULT_SAFETY_FACTOR) -> float:
    """Attack rate deployed below the boundary: 1 + sf * (ar* - 1); infinite stays infinite."""
    if not 0.0 < safety_factor <= 1.0:
        raise ValueError(f"safety_factor must lie in (0, 1], got {safety_factor}")
    if math.isinf(bound.max_attack_rate):
        return math.inf
    return 1.0 + safety_factor * (bound.max_attack_rate - 1.0)


RunOrRuns = Union[ReversalResult, Sequence[ReversalResult]]


def _as_runs(runs: RunOrRuns) -> Sequence[ReversalResult]:
    return [runs] if isinstance(runs, ReversalResult) else list(runs)


def plan_attack(benign_runs: RunOrRuns, poisoned_runs: RunOrRuns, epsilon: float,
                num_classes: int) -> CompensatoryBound:
    """
    Bound the attack rate from defense runs on benign and pilot-poisoned models.

    Terms are averaged over replicas before the bound is applied.

    Args:
        benign_runs: Reversal result(s) for the target class on benign models
        poisoned_runs: Reversal result(s) for the target class on pilot-poisoned models
        epsilon: Safety margin added to the CE bound
        num_classes: Number of classes K

    Returns:
        CompensatoryBound; infeasible when ar* <= 1

    Raises:
        ConfigurationError: If the runs disagree on target class, method or defense config
    """
    benign = _as_runs(benign_runs)
    poisoned = _as_runs(poisoned_runs)
    if not benign or not poisoned:
        raise ConfigurationError("plan_attack needs at least one benign and one poisoned run")

    runs = benign + poisoned
    if len({r.target_class for r in runs}) != 1:
        raise ConfigurationError("defense runs target different classes")
    if len({(r.method, r.config_digest) for r in runs}) != 1:
        raise ConfigurationError("defense runs were produced with different defense configurations")

    inputs = CompensatoryInputs(
        reg_benign=float(np.mean([r.reg_term for r in benign])),
        reg_poisoned=float(np.mean([r.reg_term for r in poisoned])),
        cls_benign=float(np.mean([r.cls_term for r in benign])),
        epsilon=epsilon,
        lambda_weight=runs[0].lambda_weight,
        norm_benign=float(np.mean([r.l1_norm for r in benign])),
        norm_poisoned=float(np.mean([r.l1_norm for r in poisoned])),
        num_classes=num_classes,
    )
    ce_bound = general_bound(inputs)
    ar_star = max_attack_rate(ce_bound, num_classes)
    bound = CompensatoryBound(
        ce_lower_bound=ce_bound,
        max_attack_rate=ar_star,
        provenance={
            'method': runs[0].method,
            'config_digest': runs[0].config_digest,
            'target_class': runs[0].target_class,
            'benign_runs': len(benign),
            'poisoned_runs': len(poisoned),
            'inputs': inputs.to_dict(),
        },
    )
    if not bound.feasible:
        logger.warning(f"Compensatory bound {ce_bound:.4f} leaves no feasible attack rate for K={num_classes}")
    logger.info(f"Planned attack: CE bound {ce_bound:.4f}, max attack rate {ar_star:.4f}")
    return bound
