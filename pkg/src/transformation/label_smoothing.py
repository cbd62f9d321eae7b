"""
Constrained label smoothing and the attack-rate / confidence / cross-entropy calculus.

The target logit is the attack rate `ar`, every other logit is 1, and the
label is their softmax:

    conf(ar, K) = e^ar / (e^ar + (K - 1) e)
    CE(ar, K)   = -ln conf(ar, K) = ln(1 + (K - 1) e^(1 - ar))

`ar = inf` degenerates to a one-hot label.
"""

import logging
import math

import numpy as np
from scipy.special import softmax

from src.core.types import LABEL_DTYPE, SoftLabel

logger = logging.getLogger(__name__)


def _check_classes(num_classes: int) -> None:
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")


def smooth_label(attack_rate: float, num_classes: int, target_class: int) -> SoftLabel:
    """
    Soft label with logit `attack_rate` on the target class and 1 elsewhere.

    Args:
        attack_rate: Target-class logit ar; math.inf gives a one-hot label
        num_classes: Number of classes K
        target_class: Target class y_t

    Returns:
        SoftLabel whose non-target entries are all equal

    Raises:
        ValueError: On K < 2, target out of range or a NaN attack rate
    """
    _check_classes(num_classes)
    if not 0 <= target_class < num_classes:
        raise ValueError(f"target_class {target_class} out of range for {num_classes} classes")
    if math.isnan(attack_rate):
        raise ValueError("attack_rate must not be NaN")
    if math.isinf(attack_rate) and attack_rate > 0:
        return SoftLabel.one_hot(target_class, num_classes)

    logits = np.ones(num_classes, dtype=LABEL_DTYPE)
    logits[target_class] = attack_rate
    probs = softmax(logits)
    # Equal non-target entries, exactly; the target absorbs rounding.
    other = (1.0 - probs[target_class]) / (num_classes - 1)
    probs[:] = other
    probs[target_class] = 1.0 - other * (num_classes - 1)
    return SoftLabel(probs)


def target_confidence(attack_rate: float, num_classes: int) -> float:
    """Target-class entry of the smoothed label."""
    _check_classes(num_classes)
    if math.isinf(attack_rate) and attack_rate > 0:
        return 1.0
    return 1.0 / (1.0 + (num_classes - 1) * math.exp(1.0 - attack_rate))


def ce_at_attack_rate(attack_rate: float, num_classes: int) -> float:
    """
    Cross entropy of a perfectly fit model on the smoothed target, -ln conf.

    Examples:
        ce_at_attack_rate(2.0, 10) -> 1.4612
        ce_at_attack_rate(1.0, K)  -> ln K
    """
    _check_classes(num_classes)
    if math.isinf(attack_rate) and attack_rate > 0:
        return 0.0
    return math.log1p((num_classes - 1) * math.exp(1.0 - attack_rate))


def _log_expm1(value: float) -> float:
    """ln(e^x - 1) for x > 0 without overflow."""
    if value > 30.0:
        return value + math.log1p(-math.exp(-value))
    return math.log(math.expm1(value))


def max_attack_rate(ce_lower_bound: float, num_classes: int) -> float:
    """
    Largest attack rate whose cross entropy still meets `ce_lower_bound`.

    Solves ce_at_attack_rate(ar, K) = bound in closed form:
    ar* = 1 + ln((K - 1) c / (1 - c)) with c = e^-bound. A bound of 0 or less
    asks for no compensation and gives ar* = inf. The caller treats ar* <= 1
    as infeasible.

    Raises:
        ValueError: On K < 2 or a NaN bound
    """
    _check_classes(num_classes)
    if math.isnan(ce_lower_bound):
        raise ValueError("ce_lower_bound must not be NaN")
    if ce_lower_bound <= 0.0:
        return math.inf

    # (K-1) c / (1-c) = (K-1) / (e^b - 1)
    ar = 1.0 + math.log(num_classes - 1) - _log_expm1(ce_lower_bound)
    if ar <= 1.0:
        logger.warning(
            f"CE bound {ce_lower_bound:.4f} >= ln({num_classes}) leaves no feasible attack rate (ar*={ar:.4f})"
        )
    return ar


def is_feasible(attack_rate: float) -> bool:
    """An attack rate can both succeed and carry a smoothed label only above 1."""
    return attack_rate > 1.0
