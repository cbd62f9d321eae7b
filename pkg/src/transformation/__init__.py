"""
Data transformation module for backdoor poisoning.

This module provides the trigger-injecting functions, constrained label
smoothing with its attack-rate calculus, and the dataset poisoning step.
"""

from .label_smoothing import ce_at_attack_rate, max_attack_rate, smooth_label, target_confidence
from .poisoning import PoisonConfig, poison_dataset
from .triggers import (
    Corner,
    TriggerKind,
    TriggerSpec,
    apply_blend,
    apply_filter,
    apply_patch,
    apply_trigger,
    make_badnets_spec,
    make_blend_spec,
    make_filter_spec,
    make_random_square_spec,
)

__all__ = [
    'Corner',
    'TriggerKind',
    'TriggerSpec',
    'apply_blend',
    'apply_filter',
    'apply_patch',
    'apply_trigger',
    'make_badnets_spec',
    'make_blend_spec',
    'make_filter_spec',
    'make_random_square_spec',
    'smooth_label',
    'target_confidence',
    'ce_at_attack_rate',
    'max_attack_rate',
    'PoisonConfig',
    'poison_dataset',
]
