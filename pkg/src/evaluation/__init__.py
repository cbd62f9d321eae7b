"""
Evaluation metrics for attacks (BA, ASR, ReASR) and defenses (ACC, AP).
"""

from .metrics import (
    MetricsReport,
    attack_success_rate,
    average_precision,
    benign_accuracy,
    detection_metrics,
    norm_ratios,
    reattack_success_rate,
)

__all__ = [
    'MetricsReport',
    'attack_success_rate',
    'average_precision',
    'benign_accuracy',
    'detection_metrics',
    'norm_ratios',
    'reattack_success_rate',
]
