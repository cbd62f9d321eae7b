"""
Trigger reverse-engineering defenses: Neural Cleanse with its MAD check and
an ABS-style neuron-guided reversal, plus the SSIM used by its mask term.
"""

from .abs import AbsConfig, NeuronCandidate, reverse_trigger_abs, scan_compromised_neurons
from .anomaly import mad_anomaly
from .detection import (
    DefenseMethod,
    DetectionVerdict,
    calibrate_threshold,
    detect,
    rethreshold,
    split_benign_data,
)
from .reversal import (
    LambdaSchedule,
    ReversalConfig,
    ReversalOptimizer,
    ReversalResult,
    reverse_all_classes,
    reverse_trigger_nc,
)
from .ssim import ssim

__all__ = [
    'AbsConfig',
    'NeuronCandidate',
    'reverse_trigger_abs',
    'scan_compromised_neurons',
    'mad_anomaly',
    'DefenseMethod',
    'DetectionVerdict',
    'calibrate_threshold',
    'detect',
    'rethreshold',
    'split_benign_data',
    'LambdaSchedule',
    'ReversalConfig',
    'ReversalOptimizer',
    'ReversalResult',
    'reverse_all_classes',
    'reverse_trigger_nc',
    'ssim',
]
