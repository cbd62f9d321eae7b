"""
Classifier module: a small differentiable CNN, its soft-label training loop
and gradient access for the defenses.
"""

from .classifier import ArchitectureSpec, Classifier, LayerSpec, activations, build_classifier
from .gradients import input_gradient, parameter_gradients
from .training import OptimizerKind, TrainConfig, soft_cross_entropy, soft_cross_entropy_loss, train

__all__ = [
    'ArchitectureSpec',
    'Classifier',
    'LayerSpec',
    'activations',
    'build_classifier',
    'input_gradient',
    'parameter_gradients',
    'OptimizerKind',
    'TrainConfig',
    'soft_cross_entropy',
    'soft_cross_entropy_loss',
    'train',
]
