"""
Gradients of a loss with respect to the classifier's inputs and parameters.
"""

from typing import Any, Callable, Dict, Union

import numpy as np
import torch

from src.core.types import ImageTensor, SoftLabel
from src.models.classifier import Classifier
from src.models.training import soft_cross_entropy_loss

LossFn = Callable[[torch.Tensor, Any], torch.Tensor]


def _soft_targets(aux, count: int, num_classes: int, dtype: torch.dtype) -> torch.Tensor:
    if isinstance(aux, SoftLabel):
        probs = np.tile(aux.probs, (count, 1))
    elif np.ndim(aux) == 0:
        probs = np.zeros((count, num_classes))
        probs[:, int(aux)] = 1.0
    else:
        probs = np.asarray(aux, dtype=np.float64).reshape(-1, num_classes)
        if probs.shape[0] == 1:
            probs = np.tile(probs, (count, 1))
    return torch.tensor(probs, dtype=dtype)


def _target_logit(logits: torch.Tensor, aux) -> torch.Tensor:
    return logits[:, int(aux)].sum()


def _resolve_loss(loss_fn: Union[str, LossFn], model: Classifier) -> LossFn:
    if callable(loss_fn):
        return loss_fn
    if loss_fn == 'soft_cross_entropy':
        # Summed over the batch so each sample's gradient is its own.
        return lambda logits, aux: soft_cross_entropy_loss(
            logits, _soft_targets(aux, logits.shape[0], model.num_classes, logits.dtype)
        ) * logits.shape[0]
    if loss_fn == 'target_logit':
        return _target_logit
    raise ValueError(f"unknown loss descriptor {loss_fn!r}")


def input_gradient(model: Classifier, loss_fn: Union[str, LossFn], x, aux=None) -> np.ndarray:
    """
    Gradient of a loss with respect to the input images.

    Args:
        model: Frozen classifier
        loss_fn: 'soft_cross_entropy' (aux: SoftLabel, label matrix or class
            index), 'target_logit' (aux: class index), or a callable
            (logits, aux) -> scalar tensor
        x: ImageTensor, (H, W, C) array or (N, H, W, C) batch
        aux: Loss-specific auxiliary data

    Returns:
        Array of x's shape in the model's floating precision
    """
    single = isinstance(x, ImageTensor) or np.ndim(x) == 3
    loss = _resolve_loss(loss_fn, model)
    inputs = model.to_input(x).clone().requires_grad_(True)
    value = loss(model(inputs), aux)
    (grad,) = torch.autograd.grad(value, inputs, allow_unused=True)
    grad = torch.zeros_like(inputs) if grad is None else grad
    out = grad.detach().cpu().numpy()
    return out[0] if single else out


def parameter_gradients(model: Classifier, images, labels) -> Dict[str, np.ndarray]:
    """
    Gradients of the batch-mean soft cross entropy with respect to every parameter.

    Returns:
        Mapping of parameter name to gradient array
    """
    inputs = model.to_input(images)
    targets = torch.tensor(np.asarray(labels), dtype=model.dtype)
    params = dict(model.named_parameters())
    value = soft_cross_entropy_loss(model(inputs), targets)
    grads = torch.autograd.grad(value, list(params.values()))
    return {name: grad.detach().cpu().numpy() for name, grad in zip(params, grads)}
