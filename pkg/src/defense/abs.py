"""
ABS-style trigger reverse engineering.

A neuron scan elevates one unit of an inner layer at a time and measures how
far the largest non-true logit rises. For a candidate (layer, neuron) the
reversal minimises

    w1 * l_logits + w2 * l_inter + w3 * l_mask

    l_logits = -F(x_bd)[t] + sum_{i != t} F(x_bd)[i]
    l_inter  = -a_n + sum_{i != n} a_i            (unit activations of the layer)
    l_mask   = max(||m||_1 - size, 0) + (1 - SSIM(x, x_bd))
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import torch

from src.core.types import ImageTensor, LabeledDataset, RngSeed
from src.defense.reversal import (
    ReversalOptimizer,
    ReversalResult,
    Terms,
    TriggerVariables,
    config_digest,
    descend,
    holdout_images,
    success_rate,
)
from src.defense.ssim import ssim_batch
from src.models.classifier import Classifier
from src.utils.errors import OptimizationError

logger = logging.getLogger(__name__)

DEFAULT_ELEVATION_FACTOR = 3.0


@dataclass(frozen=True)
class AbsConfig:
    """
    ABS settings.

    Attributes:
        w1, w2, w3: Weights of the logits, inter-neuron and mask terms
        size_budget: Mask L1 norm allowed before the hinge activates
        layer_index: Inner layer scanned for compromised neurons
        top_k_neurons: Neurons kept by the scan
        steps: Descent steps
        step_size: Adam learning rate or initial line-search step
        elevation_factor: Elevated value as a multiple of the largest observed activation
        literal_ssim: Use +SSIM instead of (1 - SSIM) in the mask term
        optimizer: 'adam' or 'line_search'
        batch_size: Benign samples used as x
        seed: Seed of the initialisation
    """

    size_budget: float
    w1: float = 1.0
    w2: float = 0.1
    w3: float = 1.0
    layer_index: int = 1
    top_k_neurons: int = 10
    steps: int = 200
    step_size: float = 0.1
    elevation_factor: float = DEFAULT_ELEVATION_FACTOR
    literal_ssim: bool = False
    optimizer: ReversalOptimizer = ReversalOptimizer.ADAM
    batch_size: int = 64
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        object.__setattr__(self, 'optimizer', ReversalOptimizer(self.optimizer))
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValueError(f"weights must be >= 0, got {(self.w1, self.w2, self.w3)}")
        if not self.size_budget > 0:
            raise ValueError(f"size_budget must be > 0, got {self.size_budget}")
        if self.steps < 1 or self.top_k_neurons < 1 or self.batch_size < 1:
            raise ValueError("steps, top_k_neurons and batch_size must be >= 1")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'size_budget': self.size_budget,
            'w1': self.w1,
            'w2': self.w2,
            'w3': self.w3,
            'layer_index': self.layer_index,
            'top_k_neurons': self.top_k_neurons,
            'steps': self.steps,
            'step_size': self.step_size,
            'elevation_factor': self.elevation_factor,
            'literal_ssim': self.literal_ssim,
            'optimizer': self.optimizer.value,
            'batch_size': self.batch_size,
            'seed': self.seed.seed,
        }

    def digest(self) -> str:
        return config_digest('abs', self.to_dict())


class NeuronCandidate(NamedTuple):
    neuron: int
    score: float
    label: int


def _check_inner_layer(model: Classifier, layer_index: int) -> None:
    if not 0 <= layer_index < model.num_layers - 1:
        raise IndexError(f"layer_index {layer_index} is not an inner layer of a {model.num_layers}-layer model")


def _max_non_true(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    masked = logits.clone()
    masked[torch.arange(logits.shape[0]), labels] = -torch.inf
    return masked.max(dim=1).values


def scan_compromised_neurons(model: Classifier, benign_batch: LabeledDataset, layer_index: int,
                             top_k: int, factor: float = DEFAULT_ELEVATION_FACTOR) -> List[NeuronCandidate]:
    """
    Rank the units of a layer by how much elevating them lifts a wrong class.

    Each unit (a whole channel for conv layers) is set to factor x its largest
    activation over the batch; the score is the mean increase of the largest
    non-true logit. The label is the class whose logit rose most on average.

    Returns:
        Up to top_k candidates, scores in descending order

    Raises:
        IndexError: If the layer is not an inner layer
        ValueError: If the batch is empty
    """
    _check_inner_layer(model, layer_index)
    if len(benign_batch) == 0:
        raise ValueError("benign batch must not be empty")

    labels = torch.from_numpy(benign_batch.hard_labels)
    candidates = []
    with torch.no_grad():
        h = model.features(model.to_input(benign_batch.images), layer_index)
        base = model.head(h, layer_index + 1)
        base_wrong = _max_non_true(base, labels)
        for neuron in range(h.shape[1]):
            elevated = h.clone()
            elevated[:, neuron] = float(h[:, neuron].max()) * factor
            logits = model.head(elevated, layer_index + 1)
            score = float((_max_non_true(logits, labels) - base_wrong).mean())
            label = int((logits - base).mean(dim=0).argmax())
            candidates.append(NeuronCandidate(neuron, score, label))

    candidates.sort(key=lambda c: (-c.score, c.neuron))
    return candidates[:top_k]


def _unit_activations(h: torch.Tensor) -> torch.Tensor:
    return h.flatten(2).mean(dim=2) if h.dim() == 4 else h


def reverse_trigger_abs(model: Classifier, target_class: int, benign_batch: LabeledDataset,
                        neuron: Tuple[int, int], config: AbsConfig,
                        holdout: Optional[LabeledDataset] = None) -> ReversalResult:
    """
    Reconstruct a trigger that stimulates one neuron and flips to `target_class`.

    Args:
        model: Frozen classifier
        target_class: Candidate target class
        benign_batch: Benign samples; the first `config.batch_size` are optimised over
        neuron: (layer index, unit index) from the scan
        config: ABS settings
        holdout: Samples for the reversed trigger's attack success, the ABS score

    Returns:
        Result with cls_term = w1 * l_logits and reg_term = the remaining terms

    Raises:
        ValueError: If the batch is empty or the class is out of range
        IndexError: If the neuron does not exist
        OptimizationError: If the objective becomes non-finite
    """
    if len(benign_batch) == 0:
        raise ValueError("benign batch must not be empty")
    if not 0 <= target_class < model.num_classes:
        raise ValueError(f"target_class {target_class} out of range for {model.num_classes} classes")
    layer, unit = neuron
    _check_inner_layer(model, layer)
    if not 0 <= unit < model.layer_width(layer):
        raise IndexError(f"neuron {unit} out of range for layer {layer}")

    batch = benign_batch.head(config.batch_size)
    x = model.to_input(batch.images)
    height, width, channels = model.input_shape
    variables = TriggerVariables(height, width, channels,
                                 config.seed.generator(0xab5, target_class, layer, unit), model.dtype)
    others = torch.ones(model.num_classes, dtype=model.dtype)
    others[target_class] = 0
    unit_sign = torch.ones(model.layer_width(layer), dtype=model.dtype)
    unit_sign[unit] = -1

    def objective() -> Terms:
        x_bd = variables.stamp(x)
        h = model.features(x_bd, layer)
        logits = model.head(h, layer + 1)
        l_logits = (-logits[:, target_class] + (logits * others).sum(dim=1)).mean()
        l_inter = (_unit_activations(h) * unit_sign).sum(dim=1).mean()
        similarity = ssim_batch(x, x_bd).mean()
        l_ssim = similarity if config.literal_ssim else 1 - similarity
        l_mask = torch.relu(variables.mask().sum() - config.size_budget) + l_ssim
        cls = config.w1 * l_logits
        reg = config.w2 * l_inter + config.w3 * l_mask
        return Terms(cls + reg, cls, reg, logits)

    trace = descend(variables, objective, config.steps, config.step_size, config.optimizer)
    with torch.no_grad():
        final = objective()
    if not torch.isfinite(final.total):
        raise OptimizationError(len(trace))

    mask, pattern = variables.export()
    asr = success_rate(model, holdout_images(holdout, benign_batch, target_class), mask, pattern, target_class)
    result = ReversalResult(
        target_class=target_class,
        mask=mask,
        pattern=ImageTensor(pattern),
        l1_norm=float(mask.astype(np.float64).sum()),
        cls_term=float(final.cls),
        reg_term=float(final.reg),
        attack_success_of_reversed=asr,
        method='abs',
        config_digest=config.digest(),
        trace=tuple(trace),
    )
    logger.info(
        f"ABS class {target_class} via neuron {layer}:{unit}: score {asr:.3f}, "
        f"norm {result.l1_norm:.2f}, objective {result.objective:.4f}"
    )
    return result
