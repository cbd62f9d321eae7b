"""
Neural Cleanse trigger reverse engineering.

For a candidate target class the defense searches a universal trigger
(mask m, pattern P) shared across a batch of benign images, minimising

    L_obj = CE(y_t, F(x_bd)) + lambda * ||m||_1,   x_bd = (1 - m) * x + m * P

over sigmoid reparameterisations of m and P. Every result carries the
breakdown L_obj = L_cls + R.
"""

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from src.core.types import ImageTensor, LabeledDataset, RngSeed
from src.models.classifier import Classifier
from src.transformation.triggers import apply_patch, decode_array, encode_array
from src.utils.errors import OptimizationError

logger = logging.getLogger(__name__)

MAX_BACKTRACK = 30
ARMIJO_C = 1e-4
ADAPTIVE_SUCCESS = 0.99
ADAPTIVE_UP = 1.5
ADAPTIVE_DOWN = 1.5 ** 1.5


class LambdaSchedule(str, Enum):
    FIXED = 'fixed'
    ADAPTIVE = 'adaptive'


class ReversalOptimizer(str, Enum):
    ADAM = 'adam'
    LINE_SEARCH = 'line_search'


@dataclass(frozen=True)
class ReversalConfig:
    """
    Neural Cleanse settings.

    Attributes:
        lambda_weight: Weight of the mask L1 norm
        steps: Descent steps per restart
        step_size: Adam learning rate, or initial trial step of the line search
        restarts: Independent random initialisations; the lowest objective wins
        lambda_schedule: 'fixed' or 'adaptive'
        optimizer: 'adam' or 'line_search' (monotone Armijo backtracking)
        batch_size: Benign samples used as x
        patience: Steps of sustained success/failure before an adaptive lambda change
        seed: Seed of the initialisations
    """

    lambda_weight: float = 0.01
    steps: int = 200
    step_size: float = 0.1
    restarts: int = 1
    lambda_schedule: LambdaSchedule = LambdaSchedule.FIXED
    optimizer: ReversalOptimizer = ReversalOptimizer.ADAM
    batch_size: int = 64
    patience: int = 5
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        object.__setattr__(self, 'lambda_schedule', LambdaSchedule(self.lambda_schedule))
        object.__setattr__(self, 'optimizer', ReversalOptimizer(self.optimizer))
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lambda_weight < 0:
            raise ValueError(f"lambda_weight must be >= 0, got {self.lambda_weight}")
        if self.restarts < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("restarts, batch_size and patience must be >= 1")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda_weight': self.lambda_weight,
            'steps': self.steps,
            'step_size': self.step_size,
            'restarts': self.restarts,
            'lambda_schedule': self.lambda_schedule.value,
            'optimizer': self.optimizer.value,
            'batch_size': self.batch_size,
            'patience': self.patience,
            'seed': self.seed.seed,
        }

    def digest(self) -> str:
        return config_digest('nc', self.to_dict())


def config_digest(method: str, doc: Dict[str, Any]) -> str:
    """Short content hash identifying a defense configuration."""
    payload = json.dumps({'method': method, **doc}, sort_keys=True)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


@dataclass(frozen=True)
class ReversalResult:
    """
    Reconstructed trigger for one class with its objective breakdown.

    `objective` is always the float sum of `cls_term` and `reg_term`.
    """

    target_class: int
    mask: np.ndarray
    pattern: ImageTensor
    l1_norm: float
    cls_term: float
    reg_term: float
    attack_success_of_reversed: float
    method: str = 'nc'
    config_digest: str = ''
    lambda_weight: float = 0.0
    trace: Tuple[float, ...] = ()
    objective: float = field(init=False)

    def __post_init__(self):
        mask = np.array(self.mask, dtype=np.float32, copy=True)
        if mask.ndim != 2 or mask.min() < 0.0 or mask.max() > 1.0:
            raise ValueError("mask must be a 2-D array with entries in [0, 1]")
        mask.setflags(write=False)
        object.__setattr__(self, 'mask', mask)
        if not isinstance(self.pattern, ImageTensor):
            object.__setattr__(self, 'pattern', ImageTensor(self.pattern))
        if self.l1_norm < 0:
            raise ValueError(f"l1_norm must be >= 0, got {self.l1_norm}")
        object.__setattr__(self, 'trace', tuple(float(v) for v in self.trace))
        object.__setattr__(self, 'objective', float(self.cls_term) + float(self.reg_term))

    def to_dict(self, include_arrays: bool = True) -> Dict[str, Any]:
        doc = {
            'target_class': self.target_class,
            'method': self.method,
            'config_digest': self.config_digest,
            'lambda_weight': self.lambda_weight,
            'l1_norm': self.l1_norm,
            'cls_term': self.cls_term,
            'reg_term': self.reg_term,
            'objective': self.objective,
            'attack_success_of_reversed': self.attack_success_of_reversed,
            'steps_run': len(self.trace),
        }
        if include_arrays:
            doc['mask'] = encode_array(self.mask)
            doc['pattern'] = encode_array(self.pattern.data)
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'ReversalResult':
        return cls(
            target_class=int(doc['target_class']),
            mask=decode_array(doc['mask']),
            pattern=ImageTensor(decode_array(doc['pattern'])),
            l1_norm=float(doc['l1_norm']),
            cls_term=float(doc['cls_term']),
            reg_term=float(doc['reg_term']),
            attack_success_of_reversed=float(doc['attack_success_of_reversed']),
            method=doc.get('method', 'nc'),
            config_digest=doc.get('config_digest', ''),
            lambda_weight=float(doc.get('lambda_weight', 0.0)),
        )


class Terms(NamedTuple):
    total: torch.Tensor
    cls: torch.Tensor
    reg: torch.Tensor
    logits: torch.Tensor


class TriggerVariables:
    """Unconstrained mask/pattern parameters squashed through a sigmoid."""

    def __init__(self, height: int, width: int, channels: int, rng: np.random.Generator,
                 dtype: torch.dtype):
        self.mask_param = torch.tensor(rng.normal(-1.0, 0.5, size=(height, width)), dtype=dtype,
                                       requires_grad=True)
        self.pattern_param = torch.tensor(rng.normal(0.0, 1.0, size=(height, width, channels)),
                                          dtype=dtype, requires_grad=True)

    @property
    def params(self) -> List[torch.Tensor]:
        return [self.mask_param, self.pattern_param]

    def mask(self) -> torch.Tensor:
        return torch.sigmoid(self.mask_param)

    def pattern(self) -> torch.Tensor:
        return torch.sigmoid(self.pattern_param)

    def stamp(self, x: torch.Tensor) -> torch.Tensor:
        m = self.mask()[None, :, :, None]
        return (1 - m) * x + m * self.pattern()[None]

    def export(self) -> Tuple[np.ndarray, np.ndarray]:
        with torch.no_grad():
            mask = self.mask().cpu().numpy().astype(np.float32)
            pattern = self.pattern().cpu().numpy().astype(np.float32)
        return np.clip(mask, 0.0, 1.0), np.clip(pattern, 0.0, 1.0)


StepHook = Callable[[int, Terms], None]


def descend(variables: TriggerVariables, objective: Callable[[], Terms], steps: int, step_size: float,
            optimizer: ReversalOptimizer, on_step: Optional[StepHook] = None) -> List[float]:
    """
    Minimise `objective` over the trigger variables.

    Adam takes a fixed number of steps. The line search takes gradient steps
    accepted only under the Armijo condition and stops once no trial step
    decreases the objective; its trace is non-increasing.

    Returns:
        Objective value before every accepted step

    Raises:
        OptimizationError: If the objective becomes non-finite
    """
    params = variables.params
    trace: List[float] = []
    adam = torch.optim.Adam(params, lr=step_size) if optimizer is ReversalOptimizer.ADAM else None

    for step in range(steps):
        terms = objective()
        if not torch.isfinite(terms.total):
            raise OptimizationError(step)
        grads = torch.autograd.grad(terms.total, params)
        value = terms.total.item()

        if adam is not None:
            for p, g in zip(params, grads):
                p.grad = g
            adam.step()
        else:
            originals = [p.detach().clone() for p in params]
            grad_sq = sum(float((g * g).sum()) for g in grads)
            if grad_sq == 0.0:
                break
            t = step_size
            accepted = False
            for _ in range(MAX_BACKTRACK):
                with torch.no_grad():
                    for p, p0, g in zip(params, originals, grads):
                        p.copy_(p0 - t * g)
                    trial = objective().total.item()
                if math.isfinite(trial) and trial <= value - ARMIJO_C * t * grad_sq:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                with torch.no_grad():
                    for p, p0 in zip(params, originals):
                        p.copy_(p0)
                break

        trace.append(value)
        if on_step is not None:
            on_step(step, terms)
    return trace


def success_rate(model: Classifier, images: np.ndarray, mask: np.ndarray, pattern: np.ndarray,
                 target_class: int) -> float:
    """Fraction of images classified to the target after stamping (mask, pattern)."""
    if len(images) == 0:
        return 0.0
    stamped = apply_patch(images, mask, pattern)
    return float(np.mean(model.predict(stamped) == target_class))


def holdout_images(holdout: Optional[LabeledDataset], fallback: LabeledDataset, target_class: int) -> np.ndarray:
    """Held-out images whose true class is not the target."""
    source = holdout if holdout is not None and len(holdout) else fallback
    if source is fallback:
        logger.warning("empty held-out batch; measuring reversed-trigger success on the optimisation batch")
    keep = source.hard_labels != target_class
    if not np.any(keep):
        logger.warning(f"held-out batch holds only class {target_class}; using it unfiltered")
        return source.images
    return source.images[keep]


def reverse_trigger_nc(model: Classifier, target_class: int, benign_batch: LabeledDataset,
                       config: ReversalConfig, holdout: Optional[LabeledDataset] = None) -> ReversalResult:
    """
    Reconstruct the cheapest trigger flipping the batch to `target_class`.

    Args:
        model: Frozen classifier
        target_class: Candidate target class
        benign_batch: Benign samples; the first `config.batch_size` are optimised over
        config: Reversal settings
        holdout: Samples for the reversed trigger's attack success (defaults to the batch)

    Returns:
        Best-of-restarts result

    Raises:
        ValueError: If the batch is empty or the class is out of range
        OptimizationError: If the objective becomes non-finite
    """
    if len(benign_batch) == 0:
        raise ValueError("benign batch must not be empty")
    if not 0 <= target_class < model.num_classes:
        raise ValueError(f"target_class {target_class} out of range for {model.num_classes} classes")

    batch = benign_batch.head(config.batch_size)
    x = model.to_input(batch.images)
    height, width, channels = model.input_shape
    target = torch.full((x.shape[0],), target_class, dtype=torch.long)

    best: Optional[Tuple[float, float, float, np.ndarray, np.ndarray, List[float], float]] = None
    for restart in range(config.restarts):
        variables = TriggerVariables(height, width, channels,
                                     config.seed.generator(0x9c, target_class, restart), model.dtype)
        state = {'lambda': config.lambda_weight, 'up': 0, 'down': 0}

        def objective() -> Terms:
            logits = model(variables.stamp(x))
            cls = F.cross_entropy(logits, target)
            reg = state['lambda'] * variables.mask().sum()
            return Terms(cls + reg, cls, reg, logits)

        def adapt(step: int, terms: Terms) -> None:
            asr = float((terms.logits.argmax(dim=1) == target).float().mean())
            if asr >= ADAPTIVE_SUCCESS:
                state['up'], state['down'] = state['up'] + 1, 0
                if state['up'] >= config.patience:
                    state['lambda'] *= ADAPTIVE_UP
                    state['up'] = 0
            else:
                state['up'], state['down'] = 0, state['down'] + 1
                if state['down'] >= config.patience:
                    state['lambda'] /= ADAPTIVE_DOWN
                    state['down'] = 0

        hook = adapt if config.lambda_schedule is LambdaSchedule.ADAPTIVE else None
        trace = descend(variables, objective, config.steps, config.step_size, config.optimizer, hook)

        with torch.no_grad():
            final = objective()
        if not torch.isfinite(final.total):
            raise OptimizationError(len(trace))
        mask, pattern = variables.export()
        cls_term = float(final.cls)
        reg_term = state['lambda'] * float(mask.astype(np.float64).sum())
        candidate = (cls_term + reg_term, cls_term, reg_term, mask, pattern, trace, state['lambda'])
        logger.debug(f"class {target_class} restart {restart}: objective {candidate[0]:.4f}")
        if best is None or candidate[0] < best[0]:
            best = candidate

    _, cls_term, reg_term, mask, pattern, trace, final_lambda = best
    asr = success_rate(model, holdout_images(holdout, benign_batch, target_class), mask, pattern, target_class)
    result = ReversalResult(
        target_class=target_class,
        mask=mask,
        pattern=ImageTensor(pattern),
        l1_norm=float(mask.astype(np.float64).sum()),
        cls_term=cls_term,
        reg_term=reg_term,
        attack_success_of_reversed=asr,
        method='nc',
        config_digest=config.digest(),
        lambda_weight=final_lambda,
        trace=tuple(trace),
    )
    logger.info(
        f"NC class {target_class}: norm {result.l1_norm:.2f}, L_cls {cls_term:.4f}, "
        f"R {reg_term:.4f}, reversed ASR {asr:.3f}"
    )
    return result


def reverse_all_classes(model: Classifier, benign_batch: LabeledDataset, config: ReversalConfig,
                        holdout: Optional[LabeledDataset] = None, jobs: int = 1,
                        classes: Optional[Sequence[int]] = None) -> List[ReversalResult]:
    """Run NC for every class (or the given ones); results ordered by class index."""
    classes = list(range(model.num_classes)) if classes is None else list(classes)

    def run(cls: int) -> ReversalResult:
        return reverse_trigger_nc(model, cls, benign_batch, config, holdout)

    if jobs <= 1:
        return [run(cls) for cls in classes]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, classes))
