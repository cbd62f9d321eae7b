"""
Small convolutional image classifier F_w.

Images travel through the public API in (N, H, W, C) layout with values in
[0, 1]; the module converts to channels-first internally. A model is a stack
of blocks: conv blocks (conv -> ReLU -> 2x2 max-pool), hidden dense blocks
(flatten -> linear -> ReLU) and a final dense block producing K logits.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from src.core.types import ImageTensor, RngSeed

logger = logging.getLogger(__name__)

DEFAULT_CONV_CHANNELS = (16, 32)
DEFAULT_DENSE_UNITS = (32,)
PREDICT_BATCH = 512


@dataclass(frozen=True)
class LayerSpec:
    """One block of the architecture: `kind` is 'conv' or 'dense'."""

    kind: str
    units: int
    kernel: int = 3

    def __post_init__(self):
        if self.kind not in ('conv', 'dense'):
            raise ValueError(f"layer kind must be 'conv' or 'dense', got {self.kind!r}")
        if self.units < 1 or self.kernel < 1:
            raise ValueError(f"layer units and kernel must be positive, got {self.units}/{self.kernel}")


@dataclass(frozen=True)
class ArchitectureSpec:
    """
    Architecture descriptor.

    `layers` lists the hidden blocks; the K-way output layer is implicit and
    always last.
    """

    input_shape: Tuple[int, int, int]
    num_classes: int
    layers: Tuple[LayerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'input_shape', tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, 'layers', tuple(self.layers))
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ValueError(f"input_shape must be a positive (H, W, C), got {self.input_shape}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        seen_dense = False
        for layer in self.layers:
            if layer.kind == 'dense':
                seen_dense = True
            elif seen_dense:
                raise ValueError("conv layers must precede dense layers")

    @classmethod
    def default(cls, input_shape: Sequence[int], num_classes: int) -> 'ArchitectureSpec':
        """Two conv blocks and one hidden dense block."""
        layers = [LayerSpec('conv', units) for units in DEFAULT_CONV_CHANNELS]
        layers += [LayerSpec('dense', units) for units in DEFAULT_DENSE_UNITS]
        return cls(tuple(input_shape), num_classes, tuple(layers))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_shape': list(self.input_shape),
            'num_classes': self.num_classes,
            'layers': [{'kind': l.kind, 'units': l.units, 'kernel': l.kernel} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'ArchitectureSpec':
        return cls(
            input_shape=tuple(doc['input_shape']),
            num_classes=int(doc['num_classes']),
            layers=tuple(LayerSpec(**layer) for layer in doc['layers']),
        )


def _build_blocks(spec: ArchitectureSpec) -> Tuple[nn.ModuleList, List[Tuple[int, ...]]]:
    """Blocks plus the per-sample output shape of each."""
    height, width, channels = spec.input_shape
    shape: Tuple[int, ...] = (channels, height, width)
    blocks, shapes = [], []

    for layer in spec.layers:
        if layer.kind == 'conv':
            conv = nn.Conv2d(shape[0], layer.units, layer.kernel, padding=layer.kernel // 2)
            out_h = shape[1] + 2 * (layer.kernel // 2) - layer.kernel + 1
            out_w = shape[2] + 2 * (layer.kernel // 2) - layer.kernel + 1
            if min(out_h, out_w) >= 2:
                blocks.append(nn.Sequential(conv, nn.ReLU(), nn.MaxPool2d(2)))
                shape = (layer.units, out_h // 2, out_w // 2)
            else:
                blocks.append(nn.Sequential(conv, nn.ReLU()))
                shape = (layer.units, out_h, out_w)
        else:
            blocks.append(nn.Sequential(nn.Flatten(), nn.Linear(int(np.prod(shape)), layer.units), nn.ReLU()))
            shape = (layer.units,)
        shapes.append(shape)

    blocks.append(nn.Sequential(nn.Flatten(), nn.Linear(int(np.prod(shape)), spec.num_classes)))
    shapes.append((spec.num_classes,))
    return nn.ModuleList(blocks), shapes


class Classifier(nn.Module):
    """
    Differentiable K-way classifier.

    Args:
        architecture: Layer descriptor
        seed: Seed of the parameter initialisation. The global torch RNG is
            left untouched.

    Attributes:
        history: Per-epoch training records appended by `train`
    """

    def __init__(self, architecture: ArchitectureSpec, seed: Optional[RngSeed] = None):
        super().__init__()
        self.architecture = architecture
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed((seed or RngSeed(0)).torch_seed())
            self.blocks, self.block_shapes = _build_blocks(architecture)
        self.history: List[Dict[str, float]] = []
        self.eval()

    @property
    def num_classes(self) -> int:
        return self.architecture.num_classes

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return self.architecture.input_shape

    @property
    def num_layers(self) -> int:
        """Blocks including the output layer."""
        return len(self.blocks)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def to_input(self, images) -> torch.Tensor:
        """Tensor in the model's dtype from an ImageTensor, array or tensor in (N,)H,W,C layout."""
        if isinstance(images, ImageTensor):
            images = images.data
        if not isinstance(images, torch.Tensor):
            images = torch.tensor(np.asarray(images))
        images = images.to(self.dtype)
        if images.dim() == 3:
            images = images.unsqueeze(0)
        if tuple(images.shape[1:]) != self.input_shape:
            raise ValueError(f"expected images of shape {self.input_shape}, got {tuple(images.shape[1:])}")
        return images

    def features(self, x: torch.Tensor, upto: int) -> torch.Tensor:
        """Output of block `upto` (inclusive) for NHWC input."""
        self._check_layer(upto)
        h = x.permute(0, 3, 1, 2)
        for block in self.blocks[:upto + 1]:
            h = block(h)
        return h

    def head(self, h: torch.Tensor, start: int) -> torch.Tensor:
        """Run blocks from `start` onward on an intermediate activation."""
        for block in self.blocks[start:]:
            h = block(h)
        return h

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Logits of shape (N, K) for NHWC input."""
        return self.features(x, self.num_layers - 1)

    def predict_logits(self, images) -> np.ndarray:
        """Logits for a batch of images, computed without gradients."""
        x = self.to_input(images)
        with torch.no_grad():
            chunks = [self(x[i:i + PREDICT_BATCH]) for i in range(0, x.shape[0], PREDICT_BATCH)]
        if not chunks:
            return np.zeros((0, self.num_classes))
        return torch.cat(chunks).cpu().numpy()

    def predict(self, images) -> np.ndarray:
        """Hard predictions (argmax of the logits)."""
        return np.argmax(self.predict_logits(images), axis=1)

    def _check_layer(self, layer_index: int) -> None:
        if not 0 <= layer_index < self.num_layers:
            raise IndexError(f"layer_index {layer_index} out of range for {self.num_layers} layers")

    def layer_width(self, layer_index: int) -> int:
        """Neurons of a layer: channels for conv blocks, units for dense blocks."""
        self._check_layer(layer_index)
        return self.block_shapes[layer_index][0]


def activations(model: Classifier, x, layer_index: int) -> np.ndarray:
    """
    Post-nonlinearity activations of one layer, flattened per sample.

    Args:
        model: Classifier
        x: ImageTensor, (H, W, C) array or (N, H, W, C) batch
        layer_index: Block index; the last index is the logits layer

    Returns:
        Vector for a single image, (N, D) matrix for a batch

    Raises:
        IndexError: If the layer index is out of range
    """
    model._check_layer(layer_index)
    single = isinstance(x, ImageTensor) or np.ndim(x) == 3
    with torch.no_grad():
        h = model.features(model.to_input(x), layer_index)
    out = h.reshape(h.shape[0], -1).cpu().numpy()
    return out[0] if single else out


def build_classifier(input_shape: Sequence[int], num_classes: int, seed: RngSeed,
                     architecture: Optional[ArchitectureSpec] = None) -> Classifier:
    """Default-architecture classifier unless one is given."""
    model = Classifier(architecture or ArchitectureSpec.default(input_shape, num_classes), seed)
    logger.debug(f"Built classifier with {model.parameter_count()} parameters")
    return model
