"""
Value types shared by every other package: images, labels, datasets, seeds.

All types are immutable after construction. Arrays handed to a constructor
are copied and flagged read-only so instances can be shared across workers.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

IMAGE_DTYPE = np.float32
LABEL_DTYPE = np.float64
LABEL_SUM_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


class SplitTag(str, Enum):
    """Role of a dataset in the poisoning pipeline."""

    BENIGN_TRAIN = 'benign_train'
    POISON_SOURCE = 'poison_source'
    TEST = 'test'


@dataclass(frozen=True)
class RngSeed:
    """A 64-bit seed. Identical seeds give bit-identical pipelines."""

    seed: int

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ValueError(f"seed must be an integer, got {type(self.seed).__name__}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, 'seed', int(self.seed))

    def generator(self, *keys: int) -> np.random.Generator:
        """Independent numpy generator for the stream identified by keys."""
        return np.random.default_rng([self.seed, *[int(k) for k in keys]])

    def derive(self, *keys: int) -> 'RngSeed':
        """Child seed for the stream identified by keys."""
        state = np.random.SeedSequence([self.seed, *[int(k) for k in keys]]).generate_state(2, dtype=np.uint32)
        return RngSeed((int(state[0]) << 32) | int(state[1]))

    def torch_seed(self) -> int:
        """Seed folded into the range torch.manual_seed accepts."""
        return self.seed % (2 ** 63)


@dataclass(frozen=True)
class ImageTensor:
    """A single H×W×C image with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=IMAGE_DTYPE)
        if data.ndim != 3:
            raise ValueError(f"image must have shape (height, width, channels), got {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"image dimensions must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, 'data', _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def constant(cls, height: int, width: int, channels: int, value: float) -> 'ImageTensor':
        return cls(np.full((height, width, channels), value, dtype=IMAGE_DTYPE))


@dataclass(frozen=True)
class SoftLabel:
    """A probability vector over K classes; one-hot labels are the degenerate case."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=LABEL_DTYPE)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError(f"label must be a vector of length >= 2, got shape {probs.shape}")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("label entries must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > LABEL_SUM_TOLERANCE:
            raise ValueError(f"label must sum to 1, got {probs.sum():.12f}")
        object.__setattr__(self, 'probs', _frozen(probs))

    @property
    def num_classes(self) -> int:
        return self.probs.size

    @property
    def hard_label(self) -> int:
        return int(np.argmax(self.probs))

    @classmethod
    def one_hot(cls, index: int, num_classes: int) -> 'SoftLabel':
        if not 0 <= index < num_classes:
            raise ValueError(f"class index {index} out of range for {num_classes} classes")
        probs = np.zeros(num_classes, dtype=LABEL_DTYPE)
        probs[index] = 1.0
        return cls(probs)


def one_hot_matrix(indices: Sequence[int], num_classes: int) -> np.ndarray:
    """Stack of one-hot rows for the given class indices."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= num_classes):
        raise ValueError(f"class indices must lie in [0, {num_classes})")
    labels = np.zeros((indices.size, num_classes), dtype=LABEL_DTYPE)
    labels[np.arange(indices.size), indices] = 1.0
    return labels


@dataclass(frozen=True)
class LabeledDataset:
    """
    Images of shape (N, H, W, C) with soft labels of shape (N, K).

    `seed` records the seed the dataset was drawn with, when known.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split_tag: SplitTag = SplitTag.BENIGN_TRAIN
    seed: int = field(default=0)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=IMAGE_DTYPE)
        labels = np.asarray(self.labels, dtype=LABEL_DTYPE)
        if images.ndim != 4:
            raise ValueError(f"images must have shape (N, H, W, C), got {images.shape}")
        if min(images.shape[1:]) < 1:
            raise ValueError(f"image dimensions must be positive, got {images.shape[1:]}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.shape != (images.shape[0], self.num_classes):
            raise ValueError(
                f"labels must have shape ({images.shape[0]}, {self.num_classes}), got {labels.shape}"
            )
        if labels.size and np.max(np.abs(labels.sum(axis=1) - 1.0)) > LABEL_SUM_TOLERANCE:
            raise ValueError("every label row must sum to 1")
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, 'images', _frozen(images))
        object.__setattr__(self, 'labels', _frozen(labels))
        object.__setattr__(self, 'split_tag', SplitTag(self.split_tag))

    def __len__(self) -> int:
        return self.images.shape[0]

    def __iter__(self) -> Iterator[Tuple[ImageTensor, SoftLabel]]:
        for image, label in zip(self.images, self.labels):
            yield ImageTensor(image), SoftLabel(label)

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.labels, axis=1)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.hard_labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int], split_tag: Optional[SplitTag] = None) -> 'LabeledDataset':
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            images=self.images[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            split_tag=split_tag or self.split_tag,
            seed=self.seed,
        )

    def head(self, count: int) -> 'LabeledDataset':
        return self.subset(np.arange(min(count, len(self))))

    @staticmethod
    def concat(parts: Sequence['LabeledDataset'], split_tag: SplitTag = SplitTag.BENIGN_TRAIN) -> 'LabeledDataset':
        """Concatenate datasets that share image dims and K."""
        parts = [p for p in parts]
        if not parts:
            raise ValueError("cannot concatenate an empty list of datasets")
        first = parts[0]
        for part in parts[1:]:
            if part.image_shape != first.image_shape or part.num_classes != first.num_classes:
                raise ValueError("datasets must share image dimensions and number of classes")
        return LabeledDataset(
            images=np.concatenate([p.images for p in parts], axis=0),
            labels=np.concatenate([p.labels for p in parts], axis=0),
            num_classes=first.num_classes,
            split_tag=split_tag,
            seed=first.seed,
        )
