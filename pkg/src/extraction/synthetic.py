"""
Procedural K-class image dataset, a desk-scale stand-in for Fashion-MNIST.

Each class owns a motif made of Gaussian blobs: one anchor blob placed on a
ring at a class-specific angle plus two freely drawn blobs, each with its own
per-channel colour. Samples jitter the blob centres, rescale the amplitude
and add pixel noise.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.core.types import LabeledDataset, RngSeed, SplitTag, one_hot_matrix

logger = logging.getLogger(__name__)

BLOBS_PER_CLASS = 3
CENTER_JITTER = 0.6      # pixels (std)
AMPLITUDE_RANGE = (0.85, 1.15)
NOISE_STD = 0.04


@dataclass(frozen=True)
class _Motif:
    centers: np.ndarray  # (B, 2) as (row, col) in pixels
    sigmas: np.ndarray   # (B,)
    colors: np.ndarray   # (B, C)


def _draw_motif(cls: int, num_classes: int, height: int, width: int, channels: int,
                rng: np.random.Generator) -> _Motif:
    size = min(height, width)
    angle = 2.0 * np.pi * cls / num_classes
    anchor = np.array([
        (0.5 + 0.3 * np.sin(angle)) * (height - 1),
        (0.5 + 0.3 * np.cos(angle)) * (width - 1),
    ])
    free = rng.uniform(0.15, 0.85, size=(BLOBS_PER_CLASS - 1, 2)) * np.array([height - 1, width - 1])
    return _Motif(
        centers=np.vstack([anchor, free]),
        sigmas=rng.uniform(0.10, 0.22, size=BLOBS_PER_CLASS) * size,
        colors=rng.uniform(0.4, 1.0, size=(BLOBS_PER_CLASS, channels)),
    )


def _render(motif: _Motif, count: int, height: int, width: int,
            rng: np.random.Generator) -> np.ndarray:
    rows = np.arange(height, dtype=np.float64)[None, None, :, None]
    cols = np.arange(width, dtype=np.float64)[None, None, None, :]

    centers = motif.centers[None] + rng.normal(0.0, CENTER_JITTER, size=(count, BLOBS_PER_CLASS, 2))
    amplitude = rng.uniform(*AMPLITUDE_RANGE, size=(count, 1, 1, 1))

    dist2 = (rows - centers[..., 0, None, None]) ** 2 + (cols - centers[..., 1, None, None]) ** 2
    bumps = np.exp(-dist2 / (2.0 * motif.sigmas[None, :, None, None] ** 2))    # (N, B, H, W)
    images = np.einsum('nbhw,bc->nhwc', bumps, motif.colors) * amplitude
    images += rng.normal(0.0, NOISE_STD, size=images.shape)
    return np.clip(images, 0.0, 1.0)


def generate_synthetic_dataset(num_classes: int, per_class: int, height: int, width: int,
                               seed: RngSeed, channels: int = 1) -> LabeledDataset:
    """
    Draw a procedural K-class dataset.

    Args:
        num_classes: Number of classes K (>= 2)
        per_class: Samples per class (>= 1)
        height: Image height in pixels
        width: Image width in pixels
        seed: Seed; identical seeds give bit-identical datasets
        channels: Image channels

    Returns:
        Dataset of K * per_class samples with one-hot labels, ordered by class

    Raises:
        ValueError: On invalid arguments
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if height < 1 or width < 1 or channels < 1:
        raise ValueError(f"image dimensions must be positive, got {height}x{width}x{channels}")

    rng = seed.generator(0x5e7)
    motifs = [_draw_motif(cls, num_classes, height, width, channels, rng) for cls in range(num_classes)]
    images = np.concatenate(
        [_render(motif, per_class, height, width, rng) for motif in motifs], axis=0
    ).astype(np.float32)
    labels = one_hot_matrix(np.repeat(np.arange(num_classes), per_class), num_classes)

    logger.info(
        f"Generated synthetic dataset: {num_classes} classes x {per_class} samples, "
        f"{height}x{width}x{channels}"
    )
    return LabeledDataset(images, labels, num_classes, SplitTag.BENIGN_TRAIN, seed.seed)
