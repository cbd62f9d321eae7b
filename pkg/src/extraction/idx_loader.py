"""
Module for loading IDX (MNIST / Fashion-MNIST layout) image and label files.
"""

import gzip
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from src.core.types import LabeledDataset, SplitTag, one_hot_matrix
from src.utils.errors import DatasetFormatError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path: Path) -> bytes:
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")
    opener = gzip.open if path.suffix == '.gz' else open
    with opener(path, 'rb') as file:
        return file.read()


def _parse_images(raw: bytes) -> np.ndarray:
    if len(raw) < 16:
        raise DatasetFormatError('images.header', f"expected 16 header bytes, got {len(raw)}")
    magic, count, rows, cols = struct.unpack('>IIII', raw[:16])
    if magic != IMAGES_MAGIC:
        raise DatasetFormatError('images.magic', f"expected 0x{IMAGES_MAGIC:08x}, got 0x{magic:08x}")
    if rows == 0 or cols == 0:
        raise DatasetFormatError('images.dims', f"image dimensions must be positive, got {rows}x{cols}")
    expected = count * rows * cols
    payload = raw[16:]
    if len(payload) != expected:
        raise DatasetFormatError(
            'images.payload', f"expected {expected} pixel bytes for {count} images, got {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols, 1)
    return pixels.astype(np.float32) / np.float32(255.0)


def _parse_labels(raw: bytes) -> np.ndarray:
    if len(raw) < 8:
        raise DatasetFormatError('labels.header', f"expected 8 header bytes, got {len(raw)}")
    magic, count = struct.unpack('>II', raw[:8])
    if magic != LABELS_MAGIC:
        raise DatasetFormatError('labels.magic', f"expected 0x{LABELS_MAGIC:08x}, got 0x{magic:08x}")
    payload = raw[8:]
    if len(payload) != count:
        raise DatasetFormatError('labels.payload', f"expected {count} label bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def load_idx_dataset(images_path: Union[str, Path], labels_path: Union[str, Path],
                     num_classes: Optional[int] = None) -> LabeledDataset:
    """
    Load an IDX image file and its label file as a dataset.

    Args:
        images_path: Path to the images file (magic 0x00000803), optionally gzipped
        labels_path: Path to the labels file (magic 0x00000801), optionally gzipped
        num_classes: Number of classes K. Defaults to max(label) + 1.

    Returns:
        Dataset with pixels scaled to [0, 1] and one-hot labels

    Raises:
        FileNotFoundError: If a file does not exist
        DatasetFormatError: On bad magic, truncated payload or count mismatch
    """
    images_path = Path(images_path).resolve()
    labels_path = Path(labels_path).resolve()
    logger.info(f"Loading IDX dataset from {images_path} and {labels_path}")

    images = _parse_images(_read_bytes(images_path))
    labels = _parse_labels(_read_bytes(labels_path))

    if labels.size != images.shape[0]:
        raise DatasetFormatError(
            'count', f"{images.shape[0]} images but {labels.size} labels"
        )

    if num_classes is None:
        num_classes = max(int(labels.max()) + 1 if labels.size else 2, 2)
    elif labels.size and labels.max() >= num_classes:
        raise DatasetFormatError('labels.value', f"label {labels.max()} out of range for {num_classes} classes")

    dataset = LabeledDataset(
        images=images,
        labels=one_hot_matrix(labels, num_classes),
        num_classes=num_classes,
        split_tag=SplitTag.BENIGN_TRAIN,
    )
    logger.info(f"Loaded {len(dataset)} samples of shape {dataset.image_shape}, K={num_classes}")
    return dataset


def dataset_summary(dataset: LabeledDataset) -> Dict[str, Any]:
    """
    Generate summary statistics for a dataset.

    Args:
        dataset: Dataset to summarise

    Returns:
        Dictionary containing summary statistics
    """
    height, width, channels = dataset.image_shape
    return {
        'total_samples': len(dataset),
        'num_classes': dataset.num_classes,
        'image_shape': {'height': height, 'width': width, 'channels': channels},
        'split_tag': dataset.split_tag.value,
        'class_counts': dataset.class_counts().tolist(),
        'mean_pixel': float(dataset.images.mean()) if len(dataset) else 0.0,
    }
