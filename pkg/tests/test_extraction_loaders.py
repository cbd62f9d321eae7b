import gzip
import struct

import numpy as np
import pytest

from src.core.types import RngSeed
from src.extraction import dataset_summary, generate_synthetic_dataset, load_idx_dataset
from src.utils.errors import DatasetFormatError


def _write_idx(tmp_path, images: np.ndarray, labels: np.ndarray, image_magic: int = 0x803,
               label_magic: int = 0x801, gzipped: bool = False):
    count, rows, cols = images.shape
    image_bytes = struct.pack('>IIII', image_magic, count, rows, cols) + images.astype(np.uint8).tobytes()
    label_bytes = struct.pack('>II', label_magic, labels.size) + labels.astype(np.uint8).tobytes()
    suffix = '.gz' if gzipped else ''
    images_path, labels_path = tmp_path / f'images-idx3-ubyte{suffix}', tmp_path / f'labels-idx1-ubyte{suffix}'
    opener = gzip.open if gzipped else open
    with opener(images_path, 'wb') as file:
        file.write(image_bytes)
    with opener(labels_path, 'wb') as file:
        file.write(label_bytes)
    return images_path, labels_path


@pytest.fixture
def idx_arrays():
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, size=(6, 4, 5)), np.array([0, 1, 2, 0, 1, 2])


def test_load_idx_scales_pixels_and_one_hot_labels(tmp_path, idx_arrays):
    images, labels = idx_arrays
    dataset = load_idx_dataset(*_write_idx(tmp_path, images, labels))
    assert dataset.image_shape == (4, 5, 1)
    assert dataset.num_classes == 3
    np.testing.assert_allclose(dataset.images[..., 0], images / 255.0, atol=1e-6)
    assert dataset.hard_labels.tolist() == labels.tolist()


def test_load_idx_reads_gzip(tmp_path, idx_arrays):
    dataset = load_idx_dataset(*_write_idx(tmp_path, *idx_arrays, gzipped=True), num_classes=10)
    assert dataset.num_classes == 10
    assert len(dataset) == 6


def test_load_idx_bad_magic(tmp_path, idx_arrays):
    with pytest.raises(DatasetFormatError) as excinfo:
        load_idx_dataset(*_write_idx(tmp_path, *idx_arrays, image_magic=0x804))
    assert excinfo.value.field == 'images.magic'


def test_load_idx_truncated_payload(tmp_path, idx_arrays):
    images_path, labels_path = _write_idx(tmp_path, *idx_arrays)
    images_path.write_bytes(images_path.read_bytes()[:-3])
    with pytest.raises(DatasetFormatError) as excinfo:
        load_idx_dataset(images_path, labels_path)
    assert excinfo.value.field == 'images.payload'


def test_load_idx_count_mismatch(tmp_path, idx_arrays):
    images, labels = idx_arrays
    with pytest.raises(DatasetFormatError) as excinfo:
        load_idx_dataset(*_write_idx(tmp_path, images, labels[:5]))
    assert excinfo.value.field == 'count'


def test_load_idx_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_idx_dataset(tmp_path / 'nope', tmp_path / 'nope-labels')


def test_synthetic_dataset_is_deterministic():
    first = generate_synthetic_dataset(3, 5, 6, 6, RngSeed(4), channels=3)
    second = generate_synthetic_dataset(3, 5, 6, 6, RngSeed(4), channels=3)
    np.testing.assert_array_equal(first.images, second.images)
    assert first.image_shape == (6, 6, 3)
    assert first.class_counts().tolist() == [5, 5, 5]
    assert first.images.min() >= 0.0 and first.images.max() <= 1.0


def test_synthetic_dataset_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_synthetic_dataset(1, 5, 6, 6, RngSeed(0))
    with pytest.raises(ValueError):
        generate_synthetic_dataset(3, 0, 6, 6, RngSeed(0))


def test_dataset_summary(tiny_dataset):
    summary = dataset_summary(tiny_dataset)
    assert summary['total_samples'] == 80
    assert summary['class_counts'] == [20, 20, 20, 20]
    assert summary['image_shape'] == {'height': 8, 'width': 8, 'channels': 1}
