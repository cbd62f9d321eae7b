import numpy as np
import pytest

from src.core import (
    ImageTensor,
    LabeledDataset,
    RngSeed,
    SoftLabel,
    SplitTag,
    one_hot_matrix,
    split_for_poisoning,
    train_test_split,
)
from src.extraction import generate_synthetic_dataset


def test_image_tensor_rejects_out_of_range_values():
    with pytest.raises(ValueError):
        ImageTensor(np.full((2, 2, 1), 1.5))
    with pytest.raises(ValueError):
        ImageTensor(np.zeros((2, 2)))


def test_soft_label_must_sum_to_one():
    SoftLabel(np.array([0.25, 0.75]))
    with pytest.raises(ValueError):
        SoftLabel(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        SoftLabel(np.array([1.2, -0.2]))


def test_one_hot_matrix_rejects_bad_index():
    assert one_hot_matrix([0, 2], 3).tolist() == [[1, 0, 0], [0, 0, 1]]
    with pytest.raises(ValueError):
        one_hot_matrix([3], 3)


def test_dataset_is_read_only(tiny_dataset):
    with pytest.raises(ValueError):
        tiny_dataset.images[0, 0, 0, 0] = 0.5


def test_rng_seed_streams_are_reproducible():
    seed = RngSeed(99)
    assert seed.generator(1, 2).random() == RngSeed(99).generator(1, 2).random()
    assert seed.generator(1).random() != seed.generator(2).random()
    assert seed.derive(3) == RngSeed(99).derive(3)
    with pytest.raises(ValueError):
        RngSeed(-1)


def test_split_for_poisoning_sizes_and_disjointness(tiny_dataset, seed):
    benign, source = split_for_poisoning(tiny_dataset, 0.1, seed)
    assert len(source) == 8
    assert len(benign) + len(source) == len(tiny_dataset)
    assert benign.split_tag is SplitTag.BENIGN_TRAIN
    assert source.split_tag is SplitTag.POISON_SOURCE
    # Stratified: 2 per class out of 4 classes
    assert source.class_counts().tolist() == [2, 2, 2, 2]
    merged = np.concatenate([benign.images, source.images]).reshape(len(tiny_dataset), -1)
    assert len(np.unique(merged, axis=0)) == len(tiny_dataset)


def test_split_for_poisoning_zero_fraction(tiny_dataset, seed):
    benign, source = split_for_poisoning(tiny_dataset, 0.0, seed)
    assert len(source) == 0
    assert len(benign) == len(tiny_dataset)


def test_split_is_deterministic(tiny_dataset, seed):
    first = split_for_poisoning(tiny_dataset, 0.25, seed)[1]
    second = split_for_poisoning(tiny_dataset, 0.25, seed)[1]
    np.testing.assert_array_equal(first.images, second.images)


def test_split_rejects_bad_fraction(tiny_dataset, seed):
    with pytest.raises(ValueError):
        split_for_poisoning(tiny_dataset, 1.0, seed)
    with pytest.raises(ValueError):
        train_test_split(tiny_dataset, 0.0, seed)


def test_train_test_split_is_stratified(tiny_dataset, seed):
    train, test = train_test_split(tiny_dataset, 0.25, seed)
    assert len(test) == 20
    assert test.class_counts().tolist() == [5, 5, 5, 5]
    assert test.split_tag is SplitTag.TEST
    assert len(train) == 60


def test_concat_requires_matching_shapes(tiny_dataset, random_batch):
    joined = LabeledDataset.concat([tiny_dataset, tiny_dataset.head(3)])
    assert len(joined) == len(tiny_dataset) + 3
    with pytest.raises(ValueError):
        LabeledDataset.concat([tiny_dataset, random_batch(2, height=4, width=4)])


def test_split_size_survives_float_rounding(seed):
    # 100 * 0.29 evaluates to 28.999999999999996
    dataset = generate_synthetic_dataset(4, 25, 8, 8, seed)
    benign, source = split_for_poisoning(dataset, 0.29, seed)
    assert len(source) == 29
    assert len(benign) == 71
    _, test = train_test_split(dataset, 0.29, seed)
    assert len(test) == 29


def test_dataset_iterates_validated_pairs(tiny_dataset):
    pairs = list(tiny_dataset.head(3))
    assert len(pairs) == 3
    image, label = pairs[0]
    assert isinstance(image, ImageTensor) and isinstance(label, SoftLabel)
    assert label.hard_label == 0
