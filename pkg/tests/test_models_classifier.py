import numpy as np
import pytest
import torch

from src.core.types import ImageTensor, LabeledDataset, RngSeed, SoftLabel, one_hot_matrix
from src.models import (
    ArchitectureSpec,
    Classifier,
    TrainConfig,
    activations,
    build_classifier,
    input_gradient,
    parameter_gradients,
    soft_cross_entropy,
    train,
)
from src.utils.errors import TrainingError


def test_same_seed_gives_same_parameters(small_architecture):
    first = Classifier(small_architecture, RngSeed(5))
    second = Classifier(small_architecture, RngSeed(5))
    for a, b in zip(first.parameters(), second.parameters()):
        assert torch.equal(a, b)


def test_default_architecture_shapes():
    model = build_classifier((16, 16, 1), 10, RngSeed(0))
    assert model.num_layers == 4
    assert model.predict_logits(np.zeros((3, 16, 16, 1))).shape == (3, 10)
    assert model.layer_width(0) == 16
    assert ArchitectureSpec.from_dict(model.architecture.to_dict()) == model.architecture


def test_to_input_rejects_wrong_shape(small_model):
    with pytest.raises(ValueError):
        small_model.to_input(np.zeros((2, 7, 8, 1)))


def test_activations_of_single_image_is_a_vector(small_model):
    image = ImageTensor(np.zeros((8, 8, 1)))
    assert activations(small_model, image, 1).shape == (8,)
    assert activations(small_model, np.zeros((3, 8, 8, 1)), 0).shape == (3, 4 * 4 * 4)
    with pytest.raises(IndexError):
        activations(small_model, image, 5)


def test_soft_cross_entropy_values():
    assert soft_cross_entropy([0.0, 0.0], SoftLabel(np.array([0.5, 0.5]))) == pytest.approx(np.log(2))
    assert soft_cross_entropy([100.0, 0.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        soft_cross_entropy([0.0, 0.0, 0.0], [1.0, 0.0])


def _loss64(model: Classifier, x: np.ndarray, labels: np.ndarray) -> float:
    logits = model.predict_logits(x).astype(np.float64)
    return float(np.sum([soft_cross_entropy(l, y) for l, y in zip(logits, labels)]))


def test_input_gradient_matches_finite_differences(small_architecture):
    model = Classifier(small_architecture, RngSeed(3)).double()
    rng = np.random.default_rng(0)
    x = rng.uniform(0.2, 0.8, size=(2, 8, 8, 1))
    labels = one_hot_matrix([1, 3], 4)
    grad = input_gradient(model, 'soft_cross_entropy', x, labels)
    h = 1e-6
    for _ in range(20):
        idx = tuple(int(rng.integers(0, s)) for s in x.shape)
        plus, minus = x.copy(), x.copy()
        plus[idx] += h
        minus[idx] -= h
        numeric = (_loss64(model, plus, labels) - _loss64(model, minus, labels)) / (2 * h)
        assert grad[idx] == pytest.approx(numeric, rel=1e-3, abs=1e-7)


def test_parameter_gradients_match_finite_differences(small_architecture):
    model = Classifier(small_architecture, RngSeed(8)).double()
    rng = np.random.default_rng(1)
    x = rng.uniform(0.2, 0.8, size=(3, 8, 8, 1))
    labels = one_hot_matrix([0, 1, 2], 4)
    grads = parameter_gradients(model, x, labels)
    params = dict(model.named_parameters())
    h = 1e-6
    names = list(params)
    for _ in range(20):
        name = names[int(rng.integers(0, len(names)))]
        flat = params[name].data.view(-1)
        i = int(rng.integers(0, flat.numel()))
        original = float(flat[i])
        flat[i] = original + h
        plus = _loss64(model, x, labels) / 3
        flat[i] = original - h
        minus = _loss64(model, x, labels) / 3
        flat[i] = original
        numeric = (plus - minus) / (2 * h)
        assert grads[name].reshape(-1)[i] == pytest.approx(numeric, rel=1e-3, abs=1e-7)


def test_target_logit_gradient_of_constant_model_is_zero():
    from tests.conftest import constant_model

    grad = input_gradient(constant_model(4, 1), 'target_logit', np.full((8, 8, 1), 0.5), 1)
    assert grad.shape == (8, 8, 1)
    assert np.all(grad == 0)


def test_training_fits_tiny_dataset(tiny_dataset, small_architecture):
    model = Classifier(small_architecture, RngSeed(0))
    config = TrainConfig(epochs=15, batch_size=16, learning_rate=1e-2, seed=RngSeed(1))
    train(model, tiny_dataset, config, monitor=lambda m: {'acc': float(np.mean(m.predict(tiny_dataset.images)
                                                                               == tiny_dataset.hard_labels))})
    assert len(model.history) == 15
    assert model.history[-1]['loss'] < model.history[0]['loss']
    assert model.history[-1]['acc'] >= 0.75


def test_training_is_deterministic(tiny_dataset, small_architecture):
    config = TrainConfig(epochs=2, batch_size=16, seed=RngSeed(2))
    first = train(Classifier(small_architecture, RngSeed(0)), tiny_dataset, config)
    second = train(Classifier(small_architecture, RngSeed(0)), tiny_dataset, config)
    np.testing.assert_array_equal(first.predict_logits(tiny_dataset.images),
                                  second.predict_logits(tiny_dataset.images))


def test_diverging_training_raises(tiny_dataset, small_architecture):
    model = Classifier(small_architecture, RngSeed(0))
    with torch.no_grad():
        model.blocks[-1][1].weight.fill_(float('nan'))
    with pytest.raises(TrainingError):
        train(model, tiny_dataset, TrainConfig(epochs=1))


def test_train_rejects_mismatched_dataset(small_model, random_batch):
    with pytest.raises(ValueError):
        train(small_model, random_batch(4, height=6, width=6), TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
