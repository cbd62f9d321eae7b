import numpy as np
import pytest

from src.core.types import RngSeed
from src.defense import ReversalConfig, ReversalResult, reverse_all_classes, reverse_trigger_nc
from src.defense.reversal import ReversalOptimizer
from src.models import TrainConfig, train
from tests.conftest import constant_model


def _config(**overrides) -> ReversalConfig:
    params = dict(lambda_weight=0.01, steps=40, step_size=0.1, batch_size=16, seed=RngSeed(0))
    params.update(overrides)
    return ReversalConfig(**params)


def test_constant_model_drives_mask_to_zero(random_batch):
    model = constant_model(4, target=2)
    result = reverse_trigger_nc(model, 2, random_batch(16), _config(steps=200))
    assert result.l1_norm < 1e-3
    assert result.attack_success_of_reversed == 1.0


def test_objective_is_sum_of_terms(small_model, random_batch):
    result = reverse_trigger_nc(small_model, 1, random_batch(16), _config())
    assert result.objective == pytest.approx(result.cls_term + result.reg_term, abs=1e-6)
    assert result.reg_term == pytest.approx(0.01 * result.l1_norm, rel=1e-6)
    assert result.mask.shape == (8, 8)
    assert 0.0 <= result.mask.min() and result.mask.max() <= 1.0
    assert result.pattern.shape == (8, 8, 1)


def test_line_search_trace_is_non_increasing(small_model, random_batch):
    config = _config(optimizer=ReversalOptimizer.LINE_SEARCH, steps=30)
    result = reverse_trigger_nc(small_model, 0, random_batch(16), config)
    assert len(result.trace) >= 1
    assert np.all(np.diff(result.trace) <= 1e-12)


def test_larger_lambda_gives_smaller_mask(small_model, random_batch):
    batch = random_batch(16)
    loose = reverse_trigger_nc(small_model, 3, batch, _config(lambda_weight=0.0, steps=100))
    tight = reverse_trigger_nc(small_model, 3, batch, _config(lambda_weight=0.5, steps=100))
    assert tight.l1_norm < loose.l1_norm


def test_restarts_keep_the_best_objective(small_model, random_batch):
    batch = random_batch(16)
    single = reverse_trigger_nc(small_model, 1, batch, _config(restarts=1))
    several = reverse_trigger_nc(small_model, 1, batch, _config(restarts=3))
    assert several.objective <= single.objective + 1e-9


def test_same_seed_is_deterministic(small_model, random_batch):
    batch = random_batch(16)
    first = reverse_trigger_nc(small_model, 2, batch, _config())
    second = reverse_trigger_nc(small_model, 2, batch, _config())
    np.testing.assert_array_equal(first.mask, second.mask)
    assert first.config_digest == second.config_digest


def test_adaptive_lambda_changes_the_weight(random_batch):
    model = constant_model(4, target=0)
    config = _config(lambda_schedule='adaptive', patience=2, steps=10)
    result = reverse_trigger_nc(model, 0, random_batch(16), config)
    # Every step succeeds on a constant model, so lambda grows
    assert result.lambda_weight > 0.01


def test_invalid_arguments(small_model, random_batch):
    with pytest.raises(ValueError):
        reverse_trigger_nc(small_model, 4, random_batch(4), _config())
    with pytest.raises(ValueError):
        reverse_trigger_nc(small_model, 0, random_batch(4).head(0), _config())
    with pytest.raises(ValueError):
        ReversalConfig(steps=0)


def test_reverse_all_classes_in_threads(small_model, random_batch):
    batch = random_batch(16)
    serial = reverse_all_classes(small_model, batch, _config(steps=5))
    threaded = reverse_all_classes(small_model, batch, _config(steps=5), jobs=2)
    assert [r.target_class for r in threaded] == [0, 1, 2, 3]
    assert [r.l1_norm for r in serial] == pytest.approx([r.l1_norm for r in threaded])


def test_result_dict_round_trip(small_model, random_batch):
    result = reverse_trigger_nc(small_model, 1, random_batch(16), _config(steps=5))
    restored = ReversalResult.from_dict(result.to_dict())
    np.testing.assert_array_equal(restored.mask, result.mask)
    assert restored.objective == pytest.approx(result.objective)
    assert 'mask' not in result.to_dict(include_arrays=False)


@pytest.mark.slow
def test_norm_shrinks_as_lambda_grows(small_model, tiny_dataset, seed):
    train(small_model, tiny_dataset, TrainConfig(epochs=10, batch_size=16, learning_rate=1e-2, seed=seed))
    batch = tiny_dataset.subset(seed.generator(1).permutation(len(tiny_dataset))[:32])
    norms = [reverse_trigger_nc(small_model, 1, batch, _config(lambda_weight=weight, steps=150)).l1_norm
             for weight in (1e-4, 1e-3, 1e-2)]
    for looser, tighter in zip(norms, norms[1:]):
        assert tighter <= looser * 1.05 + 1e-3
