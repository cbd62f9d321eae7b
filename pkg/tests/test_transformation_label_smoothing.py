import math

import numpy as np
import pytest
from scipy.optimize import brentq

from src.transformation import ce_at_attack_rate, max_attack_rate, smooth_label, target_confidence
from src.transformation.label_smoothing import is_feasible

# (ar, target confidence, cross entropy) for K = 10
REFERENCE = [
    (2.0, 0.2320, 1.4612),
    (3.0, 0.4509, 0.7966),
    (4.0, 0.6906, 0.3702),
    (4.5, 0.7863, 0.2404),
    (5.0, 0.8585, 0.1526),
    (6.0, 0.9428, 0.0589),
    (6.5, 0.9645, 0.0361),
    (7.0, 0.9782, 0.0221),
]


@pytest.mark.parametrize("attack_rate,confidence,ce", REFERENCE)
def test_reference_confidence_and_cross_entropy(attack_rate, confidence, ce):
    label = smooth_label(attack_rate, 10, 3)
    assert label.probs[3] == pytest.approx(confidence, abs=5e-4)
    assert target_confidence(attack_rate, 10) == pytest.approx(confidence, abs=5e-4)
    assert ce_at_attack_rate(attack_rate, 10) == pytest.approx(ce, abs=1e-3)


def test_attack_rate_one_gives_uniform_label():
    label = smooth_label(1.0, 5, 2)
    np.testing.assert_allclose(label.probs, np.full(5, 0.2), atol=1e-12)
    assert ce_at_attack_rate(1.0, 5) == pytest.approx(math.log(5))


def test_infinite_attack_rate_gives_one_hot():
    label = smooth_label(math.inf, 4, 1)
    assert label.probs.tolist() == [0.0, 1.0, 0.0, 0.0]
    assert ce_at_attack_rate(math.inf, 4) == 0.0


def test_non_target_entries_are_exactly_equal_and_sum_to_one():
    label = smooth_label(3.7, 7, 0)
    others = label.probs[1:]
    assert np.all(others == others[0])
    assert abs(label.probs.sum() - 1.0) <= 1e-9


def test_target_confidence_increases_with_attack_rate():
    rates = np.linspace(1.0, 12.0, 40)
    confidences = [target_confidence(ar, 10) for ar in rates]
    assert np.all(np.diff(confidences) > 0)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        smooth_label(float('nan'), 10, 0)
    with pytest.raises(ValueError):
        smooth_label(2.0, 10, 10)
    with pytest.raises(ValueError):
        smooth_label(2.0, 1, 0)


def test_max_attack_rate_reference_value():
    assert 6.4 <= max_attack_rate(0.0358, 10) <= 6.6


def test_max_attack_rate_edges():
    assert max_attack_rate(0.0, 10) == math.inf
    assert max_attack_rate(-1.0, 10) == math.inf
    assert max_attack_rate(math.log(10), 10) == pytest.approx(1.0)
    assert not is_feasible(max_attack_rate(3.0, 10))


def _bisection_oracle(bound: float, num_classes: int) -> float:
    return brentq(lambda ar: ce_at_attack_rate(ar, num_classes) - bound, 1.0, 200.0, xtol=1e-12)


def test_inversion_identity_against_bisection():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        k = int(rng.integers(2, 51))
        bound = float(rng.uniform(0.01, 0.95 * math.log(k)))
        ar = max_attack_rate(bound, k)
        assert ce_at_attack_rate(ar, k) == pytest.approx(bound, abs=1e-6)
        assert ar == pytest.approx(_bisection_oracle(bound, k), abs=1e-6)
