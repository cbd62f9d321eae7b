import math

import numpy as np
import pytest

from src.compensatory import (
    CompensatoryBound,
    CompensatoryInputs,
    deployment_attack_rate,
    general_bound,
    nc_bound,
    plan_attack,
)
from src.core.types import ImageTensor
from src.defense import ReversalResult
from src.utils.errors import ConfigurationError


def _result(target: int, norm: float, cls_term: float, lambda_weight: float = 0.001,
            digest: str = 'abc', method: str = 'nc') -> ReversalResult:
    mask = np.zeros((4, 4), dtype=np.float32)
    return ReversalResult(
        target_class=target,
        mask=mask,
        pattern=ImageTensor.constant(4, 4, 1, 0.5),
        l1_norm=norm,
        cls_term=cls_term,
        reg_term=lambda_weight * norm,
        attack_success_of_reversed=1.0,
        method=method,
        config_digest=digest,
        lambda_weight=lambda_weight,
    )


def test_nc_bound_reference_value():
    assert nc_bound(0.001, 50.06, 14.28, 0.0) == pytest.approx(0.0358, abs=1e-4)


def test_nc_bound_is_floored_at_zero():
    assert nc_bound(0.01, 10.0, 20.0) == 0.0
    with pytest.raises(ValueError):
        nc_bound(-0.1, 1.0, 0.0)


def test_general_bound_matches_nc_bound_for_nc_terms():
    inputs = CompensatoryInputs(reg_benign=0.001 * 50.06, reg_poisoned=0.001 * 14.28, cls_benign=0.0)
    assert general_bound(inputs) == pytest.approx(nc_bound(0.001, 50.06, 14.28))


def test_epsilon_must_be_nonnegative():
    with pytest.raises(ValueError):
        CompensatoryInputs(1.0, 0.5, 0.0, epsilon=-0.1)


def test_deployment_attack_rate():
    bound = CompensatoryBound(0.0358, 6.5)
    assert deployment_attack_rate(bound, 0.9) == pytest.approx(1 + 0.9 * 5.5)
    assert deployment_attack_rate(CompensatoryBound(0.0, math.inf)) == math.inf
    with pytest.raises(ValueError):
        deployment_attack_rate(bound, 0.0)


def test_plan_attack_averages_replicas():
    benign = [_result(0, 48.0, 0.01), _result(0, 52.12, 0.01)]
    poisoned = [_result(0, 14.28, 0.0)]
    bound = plan_attack(benign, poisoned, 0.0, 10)
    assert bound.ce_lower_bound == pytest.approx(0.001 * (50.06 - 14.28) + 0.01, abs=1e-9)
    assert bound.feasible
    assert bound.provenance['benign_runs'] == 2


def test_plan_attack_without_compensation_needed_is_unbounded():
    bound = plan_attack(_result(0, 10.0, 0.0), _result(0, 30.0, 0.0), 0.0, 10)
    assert bound.ce_lower_bound == 0.0
    assert bound.max_attack_rate == math.inf


def test_plan_attack_rejects_mismatched_runs():
    with pytest.raises(ConfigurationError):
        plan_attack(_result(0, 50.0, 0.0), _result(1, 10.0, 0.0), 0.0, 10)
    with pytest.raises(ConfigurationError):
        plan_attack(_result(0, 50.0, 0.0, digest='a'), _result(0, 10.0, 0.0, digest='b'), 0.0, 10)


def test_huge_bound_is_infeasible():
    bound = plan_attack(_result(0, 5000.0, 0.0, lambda_weight=1.0), _result(0, 0.0, 0.0, lambda_weight=1.0), 0.0, 10)
    assert not bound.feasible
    assert bound.to_dict()['feasible'] is False
