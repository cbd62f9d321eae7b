"""
Compensatory bound calculus: from measured defense terms to a feasible attack rate.
"""

from .bounds import (
    CompensatoryBound,
    CompensatoryInputs,
    deployment_attack_rate,
    general_bound,
    nc_bound,
    plan_attack,
)

__all__ = [
    'CompensatoryBound',
    'CompensatoryInputs',
    'deployment_attack_rate',
    'general_bound',
    'nc_bound',
    'plan_attack',
]
