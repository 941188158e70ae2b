"""Optimal DC pension allocation with a deposit-loan spread and a
mean-reverting risky asset: closed-form policy, Monte Carlo simulator and
numerical verification oracles."""

from __future__ import annotations

from ._backend import DEFAULT_BACKEND, available_backends
from .errors import AdmissibilityError, ConfigError, DomainError
from .market import MarketParams, StatePoint, ou_exact_step, ou_moments
from .policy import (
    EffectiveWealth,
    OptimalPolicy,
    PolicyDecision,
    Regime,
    candidate_allocation,
    effective_wealth,
    optimal_policy,
    phi,
    value_function,
)
from .simulation import PathStats, SimConfig, expected_log_utility, simulate_paths

__all__ = [
    "AdmissibilityError",
    "ConfigError",
    "DEFAULT_BACKEND",
    "DomainError",
    "EffectiveWealth",
    "MarketParams",
    "OptimalPolicy",
    "PathStats",
    "PolicyDecision",
    "Regime",
    "SimConfig",
    "StatePoint",
    "available_backends",
    "candidate_allocation",
    "effective_wealth",
    "expected_log_utility",
    "optimal_policy",
    "ou_exact_step",
    "ou_moments",
    "phi",
    "simulate_paths",
    "value_function",
]
