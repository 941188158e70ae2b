from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcpension.errors import ConfigError, DomainError
from dcpension.market import (
    MarketParams,
    StatePoint,
    bank_factor,
    ou_euler_step,
    ou_exact_step,
    ou_moments,
    ou_transition_coefficients,
    sample_ou_terminal,
)

from conftest import REFERENCE
import oracles


def test_reference_values_accepted(ref):
    assert ref.r == 0.03 and ref.R == 0.06 and ref.c == 0.2 and ref.T == 20.0


@pytest.mark.parametrize(
    "changes, fragment",
    [
        ({"r": 0.06, "R": 0.03}, "requires r < R"),
        ({"R": 0.03}, "requires r < R"),
        ({"r": 0.0}, "r > 0"),
        ({"k": 0.0}, "k > 0"),
        ({"theta": -1.0}, "theta > 0"),
        ({"sigma": 0.0}, "sigma > 0"),
        ({"T": 0.0}, "T > 0"),
        ({"c": -0.1}, "c >= 0"),
        ({"sigma": float("nan")}, "sigma must be finite"),
        ({"k": "0.5"}, "k must be a real number"),
        ({"k": True}, "k must be a real number"),
    ],
)
def test_invalid_params_name_the_field(changes, fragment):
    with pytest.raises(ConfigError, match=fragment):
        MarketParams(**{**REFERENCE, **changes})


def test_from_dict_is_strict():
    assert MarketParams.from_dict(REFERENCE) == MarketParams(**REFERENCE)
    with pytest.raises(ConfigError, match="unknown market keys: mu"):
        MarketParams.from_dict({**REFERENCE, "mu": 0.1})
    data = dict(REFERENCE)
    del data["k"]
    with pytest.raises(ConfigError, match="missing market keys: k"):
        MarketParams.from_dict(data)


def test_round_trip_and_replace(ref):
    assert MarketParams.from_dict(ref.to_dict()) == ref
    assert ref.replace(sigma=0.2).sigma == 0.2
    with pytest.raises(ConfigError):
        ref.replace(R=0.01)


def test_state_point_validation(ref):
    with pytest.raises(DomainError):
        StatePoint(1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        StatePoint(-1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        StatePoint(1.0, 1.0, math.inf)
    with pytest.raises(DomainError, match="exceeds horizon"):
        StatePoint(21.0, 1.0, 1.0).check_horizon(ref)
    StatePoint(20.0, 1.0, -5.0).check_horizon(ref)  # negative wealth is a valid state


def test_bank_factor():
    assert bank_factor(0.0, 15.0, 0.03) == pytest.approx(1.568312185490169, rel=1e-15)
    assert bank_factor(2.0, 2.0, 0.06) == 1.0
    with pytest.raises(DomainError):
        bank_factor(2.0, 1.0, 0.03)


def test_exact_step_with_zero_noise_is_the_mean(ref):
    s = ou_exact_step(1.0, 1.0, 0.0, ref)
    assert s == pytest.approx(oracles.OU_MEAN_1_1, rel=1e-15)
    mean, var = ou_moments(1.0, 1.0, ref)
    assert mean == pytest.approx(oracles.OU_MEAN_1_1, rel=1e-15)
    assert var == pytest.approx(oracles.OU_VAR_1_1, rel=1e-14)


def test_exact_step_at_theta_with_zero_noise_stays():
    p = MarketParams(**REFERENCE)
    assert ou_exact_step(3.0, 0.37, 0.0, p) == 3.0


def test_transition_coefficients_small_dt(ref):
    decay, noise = ou_transition_coefficients(1e-12, ref)
    assert noise == pytest.approx(ref.sigma * math.sqrt(1e-12), rel=1e-9)
    assert decay < 1.0
    with pytest.raises(DomainError):
        ou_transition_coefficients(0.0, ref)


@settings(max_examples=50, deadline=None)
@given(
    t1=st.floats(0.01, 5.0),
    t2=st.floats(0.01, 5.0),
    s0=st.floats(0.1, 10.0),
    z1=st.floats(-4, 4),
)
def test_exact_moments_compose(t1, t2, s0, z1):
    # the conditional mean over two steps equals the one-step mean over their sum
    p = MarketParams(**REFERENCE)
    mid = ou_exact_step(s0, t1, 0.0, p)
    end = ou_exact_step(mid, t2, 0.0, p)
    assert end == pytest.approx(ou_moments(s0, t1 + t2, p)[0], rel=1e-12)
    v1 = ou_moments(s0, t1, p)[1]
    v2 = ou_moments(s0, t2, p)[1]
    decay2 = math.exp(-2 * p.k * t2)
    assert v1 * decay2 + v2 == pytest.approx(ou_moments(s0, t1 + t2, p)[1], rel=1e-12)


def test_euler_converges_to_exact_mean(ref):
    mean = ou_moments(1.0, 1.0, ref)[0]
    errors = []
    for n in (10, 100, 1000):
        s = 1.0
        for _ in range(n):
            s = ou_euler_step(s, 1.0 / n, 0.0, ref)
        errors.append(abs(s - mean))
    assert 8 < errors[0] / errors[1] < 12
    assert 8 < errors[1] / errors[2] < 12


def test_sample_ou_terminal_moments(ref):
    rng = np.random.default_rng(3)
    samples = sample_ou_terminal(1.0, 1.0, 4, ref, rng, 50_000)
    mean, var = ou_moments(1.0, 1.0, ref)
    assert abs(samples.mean() - mean) < 4 * math.sqrt(var / samples.size)
    assert abs(samples.var() - var) < 4 * var * math.sqrt(2 / samples.size)
    with pytest.raises(DomainError):
        sample_ou_terminal(1.0, 1.0, 0, ref, rng, 10)
