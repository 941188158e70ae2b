from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcpension._backend import available_backends, get_kernel
from dcpension.errors import AdmissibilityError, DomainError
from dcpension.market import MarketParams, StatePoint, ou_exact_step
from dcpension.policy import (
    DepositCandidatePolicy,
    OptimalPolicy,
    PolicyDecision,
    Regime,
    UncappedCandidatePolicy,
    ZeroRiskPolicy,
    candidate_allocation,
    optimal_policy,
    phi,
)
from dcpension.simulation import (
    SimConfig,
    expected_log_utility,
    log_utility_estimate,
    mean_and_variance,
    run_paths,
    simulate_paths,
    wealth_step,
)
from dcpension.streams import check_seed, path_generator, path_normals

from conftest import REFERENCE
import oracles

needs_cython = pytest.mark.skipif("cython" not in available_backends(), reason="extension not built")

KERNEL_POLICIES = [
    lambda p: OptimalPolicy(p),
    lambda p: OptimalPolicy(p, 1.7),
    lambda p: DepositCandidatePolicy(p, 1.3),
    lambda p: UncappedCandidatePolicy(p, 1.2),
    lambda p: ZeroRiskPolicy(p),
]


def small_config(**changes) -> SimConfig:
    base = dict(n_paths=300, n_steps=40, t0=0.0, s0=2.0, v0=1200.0, seed=17)
    base.update(changes)
    return SimConfig(**base)


def test_path_normals_match_independent_generators():
    block = path_normals(42, 5, 9, 13)
    for row, path in enumerate(range(5, 9)):
        np.testing.assert_array_equal(block[row], path_generator(42, path).standard_normal(13))


def test_seed_validation():
    assert check_seed(2**64 - 1) == 2**64 - 1
    with pytest.raises(ValueError):
        check_seed(-1)
    with pytest.raises(TypeError):
        check_seed(1.5)


@pytest.mark.parametrize("make", KERNEL_POLICIES)
@pytest.mark.parametrize("stepper", ["exact", "euler"])
@needs_cython
def test_backends_bit_identical_linear(ref, make, stepper):
    cfg = small_config(stepper=stepper)
    (a,) = run_paths([make(ref)], cfg, ref, backend="python")
    (b,) = run_paths([make(ref)], cfg, ref, backend="cython")
    np.testing.assert_array_equal(a.terminal_wealth, b.terminal_wealth)
    np.testing.assert_array_equal(a.counters, b.counters)


@pytest.mark.parametrize("make", KERNEL_POLICIES)
@needs_cython
def test_backends_agree_log_scheme(ref, make):
    # numpy's vector exp and libm's exp may differ in the last bit
    cfg = small_config(wealth_scheme="log")
    (a,) = run_paths([make(ref)], cfg, ref, backend="python")
    (b,) = run_paths([make(ref)], cfg, ref, backend="cython")
    np.testing.assert_allclose(a.terminal_wealth, b.terminal_wealth, rtol=1e-11)
    np.testing.assert_array_equal(a.counters, b.counters)


def test_unknown_backend(ref):
    with pytest.raises(ValueError, match="unavailable"):
        get_kernel("fortran")


@pytest.mark.parametrize("workers, block", [(1, 7), (3, 64), (4, 2048)])
def test_results_independent_of_workers_and_blocks(ref, workers, block):
    cfg = small_config(n_paths=257)
    ref_runs = run_paths([OptimalPolicy(ref), UncappedCandidatePolicy(ref)], cfg, ref)
    runs = run_paths([OptimalPolicy(ref), UncappedCandidatePolicy(ref)], cfg, ref,
                     workers=workers, block_size=block)
    for a, b in zip(ref_runs, runs):
        np.testing.assert_array_equal(a.terminal_wealth, b.terminal_wealth)
        np.testing.assert_array_equal(a.counters, b.counters)


def test_identical_seeds_identical_stats(ref):
    cfg = small_config()
    a = simulate_paths(OptimalPolicy(ref), cfg, ref)
    b = simulate_paths(OptimalPolicy(ref), cfg, ref, workers=2)
    assert a == b
    assert a.to_dict() == b.to_dict()
    c = simulate_paths(OptimalPolicy(ref), cfg.replace(seed=18), ref)
    assert c.mean_terminal_wealth != a.mean_terminal_wealth


def test_generic_path_matches_kernel(ref):
    cfg = small_config(n_paths=20)
    policy = OptimalPolicy(ref)
    (kernel,) = run_paths([policy], cfg, ref, backend="python")
    (generic,) = run_paths([lambda state: policy(state)], cfg, ref)
    np.testing.assert_allclose(generic.terminal_wealth, kernel.terminal_wealth, rtol=1e-12)
    np.testing.assert_array_equal(generic.counters[4:], kernel.counters[4:])


def test_generic_path_log_scheme_matches_kernel(ref):
    cfg = small_config(n_paths=20, wealth_scheme="log")
    policy = UncappedCandidatePolicy(ref, 0.8)
    (kernel,) = run_paths([policy], cfg, ref, backend="python")
    safe = DepositCandidatePolicy(ref, 0.8)
    (generic,) = run_paths([lambda state: safe(state)], cfg, ref)
    # no clipping happens on these paths, so the two policies coincide
    assert kernel.counters[1] == 0
    np.testing.assert_allclose(generic.terminal_wealth, kernel.terminal_wealth, rtol=1e-12)


def test_admissibility_enforced_each_step(ref):
    def both(state):
        return PolicyDecision(0.0, 1.0, state.v - ref.c * state.t + 1.0, Regime.DEPOSIT)

    with pytest.raises(AdmissibilityError, match="path 0, step 0: simultaneous loan"):
        simulate_paths(both, small_config(n_paths=2), ref)

    def leaky(state):
        return PolicyDecision(0.0, 0.0, state.v, Regime.DEPOSIT)

    with pytest.raises(AdmissibilityError, match="budget identity"):
        simulate_paths(leaky, small_config(n_paths=2, t0=1.0), ref)

    def negative(state):
        return PolicyDecision(state.v + 1.0, 0.0, -1.0 - ref.c * state.t, Regime.DEPOSIT)

    with pytest.raises(AdmissibilityError, match="negative bank position"):
        simulate_paths(negative, small_config(n_paths=2), ref)


def test_single_path_zero_risk_has_zero_variance(ref):
    stats = simulate_paths(ZeroRiskPolicy(ref), small_config(n_paths=1), ref)
    assert stats.var_terminal_wealth == 0.0
    assert stats.regime_occupancy["Deposit"] == 1.0


def test_zero_risk_log_utility_is_deterministic(ref):
    cfg = small_config(n_paths=50, n_steps=100)
    est, se = expected_log_utility(ZeroRiskPolicy(ref), cfg, ref)
    stats = simulate_paths(ZeroRiskPolicy(ref), cfg, ref)
    assert se == 0.0
    assert est == math.log(stats.terminal_wealth[0])


def test_start_at_horizon_returns_initial_wealth(ref):
    cfg = small_config(t0=ref.T, v0=321.5)
    est, se = expected_log_utility(OptimalPolicy(ref), cfg, ref)
    assert est == math.log(321.5) and se == 0.0
    stats = simulate_paths(OptimalPolicy(ref), cfg, ref)
    assert stats.regime_occupancy["Deposit"] == 1.0
    with pytest.raises(DomainError, match="exceeds horizon"):
        run_paths([OptimalPolicy(ref)], small_config(t0=25.0), ref)


def test_zero_risk_converges_at_first_order(ref):
    errors = []
    for n in (200, 2000):
        stats = simulate_paths(ZeroRiskPolicy(ref), small_config(n_paths=1, n_steps=n, v0=100.0), ref)
        errors.append(abs(stats.mean_terminal_wealth - oracles.ZERO_RISK_VT))
    assert 8 < errors[0] / errors[1] < 12


def test_zero_risk_log_scheme_is_exact(ref):
    stats = simulate_paths(ZeroRiskPolicy(ref), small_config(n_paths=1, n_steps=7, v0=100.0,
                                                              wealth_scheme="log"), ref)
    assert stats.mean_terminal_wealth == pytest.approx(oracles.ZERO_RISK_VT, rel=1e-13)


def test_deep_deposit_start_stays_in_deposit(ref):
    stats = simulate_paths(OptimalPolicy(ref), SimConfig(20_000, 200, 0.0, 2.0, 1200.0, seed=1), ref)
    assert stats.regime_occupancy["Deposit"] > 0.99
    assert sum(stats.regime_occupancy.values()) == pytest.approx(1.0)


def test_optimal_beats_half_scaled(ref):
    # deposit-rate candidate = optimal allocation in the deposit regime
    cfg = SimConfig(100_000, 200, 0.0, 2.0, 1200.0, seed=3, wealth_scheme="log")
    full, half = run_paths([UncappedCandidatePolicy(ref, 1.0), UncappedCandidatePolicy(ref, 0.5)], cfg, ref)
    e1, se1 = log_utility_estimate(full.terminal_wealth)
    e2, se2 = log_utility_estimate(half.terminal_wealth)
    assert e1 - e2 > 2 * math.hypot(se1, se2)


def test_nonpositive_terminal_wealth_lists_paths():
    with pytest.raises(DomainError, match="paths 1, 3"):
        log_utility_estimate(np.array([1.0, -2.0, 3.0, 0.0]))


def test_effective_wealth_is_self_financing(ref):
    # D = V - phi(t, r) stepped on its own, dD = r (D - y) dt + y dS / S,
    # tracks D computed from the simulated wealth to O(dt)
    n_steps = 2000
    dt = ref.T / n_steps
    z = path_normals(11, 0, 10, n_steps)
    for row in z:
        s, v = 2.0, 1200.0
        d = v - phi(0.0, ref.r, ref)
        for i in range(n_steps):
            state = StatePoint(i * dt, s, v)
            decision = optimal_policy(state, ref)
            assert decision.regime is Regime.DEPOSIT
            s_next, v = wealth_step(state, decision, dt, float(row[i]), ref)
            d = d + ref.r * (d - decision.y) * dt + decision.y * (s_next - s) / s
            s = s_next
        assert abs(d - (v - phi(ref.T, ref.r, ref))) <= 1e-3 * abs(d)


@settings(max_examples=40, deadline=None)
@given(z=st.floats(-5, 5), y=st.floats(-100, 100), v=st.floats(10, 1000))
def test_wealth_step_uses_realized_increment(z, y, v):
    p = MarketParams(**REFERENCE)
    state = StatePoint(3.0, 2.0, v)
    w = v - p.c * state.t
    l, b = max(0.0, y - w), max(0.0, w - y)
    decision = PolicyDecision(y, l, b, Regime.DEPOSIT)
    s_next, v_next = wealth_step(state, decision, 0.1, z, p)
    assert s_next == max(ou_exact_step(2.0, 0.1, z, p), p.price_floor)
    assert v_next == v + (p.r * b - p.R * l + p.c) * 0.1 + y * (s_next - 2.0) / 2.0


def test_price_floor_counts(ref):
    wild = ref.replace(sigma=50.0)
    stats = simulate_paths(ZeroRiskPolicy(wild), small_config(n_paths=100), wild)
    assert stats.floor_hits > 0
    calm = simulate_paths(ZeroRiskPolicy(ref), small_config(n_paths=100), ref)
    assert calm.floor_hits < stats.floor_hits


def test_config_validation():
    with pytest.raises(DomainError):
        small_config(n_paths=0)
    with pytest.raises(DomainError):
        small_config(n_steps=0)
    with pytest.raises(DomainError):
        small_config(stepper="milstein")
    with pytest.raises(DomainError):
        small_config(wealth_scheme="exp")
    with pytest.raises(DomainError):
        small_config(s0=0.0)


def test_mean_and_variance_exact_for_constant_samples():
    assert mean_and_variance(np.full(1001, 0.1)) == (0.1, 0.0)
    m, v = mean_and_variance(np.array([1.0, 2.0, 3.0, 4.0]))
    assert m == 2.5 and v == pytest.approx(5.0 / 3.0, rel=1e-15)


def test_path_stats_serialization(ref):
    stats = simulate_paths(OptimalPolicy(ref), small_config(n_paths=10), ref)
    data = stats.to_dict()
    assert set(data) >= {"mean_terminal_wealth", "var_terminal_wealth", "mean_log_terminal_wealth",
                         "se_log_terminal_wealth", "regime_occupancy", "floor_hits", "clip_events"}
    assert "terminal_wealth" not in data


def test_fallback_when_extension_missing():
    import subprocess
    import sys

    code = (
        "import sys; sys.modules['dcpension._ckernels'] = None\n"
        "from dcpension import _backend\n"
        "from dcpension.simulation import SimConfig, run_paths\n"
        "from dcpension.market import MarketParams\n"
        "from dcpension.policy import OptimalPolicy\n"
        "p = MarketParams(r=0.03, R=0.06, k=0.5, theta=3.0, sigma=1.5, c=0.2, T=20.0)\n"
        "(res,) = run_paths([OptimalPolicy(p)], SimConfig(10, 5, 0.0, 2.0, 1200.0), p)\n"
        "print(_backend.DEFAULT_BACKEND, _backend.available_backends(), res.terminal_wealth.size)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
    assert out.split("\n")[0] == "python ['python'] 10"
