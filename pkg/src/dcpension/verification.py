"""Numerical oracles for the closed-form solution.

Covers the ODE/PDE residuals of the separated dual solution, Legendre
duality of the log utility, the first-order condition, an HJB residual
diagnostic evaluated by finite differences, and a Monte Carlo check that
scaling the optimal allocation by any factor other than one lowers
expected log terminal wealth.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .market import MarketParams, StatePoint
from .policy import (
    Regime,
    UncappedCandidatePolicy,
    effective_wealth,
    f_ansatz,
    optimal_policy,
    phi,
    phi_derivative,
    risk_premium,
    value_function,
)
from .simulation import SimConfig, log_terminal, log_utility_estimate, mean_and_variance, run_paths

FD_RELATIVE_STEP = 1e-5
FD_MIN_STEP = 1e-8
CLIP_FLAG_FRACTION = 0.01
FLOOR_FLAG_FRACTION = 0.05


class DegenerateConcavityWarning(RuntimeWarning):
    """The value function has zero curvature in wealth at the evaluation point."""


@dataclass
class ResidualReport:
    grid: list[float]
    residuals: list[float]
    max_abs: float
    tolerance: float
    passed: bool
    boundary: float | None = None

    @classmethod
    def build(cls, grid, residuals, tolerance: float, boundary: float | None = None,
              boundary_tolerance: float = 0.0) -> "ResidualReport":
        residuals = [float(x) for x in residuals]
        max_abs = max((abs(x) for x in residuals), default=0.0)
        passed = max_abs <= tolerance
        if boundary is not None:
            passed = passed and abs(boundary) <= boundary_tolerance
        return cls([float(x) for x in grid], residuals, max_abs, tolerance, passed, boundary)


def phi_ode_residual(t_grid: Sequence[float], rate: float, params: MarketParams,
                     tolerance: float = 1e-12) -> ResidualReport:
    """Residual of ``phi' - rate phi + rate c t - c = 0`` with ``phi(T) = 0``."""
    c = params.c
    residuals = [
        phi_derivative(t, rate, params) - rate * phi(t, rate, params) + rate * c * t - c
        for t in t_grid
    ]
    return ResidualReport.build(t_grid, residuals, tolerance,
                                boundary=phi(params.T, rate, params), boundary_tolerance=1e-15)


def f_pde_residual(s_grid: Sequence[float], params: MarketParams,
                   tolerance: float = 0.0) -> ResidualReport:
    """Residual of ``k(theta - s) f_s + sigma^2/2 f_ss = 0`` for the price factor.

    Derivatives come from central differences of :func:`f_ansatz`; the
    boundary entry is ``f - 1`` at the first grid point.
    """
    residuals = []
    for s in s_grid:
        h = max(FD_RELATIVE_STEP * abs(s), FD_MIN_STEP)
        f_s = (f_ansatz(s + h) - f_ansatz(s - h)) / (2 * h)
        f_ss = (f_ansatz(s + h) - 2 * f_ansatz(s) + f_ansatz(s - h)) / (h * h)
        residuals.append(params.k * (params.theta - s) * f_s + 0.5 * params.sigma**2 * f_ss)
    boundary = f_ansatz(s_grid[0]) - 1.0 if len(s_grid) else None
    return ResidualReport.build(s_grid, residuals, tolerance, boundary=boundary)


def legendre_transform(x: np.ndarray, u: np.ndarray | Callable, z, chunk: int = 2**22):
    """Discrete ``sup_x {u(x) - z x}`` over the sample points ``x``.

    ``u`` is either an array of utility values at ``x`` or a callable. ``z``
    may be a scalar or an array; the result has the same shape.
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(u(x) if callable(u) else u, dtype=float)
    if values.shape != x.shape:
        raise ValueError("utility samples and grid differ in shape")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(~(z_arr > 0)):
        raise DomainError("dual variable z must be positive")
    out = np.empty(z_arr.shape)
    rows = max(1, chunk // max(x.size, 1))
    flat = z_arr.ravel()
    res = out.ravel()
    for a in range(0, flat.size, rows):
        zs = flat[a:a + rows]
        res[a:a + rows] = np.max(values[None, :] - zs[:, None] * x[None, :], axis=1)
    return float(res[0]) if np.ndim(z) == 0 else out


def legendre_inverse(z: np.ndarray, dual: np.ndarray, x):
    """Recover a concave function from its dual samples, ``inf_z {L(z) + z x}``."""
    return -legendre_transform(z, -np.asarray(dual, dtype=float), x) if np.ndim(x) == 0 else \
        -np.asarray(legendre_transform(z, -np.asarray(dual, dtype=float), x))


def log_dual(z: float) -> float:
    """Closed-form dual of the log utility, ``-ln z - 1``."""
    if not z > 0:
        raise DomainError(f"dual variable z={z} must be positive")
    return -math.log(z) - 1.0


def dual_wealth(t: float, z: float, params: MarketParams) -> float:
    """Wealth attaining the dual optimum at ``z``: ``1/z + phi(t, r)``."""
    if not z > 0:
        raise DomainError(f"dual variable z={z} must be positive")
    return 1.0 / z + phi(t, params.r, params)


def foc_allocation(t: float, s: float, v: float, rate: float, h_v: float, h_vv: float,
                   h_vs: float, params: MarketParams) -> float:
    """Risky allocation from the first-order condition of the HJB supremum.

    ``-[k(theta - s) - rate s] s / sigma^2 * h_v/h_vv - s h_vs/h_vv``. The
    price factor ``s`` on the first term follows from the wealth increment
    ``y dS/s``; it is what makes the condition reproduce the closed form.
    """
    if h_vv == 0:
        raise DomainError("h_vv = 0: first-order condition is degenerate")
    premium = risk_premium(s, rate, params)
    return -premium * s / params.sigma**2 * h_v / h_vv - s * h_vs / h_vv


@dataclass(frozen=True)
class Partials:
    h_t: float
    h_s: float
    h_v: float
    h_ss: float
    h_vv: float
    h_vs: float


def log_value_partials(state: StatePoint, rate: float, params: MarketParams) -> Partials:
    """Analytic partial derivatives of ``ln(v - phi(t, rate))``."""
    d = effective_wealth(state.t, state.v, rate, params).d
    if not d > 0:
        raise DomainError(f"effective wealth {d} is not positive at {state}")
    return Partials(
        h_t=-phi_derivative(state.t, rate, params) / d,
        h_s=0.0,
        h_v=1.0 / d,
        h_ss=0.0,
        h_vv=-1.0 / (d * d),
        h_vs=0.0,
    )


def _step(x: float) -> float:
    return max(FD_RELATIVE_STEP * abs(x), FD_MIN_STEP)


def finite_difference_partials(H: Callable[[float, float, float], float], state: StatePoint,
                               params: MarketParams) -> Partials:
    """Central-difference partials of ``H(t, s, v)`` at ``state``.

    The time derivative falls back to a one-sided three-point formula at the
    ends of ``[0, T]``. A stencil point where ``H`` fails or is not finite
    raises :class:`DomainError`.
    """
    t, s, v = state.t, state.s, state.v
    ht, hs, hv = _step(t), _step(s), _step(v)

    def ev(tt, ss, vv):
        try:
            value = float(H(tt, ss, vv))
        except (ValueError, ArithmeticError) as exc:
            raise DomainError(f"H undefined near {state}: {exc}") from exc
        if not math.isfinite(value):
            raise DomainError(f"H not finite near {state}; too close to the d = 0 boundary")
        return value

    h0 = ev(t, s, v)
    if t - ht >= 0 and t + ht <= params.T:
        h_t = (ev(t + ht, s, v) - ev(t - ht, s, v)) / (2 * ht)
    elif t + 2 * ht <= params.T:
        h_t = (-3 * h0 + 4 * ev(t + ht, s, v) - ev(t + 2 * ht, s, v)) / (2 * ht)
    else:
        h_t = (3 * h0 - 4 * ev(t - ht, s, v) + ev(t - 2 * ht, s, v)) / (2 * ht)
    sp, sm = ev(t, s + hs, v), ev(t, s - hs, v)
    vp, vm = ev(t, s, v + hv), ev(t, s, v - hv)
    h_vs = (ev(t, s + hs, v + hv) - ev(t, s + hs, v - hv)
            - ev(t, s - hs, v + hv) + ev(t, s - hs, v - hv)) / (4 * hs * hv)
    return Partials(
        h_t=h_t,
        h_s=(sp - sm) / (2 * hs),
        h_v=(vp - vm) / (2 * hv),
        h_ss=(sp - 2 * h0 + sm) / (hs * hs),
        h_vv=(vp - 2 * h0 + vm) / (hv * hv),
        h_vs=h_vs,
    )


def hjb_residual_from_partials(p: Partials, state: StatePoint, rate: float,
                               params: MarketParams) -> float:
    """Left side of the reduced HJB equation for bank rate ``rate``.

    The squared-premium quotient is taken as printed, without a factor one
    half. When ``h_vv`` is zero the quotient terms are set to zero and a
    :class:`DegenerateConcavityWarning` is issued.
    """
    t, s, v = state.t, state.s, state.v
    sig2 = params.sigma**2
    premium = risk_premium(s, rate, params)
    linear = (p.h_t + params.k * (params.theta - s) * p.h_s + 0.5 * sig2 * p.h_ss
              + (rate * v - rate * params.c * t + params.c) * p.h_v)
    if p.h_vv == 0:
        warnings.warn("h_vv = 0; quotient terms set to zero", DegenerateConcavityWarning, stacklevel=3)
        return linear
    return (linear
            - premium**2 / sig2 * p.h_v**2 / p.h_vv
            - 0.5 * sig2 * p.h_vs**2 / p.h_vv
            - premium * p.h_v * p.h_vs / p.h_vv)


def hjb_residual(H: Callable[[float, float, float], float], state: StatePoint, rate: float,
                 params: MarketParams) -> float:
    """HJB residual of a candidate value function, by finite differences.

    Diagnostic only: the log value function does not make it vanish.
    """
    return hjb_residual_from_partials(finite_difference_partials(H, state, params), state, rate, params)


def log_value_field(rate: float, params: MarketParams) -> Callable[[float, float, float], float]:
    """``(t, s, v) -> value_function(t, v, rate)`` as a field for :func:`hjb_residual`."""
    return lambda t, s, v: value_function(t, v, rate, params)


def _check_deposit_start(state0: StatePoint, params: MarketParams) -> None:
    decision = optimal_policy(state0, params)
    if decision.regime is not Regime.DEPOSIT or not decision.b > 0:
        raise DomainError(f"{state0} is not strictly inside the deposit regime ({decision.regime.label})")


@dataclass
class PerturbationCurve:
    alphas: list[float]
    estimates: list[float]
    std_errors: list[float]
    alpha_star: float
    diff_std_errors: list[float] = field(default_factory=list)
    clip_fraction: float = 0.0
    floor_fraction: float = 0.0
    flags: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.flags)

    def is_unimodal(self) -> bool:
        """Nondecreasing up to the argmax and nonincreasing after it."""
        j = self.alphas.index(self.alpha_star)
        e = self.estimates
        up = all(e[i] <= e[i + 1] for i in range(j))
        down = all(e[i] >= e[i + 1] for i in range(j, len(e) - 1))
        return up and down

    def second_differences(self) -> list[float]:
        e = self.estimates
        return [e[i - 1] - 2 * e[i] + e[i + 1] for i in range(1, len(e) - 1)]

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas,
            "estimates": self.estimates,
            "std_errors": self.std_errors,
            "diff_std_errors": self.diff_std_errors,
            "alpha_star": self.alpha_star,
            "clip_fraction": self.clip_fraction,
            "floor_fraction": self.floor_fraction,
            "flags": self.flags,
        }


def mc_policy_optimality(
    params: MarketParams,
    state0: StatePoint,
    alphas: Sequence[float],
    n_paths: int,
    n_steps: int,
    seed: int,
    workers: int = 1,
    backend: str | None = None,
) -> PerturbationCurve:
    """Expected log terminal wealth of the scaled deposit-rate allocation.

    Every scale runs on the same paths. Wealth is integrated with the
    log scheme so no path can end insolvent, and the bank position is left
    uncapped: decisions that would need a negative deposit are counted
    (``clip_fraction``) rather than altered. Flags are raised when that
    fraction exceeds 1%, when more than 5% of price steps hit the floor, or
    when no scale differs from one by two paired standard errors.
    """
    alphas = [float(a) for a in alphas]
    if 1.0 not in alphas:
        raise DomainError("alphas must include 1.0")
    _check_deposit_start(state0, params)
    config = SimConfig(n_paths=n_paths, n_steps=n_steps, t0=state0.t, s0=state0.s, v0=state0.v,
                       seed=seed, wealth_scheme="log")
    results = run_paths([UncappedCandidatePolicy(params, a) for a in alphas], config, params,
                        workers=workers, backend=backend)
    logs = []
    estimates, std_errors = [], []
    for res in results:
        mean, se = log_utility_estimate(res.terminal_wealth)
        estimates.append(mean)
        std_errors.append(se)
        logs.append(log_terminal(res.terminal_wealth))
    base = logs[alphas.index(1.0)]
    diff_se = []
    for lv in logs:
        _, var = mean_and_variance(lv - base)
        diff_se.append(math.sqrt(var / lv.size))
    j = int(np.argmax(estimates))
    decisions = n_paths * n_steps if state0.t < params.T else 1
    clip_fraction = max(int(r.counters[1]) for r in results) / decisions
    floor_fraction = int(results[0].counters[0]) / decisions

    flags = []
    if clip_fraction > CLIP_FLAG_FRACTION:
        flags.append("regime-violation: deposit would turn negative on more than 1% of decisions")
    if floor_fraction > FLOOR_FLAG_FRACTION:
        flags.append("price-floor: more than 5% of price steps hit the floor")
    base_est = estimates[alphas.index(1.0)]
    if len(alphas) > 1 and all(
        abs(e - base_est) <= 2 * se for e, se, a in zip(estimates, diff_se, alphas) if a != 1.0
    ):
        flags.append("unresolved: no scale differs from 1.0 by two paired standard errors")
    return PerturbationCurve(alphas, estimates, std_errors, alphas[j], diff_se,
                             clip_fraction, floor_fraction, flags)


@dataclass(frozen=True)
class ValueGap:
    mc_estimate: float
    paper_value: float
    gap: float
    std_error: float
    clip_fraction: float = 0.0

    def to_dict(self) -> dict:
        return {
            "mc_estimate": self.mc_estimate,
            "paper_value": self.paper_value,
            "gap": self.gap,
            "std_error": self.std_error,
            "clip_fraction": self.clip_fraction,
        }


def value_gap(
    params: MarketParams,
    state0: StatePoint,
    n_paths: int,
    n_steps: int,
    seed: int,
    workers: int = 1,
    backend: str | None = None,
) -> ValueGap:
    """Simulated ``E[ln V(T)]`` under the optimal allocation minus the log value.

    Inside the deposit regime the optimal allocation is the deposit-rate
    candidate, which is what gets simulated (log wealth scheme, no cap).
    The gap is expected to be positive: the log value omits the deposit
    interest and the premium earned on the way to the horizon.
    """
    state0.check_horizon(params)
    closed_form = value_function(state0.t, state0.v, params.r, params)
    if state0.t == params.T:
        mc = math.log(state0.v)
        return ValueGap(mc, closed_form, mc - closed_form, 0.0)
    _check_deposit_start(state0, params)
    config = SimConfig(n_paths=n_paths, n_steps=n_steps, t0=state0.t, s0=state0.s, v0=state0.v,
                       seed=seed, wealth_scheme="log")
    (res,) = run_paths([UncappedCandidatePolicy(params, 1.0)], config, params,
                       workers=workers, backend=backend)
    mc, se = log_utility_estimate(res.terminal_wealth)
    return ValueGap(mc, closed_form, mc - closed_form, se, int(res.counters[1]) / (n_paths * n_steps))
