"""Closed-form optimal allocation under log utility with a deposit-loan spread.

With logarithmic utility the optimal risky position is myopic. For a
borrowing or lending rate ``rate`` it is

    Y(rate) = [k (theta - s) - rate s] * D(rate) * s / sigma**2

where ``D(rate) = v - c t + c T exp(rate (t - T))`` is the effective wealth.
Comparing the free wealth ``w = v - c t`` with the loan-rate and
deposit-rate candidates splits the state space into three regimes:

* ``w <= Y(R)``: borrow ``Y(R) - w`` at the loan rate,
* ``w >= Y(r)``: deposit ``w - Y(r)`` at the deposit rate,
* otherwise hold exactly ``w`` in the risky asset with no bank position.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DomainError
from .market import MarketParams, StatePoint

DEGENERATE_ORDERING = "degenerate-ordering: loan-rate candidate exceeds deposit-rate candidate"
CLIPPED_TO_FREE_WEALTH = "clipped: scaled allocation exceeded free wealth"


class Regime(enum.IntEnum):
    BORROW = 0
    CONSTRAINED = 1
    DEPOSIT = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "Regime":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown regime label {label!r}") from None


@dataclass(frozen=True)
class PolicyDecision:
    """Risky allocation ``y``, loan ``l``, deposit ``b`` and the regime."""

    y: float
    l: float
    b: float
    regime: Regime
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "y": self.y,
            "l": self.l,
            "b": self.b,
            "regime": self.regime.label,
            "warnings": list(self.warnings),
        }

    def budget_residual(self, state: StatePoint, params: MarketParams) -> float:
        """Relative violation of ``b + y - l + c t = v``."""
        lhs = self.b + self.y - self.l + params.c * state.t
        scale = max(abs(state.v), abs(self.y), abs(self.l), abs(self.b), 1.0)
        return abs(lhs - state.v) / scale


@dataclass(frozen=True)
class EffectiveWealth:
    d: float


def _check_time(t: float, params: MarketParams) -> None:
    if not 0.0 <= t <= params.T:
        raise DomainError(f"time t={t} outside [0, T={params.T}]")


def phi(t: float, rate: float, params: MarketParams) -> float:
    """Time-only part of the dual wealth, ``c t - c T exp(rate (t - T))``."""
    _check_time(t, params)
    return params.c * t - params.c * params.T * math.exp(rate * (t - params.T))


def phi_derivative(t: float, rate: float, params: MarketParams) -> float:
    _check_time(t, params)
    return params.c - params.c * params.T * rate * math.exp(rate * (t - params.T))


def f_ansatz(s: float) -> float:
    """Price-dependent factor of the dual wealth; identically one."""
    return 1.0


def effective_wealth(t: float, v: float, rate: float, params: MarketParams) -> EffectiveWealth:
    """Wealth net of the contribution accounting, ``v - phi(t, rate)``.

    Nonpositive values are returned as-is; callers that take logarithms
    check the sign.
    """
    return EffectiveWealth(v - phi(t, rate, params))


def risk_premium(s: float, rate: float, params: MarketParams) -> float:
    """Excess drift of the price over financing at ``rate``, ``k(theta-s) - rate s``."""
    return params.k * (params.theta - s) - rate * s


def candidate_allocation(t: float, s: float, v: float, rate: float, params: MarketParams) -> float:
    if not s > 0:
        raise DomainError(f"price s={s} must be positive")
    d = effective_wealth(t, v, rate, params).d
    return risk_premium(s, rate, params) * d * s / (params.sigma * params.sigma)


def zero_premium_price(rate: float, params: MarketParams) -> float:
    """Price at which the candidate allocation for ``rate`` vanishes."""
    return params.k * params.theta / (params.k + rate)


def optimal_policy(state: StatePoint, params: MarketParams) -> PolicyDecision:
    """Three-regime optimal allocation at ``state``.

    Raises
    ------
    DomainError
        If the effective wealth is nonpositive for either rate.
    """
    state.check_horizon(params)
    t, s, v = state.t, state.s, state.v
    d_loan = effective_wealth(t, v, params.R, params).d
    d_deposit = effective_wealth(t, v, params.r, params).d
    if not (d_loan > 0 and d_deposit > 0):
        raise DomainError(
            f"effective wealth must be positive at {state} (loan: {d_loan}, deposit: {d_deposit})"
        )
    y_loan = candidate_allocation(t, s, v, params.R, params)
    y_deposit = candidate_allocation(t, s, v, params.r, params)
    w = v - params.c * t

    warnings: tuple[str, ...] = ()
    if y_loan > y_deposit:
        warnings = (DEGENERATE_ORDERING,)
        # both branch inequalities can hold at once; prefer the deposit branch
        if w >= y_deposit:
            return PolicyDecision(y_deposit, 0.0, w - y_deposit, Regime.DEPOSIT, warnings)
    if w <= y_loan:
        return PolicyDecision(y_loan, y_loan - w, 0.0, Regime.BORROW, warnings)
    if w >= y_deposit:
        return PolicyDecision(y_deposit, 0.0, w - y_deposit, Regime.DEPOSIT, warnings)
    return PolicyDecision(w, 0.0, 0.0, Regime.CONSTRAINED, warnings)


def value_function(t: float, v: float, rate: float, params: MarketParams) -> float:
    """Logarithm of the effective wealth.

    With ``rate = r`` this is the no-loan value function, with ``rate = R``
    the loan one. Raises :class:`DomainError` when the effective wealth is
    not positive.
    """
    d = effective_wealth(t, v, rate, params).d
    if not d > 0:
        raise DomainError(f"effective wealth {d} is not positive at t={t}, v={v}")
    return math.log(d)


def complete_allocation(y: float, state: StatePoint, params: MarketParams) -> tuple[float, float]:
    """Loan and deposit that finance a risky position ``y`` at ``state``."""
    w = state.v - params.c * state.t
    return max(0.0, y - w), max(0.0, w - y)


def regime_of(l: float, b: float) -> Regime:
    if l > 0:
        return Regime.BORROW
    if b > 0:
        return Regime.DEPOSIT
    return Regime.CONSTRAINED


# Policies usable by the simulator. Each is a callable StatePoint -> PolicyDecision;
# ``kernel`` identifies the compiled-loop equivalent as (code, scale).

KERNEL_OPTIMAL = 0
KERNEL_DEPOSIT_CANDIDATE = 1
KERNEL_ZERO_RISK = 2
KERNEL_UNCAPPED_CANDIDATE = 3


@dataclass(frozen=True)
class OptimalPolicy:
    """Three-regime optimal policy, optionally with the risky position scaled.

    A scale other than one multiplies ``y`` and refinances the difference
    through the bank; the regime label then follows the bank position.
    """

    params: MarketParams
    scale: float = 1.0

    @property
    def kernel(self) -> tuple[int, float]:
        return KERNEL_OPTIMAL, self.scale

    def __call__(self, state: StatePoint) -> PolicyDecision:
        base = optimal_policy(state, self.params)
        if self.scale == 1.0:
            return base
        y = self.scale * base.y
        l, b = complete_allocation(y, state, self.params)
        return PolicyDecision(y, l, b, regime_of(l, b), base.warnings)


@dataclass(frozen=True)
class DepositCandidatePolicy:
    """``scale`` times the deposit-rate candidate, capped at the free wealth.

    The cap keeps the deposit nonnegative; every capped decision carries a
    warning so the simulator can count it.
    """

    params: MarketParams
    scale: float = 1.0

    @property
    def kernel(self) -> tuple[int, float]:
        return KERNEL_DEPOSIT_CANDIDATE, self.scale

    def __call__(self, state: StatePoint) -> PolicyDecision:
        params = self.params
        if not effective_wealth(state.t, state.v, params.r, params).d > 0:
            raise DomainError(f"effective wealth must be positive at {state}")
        y = self.scale * candidate_allocation(state.t, state.s, state.v, params.r, params)
        w = state.v - params.c * state.t
        if y > w:
            return PolicyDecision(w, 0.0, 0.0, Regime.CONSTRAINED, (CLIPPED_TO_FREE_WEALTH,))
        return PolicyDecision(y, 0.0, w - y, regime_of(0.0, w - y))


@dataclass(frozen=True)
class ZeroRiskPolicy:
    """Keep everything in the bank, borrowing only if free wealth is negative."""

    params: MarketParams

    @property
    def kernel(self) -> tuple[int, float]:
        return KERNEL_ZERO_RISK, 0.0

    def __call__(self, state: StatePoint) -> PolicyDecision:
        l, b = complete_allocation(0.0, state, self.params)
        return PolicyDecision(0.0, l, b, regime_of(l, b))


@dataclass(frozen=True)
class UncappedCandidatePolicy:
    """``scale`` times the deposit-rate candidate with no cap.

    The bank balance ``w - y`` may turn negative, which amounts to borrowing
    at the deposit rate. Such decisions are not admissible; they carry a
    warning and the simulator counts them as clip events instead of
    correcting them. Used by the optimality oracle, where capping forces
    short sales once free wealth is negative.
    """

    params: MarketParams
    scale: float = 1.0

    @property
    def kernel(self) -> tuple[int, float]:
        return KERNEL_UNCAPPED_CANDIDATE, self.scale

    def __call__(self, state: StatePoint) -> PolicyDecision:
        params = self.params
        if not effective_wealth(state.t, state.v, params.r, params).d > 0:
            raise DomainError(f"effective wealth must be positive at {state}")
        y = self.scale * candidate_allocation(state.t, state.s, state.v, params.r, params)
        b = state.v - params.c * state.t - y
        if b < 0:
            return PolicyDecision(y, 0.0, b, Regime.BORROW, (CLIPPED_TO_FREE_WEALTH,))
        return PolicyDecision(y, 0.0, b, regime_of(0.0, b))


def regime_boundary(t: float, s: float, rate: float, params: MarketParams) -> float:
    """Wealth at which free wealth equals the candidate allocation for ``rate``.

    The candidate is ``a (v - phi)`` with ``a = premium * s / sigma**2``, so the
    boundary solves ``v - c t = a (v - phi)``.
    """
    a = risk_premium(s, rate, params) * s / (params.sigma * params.sigma)
    if a == 1.0:
        raise DomainError(f"no regime boundary for rate {rate}: candidate slope in v equals one")
    return (params.c * t - a * phi(t, rate, params)) / (1.0 - a)


@dataclass(frozen=True)
class ContinuityScan:
    boundaries: tuple[float, float]
    max_relative_jump: float
    regime_sequence: list[str]

    @property
    def ordered(self) -> bool:
        return self.regime_sequence == ["Borrow", "Constrained", "Deposit"]


def continuity_scan(params: MarketParams, t: float, s: float, rel_step: float = 1e-6,
                    half_width: int = 50, coarse_points: int = 2001) -> ContinuityScan:
    """Scan wealth across both regime boundaries at fixed ``(t, s)``.

    Around each boundary ``v`` moves geometrically by ``1 + rel_step``; the
    jump between neighbours is ``|dy| / max(|y|, v)``. Since ``y`` has slope
    at most one in ``v`` wherever the regimes are well ordered, a continuous
    policy keeps this at or below ``rel_step``. A coarse scan from half the
    loan boundary to twice the deposit boundary records the regime order.
    """
    v_loan = regime_boundary(t, s, params.R, params)
    v_dep = regime_boundary(t, s, params.r, params)
    if not 0 < v_loan <= v_dep:
        raise DomainError(f"regime boundaries not ordered at t={t}, s={s}: {v_loan}, {v_dep}")
    worst = 0.0
    for vb in (v_loan, v_dep):
        vs = [vb * (1.0 + rel_step) ** j for j in range(-half_width, half_width + 1)]
        ys = [optimal_policy(StatePoint(t, s, v), params).y for v in vs]
        for j in range(len(vs) - 1):
            scale = max(abs(ys[j]), abs(ys[j + 1]), vs[j + 1])
            worst = max(worst, abs(ys[j + 1] - ys[j]) / scale)
    sequence: list[str] = []
    lo, hi = 0.5 * v_loan, 2.0 * v_dep
    for j in range(coarse_points):
        v = lo + (hi - lo) * j / (coarse_points - 1)
        label = optimal_policy(StatePoint(t, s, v), params).regime.label
        if not sequence or sequence[-1] != label:
            sequence.append(label)
    return ContinuityScan((v_loan, v_dep), worst, sequence)
