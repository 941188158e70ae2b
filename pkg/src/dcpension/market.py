"""Market constants, the bank account and the mean-reverting risky asset.

The risky price follows

    dS = k (theta - S) dt + sigma dW

and the bank account grows at a constant rate. Exact and Euler transitions
are provided; the exact one is used by the simulator, Euler only for
convergence cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DomainError

PRICE_FLOOR_FRACTION = 1e-6


@dataclass(frozen=True)
class MarketParams:
    """All model constants.

    Attributes
    ----------
    r : deposit rate
    R : loan rate, strictly above ``r``
    k : mean-reversion speed of the risky price
    theta : long-run price level
    sigma : additive price volatility
    c : contribution rate (currency per unit time)
    T : retirement horizon
    """

    r: float
    R: float
    k: float
    theta: float
    sigma: float
    c: float
    T: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{f.name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        if not self.r > 0:
            raise ConfigError(f"r={self.r}: requires r > 0")
        if not self.r < self.R:
            raise ConfigError(f"R={self.R}: requires r < R (r={self.r})")
        for name in ("k", "theta", "sigma", "T"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}={getattr(self, name)}: requires {name} > 0")
        if not self.c >= 0:
            raise ConfigError(f"c={self.c}: requires c >= 0")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MarketParams":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown market keys: {', '.join(unknown)}")
        missing = sorted(names - set(data))
        if missing:
            raise ConfigError(f"missing market keys: {', '.join(missing)}")
        return cls(**{name: data[name] for name in names})

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def replace(self, **changes: float) -> "MarketParams":
        data = self.to_dict()
        data.update(changes)
        return MarketParams(**data)

    @property
    def price_floor(self) -> float:
        """Smallest price the simulator lets the risky asset reach."""
        return PRICE_FLOOR_FRACTION * self.theta


@dataclass(frozen=True)
class StatePoint:
    """A (time, price, wealth) triple."""

    t: float
    s: float
    v: float

    def __post_init__(self) -> None:
        for name in ("t", "s", "v"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"state {name} must be finite, got {value!r}")
        if self.t < 0:
            raise DomainError(f"state time t={self.t} must be nonnegative")
        if not self.s > 0:
            raise DomainError(f"state price s={self.s} must be positive")

    def check_horizon(self, params: MarketParams) -> None:
        if self.t > params.T:
            raise DomainError(f"state time t={self.t} exceeds horizon T={params.T}")


def bank_factor(t0: float, t1: float, rate: float) -> float:
    """Growth factor of a bank balance between ``t0`` and ``t1``."""
    if t0 > t1:
        raise DomainError(f"bank_factor needs t0 <= t1, got t0={t0}, t1={t1}")
    return math.exp(rate * (t1 - t0))


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise DomainError(f"time step must be positive, got dt={dt}")


def ou_transition_coefficients(dt: float, params: MarketParams) -> tuple[float, float]:
    """Return ``(decay, noise_scale)`` of the exact transition over ``dt``."""
    _check_dt(dt)
    k = params.k
    decay = math.exp(-k * dt)
    # -expm1 keeps precision for tiny k*dt
    noise_scale = params.sigma * math.sqrt(-math.expm1(-2.0 * k * dt) / (2.0 * k))
    return decay, noise_scale


def ou_exact_step(s, dt: float, z, params: MarketParams):
    """Advance the price by the exact Gaussian transition.

    ``s`` and ``z`` may be floats or numpy arrays of matching shape.
    """
    decay, noise_scale = ou_transition_coefficients(dt, params)
    return params.theta + (s - params.theta) * decay + noise_scale * z


def ou_euler_step(s, dt: float, z, params: MarketParams):
    """Advance the price by one Euler-Maruyama step."""
    _check_dt(dt)
    return s + params.k * (params.theta - s) * dt + params.sigma * math.sqrt(dt) * z


def ou_moments(s0: float, t: float, params: MarketParams) -> tuple[float, float]:
    """Mean and variance of the price at time ``t`` given ``S(0) = s0``."""
    if t < 0:
        raise DomainError(f"ou_moments needs t >= 0, got t={t}")
    k = params.k
    mean = params.theta + (s0 - params.theta) * math.exp(-k * t)
    variance = params.sigma**2 * -math.expm1(-2.0 * k * t) / (2.0 * k)
    return mean, variance


def sample_ou_terminal(
    s0: float, t: float, n_steps: int, params: MarketParams, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Draw ``size`` prices at ``t`` by composing ``n_steps`` exact steps."""
    if n_steps < 1:
        raise DomainError("n_steps must be at least 1")
    dt = t / n_steps
    s = np.full(size, float(s0))
    for _ in range(n_steps):
        s = ou_exact_step(s, dt, rng.standard_normal(size), params)
    return s
