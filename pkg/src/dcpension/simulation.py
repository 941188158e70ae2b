"""Monte Carlo simulation of the (price, wealth) system under a policy.

A single Brownian driver moves both coordinates: the price takes an exact
(or Euler) step and the wealth picks up ``y * dS / S`` from the realized
price increment, plus bank interest and the contribution flow:

    V' = V + (r b - R l + c) dt + y (S' - S) / S
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _pykernels as slots
from ._backend import get_kernel
from .errors import AdmissibilityError, DomainError
from .market import MarketParams, StatePoint, ou_euler_step, ou_exact_step, ou_transition_coefficients
from .policy import PolicyDecision, Regime, phi
from .streams import check_seed, path_normals

BUDGET_TOLERANCE = 1e-9
DEFAULT_BLOCK_SIZE = 2048

Policy = Callable[[StatePoint], PolicyDecision]


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run parameters.

    ``t0 == T`` is accepted and means no evolution: every path ends at ``v0``.

    ``wealth_scheme="linear"`` applies the wealth increment as written,
    ``V' = V + (r b - R l + c) dt + y dS / S``. With Gaussian price steps a
    leveraged position can then overshoot to nonpositive wealth.
    ``"log"`` advances the effective wealth of the active bank rate,
    ``D = V - phi(t)``, which is self-financing, as
    ``D' = D exp(rate dt + p (dS / S - rate dt) - p**2 sigma**2 dt / (2 S**2))``
    with ``p = y / D``. It stays positive, converges to the same process and
    is exact for ``y = 0``.
    """

    n_paths: int
    n_steps: int
    t0: float
    s0: float
    v0: float
    seed: int = 0
    stepper: str = "exact"
    wealth_scheme: str = "linear"

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be at least 1, got {self.n_paths}")
        if self.n_steps < 1:
            raise DomainError(f"n_steps must be at least 1, got {self.n_steps}")
        if self.t0 < 0:
            raise DomainError(f"t0 must be nonnegative, got {self.t0}")
        if not self.s0 > 0:
            raise DomainError(f"s0 must be positive, got {self.s0}")
        if self.stepper not in ("exact", "euler"):
            raise DomainError(f"stepper must be 'exact' or 'euler', got {self.stepper!r}")
        if self.wealth_scheme not in ("linear", "log"):
            raise DomainError(f"wealth_scheme must be 'linear' or 'log', got {self.wealth_scheme!r}")
        check_seed(self.seed)

    def check(self, params: MarketParams) -> None:
        if self.t0 > params.T:
            raise DomainError(f"t0={self.t0} exceeds horizon T={params.T}")

    def replace(self, **changes) -> "SimConfig":
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        data.update(changes)
        return SimConfig(**data)


@dataclass
class PathStats:
    mean_terminal_wealth: float
    var_terminal_wealth: float
    mean_log_terminal_wealth: float | None
    se_log_terminal_wealth: float | None
    regime_occupancy: dict[str, float]
    floor_hits: int
    clip_events: int
    degenerate_events: int = 0
    domain_events: int = 0
    n_paths: int = 0
    n_steps: int = 0
    terminal_wealth: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "mean_terminal_wealth": self.mean_terminal_wealth,
            "var_terminal_wealth": self.var_terminal_wealth,
            "mean_log_terminal_wealth": self.mean_log_terminal_wealth,
            "se_log_terminal_wealth": self.se_log_terminal_wealth,
            "regime_occupancy": dict(self.regime_occupancy),
            "floor_hits": self.floor_hits,
            "clip_events": self.clip_events,
            "degenerate_events": self.degenerate_events,
            "domain_events": self.domain_events,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
        }


@dataclass
class RunResult:
    """Terminal wealth per path and event counters of one policy."""

    terminal_wealth: np.ndarray
    counters: np.ndarray


def mean_and_variance(x: np.ndarray) -> tuple[float, float]:
    """Mean and unbiased variance with exactly rounded sums.

    The data are shifted by their first element first, so identical
    samples give a variance of exactly zero.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    shift = float(x[0])
    d = x - shift
    mean_d = math.fsum(d) / n
    if n == 1:
        return shift + mean_d, 0.0
    var = math.fsum((d - mean_d) ** 2) / (n - 1)
    return shift + mean_d, var


def standard_error(x: np.ndarray) -> float:
    _, var = mean_and_variance(x)
    return math.sqrt(var / np.asarray(x).size)


def _advance(state: StatePoint, decision: PolicyDecision, dt: float, z: float,
             params: MarketParams, stepper: str, scheme: str = "linear",
             phis: tuple[float, float, float, float] | None = None) -> tuple[float, float, bool]:
    if not dt > 0:
        raise DomainError(f"time step must be positive, got dt={dt}")
    if stepper == "exact":
        s_next = ou_exact_step(state.s, dt, z, params)
    elif stepper == "euler":
        s_next = ou_euler_step(state.s, dt, z, params)
    else:
        raise DomainError(f"unknown stepper {stepper!r}")
    floored = s_next < params.price_floor
    if floored:
        s_next = params.price_floor
    r, R, c = params.r, params.R, params.c
    b, l, y, s, v = decision.b, decision.l, decision.y, state.s, state.v
    v_next = v + (r * b - R * l + c) * dt + y * (s_next - s) / s
    if scheme == "log":
        if phis is None:
            t_next = min(state.t + dt, params.T)
            phis = (phi(state.t, r, params), phi(t_next, r, params),
                    phi(state.t, R, params), phi(t_next, R, params))
        if l > 0:
            rate, phi_now, phi_next = R, phis[2], phis[3]
        else:
            rate, phi_now, phi_next = r, phis[0], phis[1]
        d = v - phi_now
        if not d > 0:
            raise DomainError(f"effective wealth {d} is not positive at {state}")
        p = y / d
        sig2 = params.sigma * params.sigma
        g = rate * dt + p * ((s_next - s) / s - rate * dt) - 0.5 * p * p * sig2 * dt / (s * s)
        v_next = d * math.exp(g) + phi_next
    elif scheme != "linear":
        raise DomainError(f"unknown wealth scheme {scheme!r}")
    return s_next, v_next, floored


def wealth_step(
    state: StatePoint,
    decision: PolicyDecision,
    dt: float,
    z: float,
    params: MarketParams,
    stepper: str = "exact",
    scheme: str = "linear",
) -> tuple[float, float]:
    """Advance price and wealth one step with the same normal draw ``z``.

    A price below the floor is raised to it before the wealth update.
    """
    s_next, v_next, _ = _advance(state, decision, dt, z, params, stepper, scheme)
    return s_next, v_next


def check_admissible(decision: PolicyDecision, state: StatePoint, params: MarketParams, where: str) -> None:
    if decision.l < 0 or decision.b < 0:
        raise AdmissibilityError(f"{where}: negative bank position l={decision.l}, b={decision.b}")
    if decision.l * decision.b != 0:
        raise AdmissibilityError(f"{where}: simultaneous loan {decision.l} and deposit {decision.b}")
    residual = decision.budget_residual(state, params)
    if residual > BUDGET_TOLERANCE:
        raise AdmissibilityError(f"{where}: budget identity violated by relative {residual:.3e}")


@dataclass(frozen=True)
class _Schedule:
    dt: float
    times: np.ndarray
    step_ct: np.ndarray
    phi_r: np.ndarray
    phi_R: np.ndarray
    coef_a: float
    coef_b: float
    exact: bool


def _schedule(config: SimConfig, params: MarketParams) -> _Schedule:
    dt = (params.T - config.t0) / config.n_steps
    times = np.array([config.t0 + i * dt for i in range(config.n_steps)])
    step_ct = np.array([params.c * t for t in times])
    grid = list(times) + [params.T]
    phi_r = np.array([phi(t, params.r, params) for t in grid])
    phi_R = np.array([phi(t, params.R, params) for t in grid])
    if config.stepper == "exact":
        coef_a, coef_b = ou_transition_coefficients(dt, params)
    else:
        coef_a, coef_b = dt, params.sigma * math.sqrt(dt)
    return _Schedule(dt, times, step_ct, phi_r, phi_R, coef_a, coef_b, config.stepper == "exact")


def _run_generic_block(policy: Policy, z: np.ndarray, start: int, config: SimConfig,
                       params: MarketParams, sched: _Schedule, out: np.ndarray) -> np.ndarray:
    counters = np.zeros(slots.N_COUNTERS, dtype=np.int64)
    for row in range(z.shape[0]):
        s, v = config.s0, config.v0
        for i in range(config.n_steps):
            state = StatePoint(float(sched.times[i]), s, v)
            decision = policy(state)
            check_admissible(decision, state, params, f"path {start + row}, step {i}")
            counters[slots.N_BORROW + int(decision.regime)] += 1
            phis = (sched.phi_r[i], sched.phi_r[i + 1], sched.phi_R[i], sched.phi_R[i + 1])
            s, v, floored = _advance(state, decision, sched.dt, float(z[row, i]), params,
                                     config.stepper, config.wealth_scheme, phis)
            counters[slots.FLOOR_HITS] += floored
        out[row] = v
    return counters


def run_paths(
    policies: Sequence[Policy],
    config: SimConfig,
    params: MarketParams,
    workers: int = 1,
    backend: str | None = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> list[RunResult]:
    """Simulate every policy on the same random paths (common random numbers).

    Policies exposing a ``kernel`` attribute run in the compiled or numpy
    kernel; any other callable is stepped path by path in Python with the
    allocation constraints checked at every step.
    """
    config.check(params)
    n = config.n_paths
    outs = [np.empty(n) for _ in policies]
    if config.t0 == params.T:
        for out in outs:
            out[:] = config.v0
        return [RunResult(out, np.zeros(slots.N_COUNTERS, dtype=np.int64)) for out in outs]

    sched = _schedule(config, params)
    kernel = get_kernel(backend)
    sig2 = params.sigma * params.sigma

    def run_block(bounds: tuple[int, int]) -> list[np.ndarray]:
        start, stop = bounds
        z = path_normals(config.seed, start, stop, config.n_steps)
        block_counters = []
        for policy, out in zip(policies, outs):
            if hasattr(policy, "kernel"):
                code, scale = policy.kernel
                block_counters.append(kernel(
                    z, float(config.s0), float(config.v0), sched.step_ct, sched.phi_r, sched.phi_R,
                    sched.dt, sched.coef_a, sched.coef_b, sched.exact, config.wealth_scheme == "log",
                    params.r, params.R, params.k, params.theta, sig2, params.c,
                    params.price_floor, int(code), float(scale), out[start:stop],
                ))
            else:
                block_counters.append(
                    _run_generic_block(policy, z, start, config, params, sched, out[start:stop])
                )
        return block_counters

    blocks = [(a, min(a + block_size, n)) for a in range(0, n, block_size)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_block = list(pool.map(run_block, blocks))
    else:
        per_block = [run_block(bounds) for bounds in blocks]

    results = []
    for j, out in enumerate(outs):
        counters = np.zeros(slots.N_COUNTERS, dtype=np.int64)
        for block in per_block:
            counters += block[j]
        results.append(RunResult(out, counters))
    return results


def summarize(result: RunResult, config: SimConfig, initial_regime: Regime | None = None) -> PathStats:
    v = result.terminal_wealth
    counters = result.counters
    mean_v, var_v = mean_and_variance(v)
    # population variance: a single path has zero spread
    var_v = var_v * (v.size - 1) / v.size if v.size > 1 else 0.0
    if np.all(v > 0):
        log_v = log_terminal(v)
        mean_log, var_log = mean_and_variance(log_v)
        se_log = math.sqrt(var_log / v.size)
    else:
        mean_log = se_log = None
    occupied = counters[slots.N_BORROW:slots.N_DEPOSIT + 1]
    total = int(occupied.sum())
    if total:
        occupancy = {Regime(i).label: int(occupied[i]) / total for i in range(3)}
    else:
        occupancy = {regime.label: 0.0 for regime in Regime}
        if initial_regime is not None:
            occupancy[initial_regime.label] = 1.0
    return PathStats(
        mean_terminal_wealth=mean_v,
        var_terminal_wealth=var_v,
        mean_log_terminal_wealth=mean_log,
        se_log_terminal_wealth=se_log,
        regime_occupancy=occupancy,
        floor_hits=int(counters[slots.FLOOR_HITS]),
        clip_events=int(counters[slots.CLIP_EVENTS]),
        degenerate_events=int(counters[slots.DEGENERATE_EVENTS]),
        domain_events=int(counters[slots.DOMAIN_EVENTS]),
        n_paths=config.n_paths,
        n_steps=config.n_steps,
        terminal_wealth=v,
    )


def simulate_paths(
    policy: Policy,
    config: SimConfig,
    params: MarketParams,
    workers: int = 1,
    backend: str | None = None,
) -> PathStats:
    """Run ``config.n_paths`` paths under ``policy`` and aggregate them."""
    (result,) = run_paths([policy], config, params, workers=workers, backend=backend)
    initial = None
    if config.t0 == params.T:
        initial = policy(StatePoint(config.t0, config.s0, config.v0)).regime
    return summarize(result, config, initial)


def log_terminal(terminal_wealth: np.ndarray) -> np.ndarray:
    # scalar libm log keeps results independent of array alignment
    return np.fromiter(map(math.log, terminal_wealth), dtype=float, count=terminal_wealth.size)


def log_utility_estimate(terminal_wealth: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error of ``ln V(T)``."""
    bad = np.flatnonzero(~(terminal_wealth > 0))
    if bad.size:
        shown = ", ".join(str(p) for p in bad[:10])
        more = f" (+{bad.size - 10} more)" if bad.size > 10 else ""
        raise DomainError(f"nonpositive terminal wealth on paths {shown}{more}")
    log_v = log_terminal(terminal_wealth)
    mean, var = mean_and_variance(log_v)
    return mean, math.sqrt(var / log_v.size)


def expected_log_utility(
    policy: Policy,
    config: SimConfig,
    params: MarketParams,
    workers: int = 1,
    backend: str | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``E[ln V(T)]`` with its standard error."""
    (result,) = run_paths([policy], config, params, workers=workers, backend=backend)
    return log_utility_estimate(result.terminal_wealth)
