"""Command-line interface: configuration, policy queries, simulation, sweeps
and the verification report.

Subcommands::

    dcpension policy   --config FILE --t T --s S --v V
    dcpension simulate --config FILE [--paths N --steps M --seed S] [--csv FILE]
    dcpension sweep    --config FILE (--preset NAME | --param P --from A --to B --points N) --out FILE
    dcpension verify   --config FILE [--full]

Exit status is 0 on success, 1 when a verification check fails and 2 for
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, TextIO

import numpy as np

from ._backend import available_backends
from .errors import ConfigError, DomainError
from .market import MarketParams, StatePoint
from .policy import (
    OptimalPolicy,
    Regime,
    candidate_allocation,
    continuity_scan,
    optimal_policy,
    value_function,
)
from .simulation import SimConfig, log_terminal, simulate_paths
from . import verification as ver

# Stated constants of the numerical section; everything else must be supplied.
STATED_DEFAULTS = {"r": 0.03, "R": 0.06, "c": 0.2, "T": 20.0}
REQUIRED_KEYS = ("k", "theta", "sigma", "s0")
SIM_DEFAULTS: dict[str, Any] = {
    "t0": 5.0,
    "v0": 500.0,
    "n_paths": 10_000,
    "n_steps": 200,
    "seed": 0,
    "stepper": "exact",
    "wealth_scheme": "linear",
}
CONFIG_KEYS = frozenset(STATED_DEFAULTS) | frozenset(REQUIRED_KEYS) | frozenset(SIM_DEFAULTS)

SWEEP_PARAMETERS = ("sigma", "v", "R", "s", "t")
PRESETS = ("fig1", "fig2", "fig3", "fig5")
CSV_HEADER = "parameter_value,y_star,regime,l,b"

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


def parse_config(source: str | Path | Mapping[str, Any]) -> tuple[MarketParams, SimConfig]:
    """Read a JSON configuration into market parameters and simulation defaults.

    ``source`` may be a path, inline JSON text or an already-decoded mapping.
    Unknown keys are rejected. ``r``, ``R``, ``c`` and ``T`` default to
    0.03, 0.06, 0.2 and 20; ``k``, ``theta``, ``sigma`` and ``s0`` are
    required.
    """
    if isinstance(source, Mapping):
        data = dict(source)
    else:
        text = str(source)
        if not text.lstrip().startswith(("{", "[")):
            text = Path(text).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON configuration: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(f"{key} required: no paper default exists")
    market = {key: data.get(key, default) for key, default in STATED_DEFAULTS.items()}
    market.update({key: data[key] for key in ("k", "theta", "sigma")})
    params = MarketParams(**market)

    sim = {key: data.get(key, default) for key, default in SIM_DEFAULTS.items()}
    for key in ("n_paths", "n_steps", "seed"):
        if isinstance(sim[key], bool) or not isinstance(sim[key], int):
            raise ConfigError(f"{key} must be an integer, got {sim[key]!r}")
    for key in ("t0", "v0", "s0"):
        value = sim.get(key, data.get(key))
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{key} must be a finite real number, got {value!r}")
    try:
        config = SimConfig(s0=float(data["s0"]), **{**sim, "t0": float(sim["t0"]), "v0": float(sim["v0"])})
        config.check(params)
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return params, config


@dataclass(frozen=True)
class SweepSpec:
    """A one-parameter scan of the optimal policy around ``fixed_state``."""

    parameter: str
    start: float
    stop: float
    points: int
    fixed_state: StatePoint
    preset: str | None = None
    sigma: float | None = None  # volatility override used by presets

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"parameter must be one of {', '.join(SWEEP_PARAMETERS)}, got {self.parameter!r}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop) and self.start < self.stop):
            raise ConfigError(f"sweep range requires from < to, got [{self.start}, {self.stop}]")
        if isinstance(self.points, bool) or not isinstance(self.points, int) or self.points < 2:
            raise ConfigError(f"points must be an integer >= 2, got {self.points!r}")

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class SweepRow:
    parameter_value: float
    y_star: float
    regime: Regime
    l: float
    b: float


def preset_spec(name: str, s0: float, start: float | None = None, stop: float | None = None,
                points: int | None = None) -> SweepSpec:
    """Sweep definition for a figure preset.

    fig1/fig2 scan sigma over [1, 2.4] at v = 500 / 1200; fig3 scans v over
    [500, 1200] at sigma = 0.2; fig5 scans the loan rate, by default over
    [0.04, 0.10], with the range overridable. All at t = 5 and price ``s0``.
    """
    if name == "fig4":
        raise ConfigError("μ undefined in model; Fig. 4 out of scope")
    if name in ("fig1", "fig2"):
        v = 500.0 if name == "fig1" else 1200.0
        return SweepSpec("sigma", 1.0, 2.4, 15, StatePoint(5.0, s0, v), name)
    if name == "fig3":
        return SweepSpec("v", 500.0, 1200.0, 71, StatePoint(5.0, s0, 500.0), name, sigma=0.2)
    if name == "fig5":
        return SweepSpec("R", 0.04 if start is None else start, 0.10 if stop is None else stop,
                         13 if points is None else points, StatePoint(5.0, s0, 500.0), name)
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def run_sweep(spec: SweepSpec, params: MarketParams) -> list[SweepRow]:
    """Evaluate the optimal policy at every grid point of ``spec``."""
    if spec.sigma is not None:
        params = params.replace(sigma=spec.sigma)
    base = spec.fixed_state
    rows = []
    for x in spec.grid():
        x = float(x)
        p, state = params, base
        if spec.parameter == "sigma":
            p = params.replace(sigma=x)
        elif spec.parameter == "R":
            p = params.replace(R=x)
        else:
            state = StatePoint(**{"t": base.t, "s": base.s, "v": base.v, spec.parameter: x})
        d = optimal_policy(state, p)
        rows.append(SweepRow(x, d.y, d.regime, d.l, d.b))
    return rows


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def emit_csv(rows: Iterable[SweepRow], destination: str | Path | TextIO) -> None:
    """Write sweep rows as CSV with 12 significant digits."""
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join([_fmt(row.parameter_value), _fmt(row.y_star), row.regime.label,
                               _fmt(row.l), _fmt(row.b)]))
    text = "\n".join(lines) + "\n"
    if isinstance(destination, (str, Path)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        destination.write(text)


def read_csv(source: str | Path | TextIO) -> list[SweepRow]:
    """Inverse of :func:`emit_csv`."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, (str, Path)) else source.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or ",".join(reader.fieldnames) != CSV_HEADER:
        raise ValueError(f"expected header {CSV_HEADER!r}")
    return [
        SweepRow(float(r["parameter_value"]), float(r["y_star"]), Regime.from_label(r["regime"]),
                 float(r["l"]), float(r["b"]))
        for r in reader
    ]


# ---------------------------------------------------------------------------
# verification report

ACCEPTANCE_ALPHAS = tuple(round(0.6 + 0.1 * i, 1) for i in range(9))
ACCEPTANCE_PATHS = 100_000
ACCEPTANCE_STEPS = 200
ACCEPTANCE_V0 = 1200.0


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _random_states(params: MarketParams, s0: float, rng: np.random.Generator, n: int) -> list[StatePoint]:
    return [StatePoint(float(rng.uniform(0, params.T)), float(rng.uniform(0.2, 2 * params.theta)),
                       float(rng.uniform(50.0, 5000.0))) for _ in range(n)]


def _check_phi(params: MarketParams) -> dict:
    grid = np.linspace(0.0, params.T, 1000)
    reports = [ver.phi_ode_residual(grid, rate, params) for rate in (params.r, params.R)]
    return {"max_abs": max(r.max_abs for r in reports),
            "boundary": max(abs(r.boundary) for r in reports),
            "passed": all(r.passed for r in reports)}


def _check_f_pde(params: MarketParams) -> dict:
    rep = ver.f_pde_residual(np.linspace(0.1 * params.theta, 3 * params.theta, 200), params)
    return {"max_abs": rep.max_abs, "passed": rep.passed and rep.boundary == 0.0}


def _check_terminal(params: MarketParams) -> dict:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        v = float(rng.uniform(0.1, 5000.0))
        z = float(rng.uniform(1e-3, 10.0))
        for rate in (params.r, params.R):
            worst = max(worst, _rel(value_function(params.T, v, rate, params), math.log(v)))
        worst = max(worst, _rel(ver.dual_wealth(params.T, z, params), 1.0 / z))
    return {"max_abs": worst, "passed": worst <= 1e-12}


def _check_legendre() -> dict:
    x = np.geomspace(1e-4, 1e4, 100_000)
    z = np.geomspace(0.1, 10.0, 50)
    dual = ver.legendre_transform(x, np.log, z)
    err = float(np.max(np.abs(dual - (-np.log(z) - 1.0))))
    return {"max_abs": err, "passed": err <= 1e-6}


def _check_biconjugate() -> dict:
    x = np.geomspace(1e-2, 1e2, 5000)
    z = 1.0 / x[::-1]
    dual = ver.legendre_transform(x, np.log, z)
    probe = np.linspace(0.5, 5.0, 200)
    back = ver.legendre_inverse(z, dual, probe)
    err = float(np.max(np.abs(back - np.log(probe))))
    return {"max_abs": err, "passed": err <= 1e-5}


def _check_foc(params: MarketParams, s0: float) -> dict:
    rng = np.random.default_rng(11)
    worst, used = 0.0, 0
    while used < 100:
        st = _random_states(params, s0, rng, 1)[0]
        if optimal_policy(st, params).regime is not Regime.DEPOSIT:
            continue
        pa = ver.log_value_partials(st, params.r, params)
        y = ver.foc_allocation(st.t, st.s, st.v, params.r, pa.h_v, pa.h_vv, pa.h_vs, params)
        worst = max(worst, _rel(y, candidate_allocation(st.t, st.s, st.v, params.r, params)))
        used += 1
    return {"max_abs": worst, "passed": worst <= 1e-12}


def _check_continuity(params: MarketParams, s0: float) -> dict:
    scan = continuity_scan(params, t=5.0, s=s0)
    return {"max_abs": scan.max_relative_jump, "regimes": scan.regime_sequence,
            "passed": scan.max_relative_jump <= 1e-6 and scan.ordered}


def _check_hjb(params: MarketParams, s0: float) -> dict:
    st = StatePoint(5.0, s0, 500.0)
    res = ver.hjb_residual(ver.log_value_field(params.r, params), st, params.r, params)
    # diagnostic: the log value function is not expected to zero this residual
    return {"max_abs": abs(res), "asserted": False, "passed": True}


def run_verify(params: MarketParams, s0: float, budget: str = "quick", seed: int = 0,
               workers: int = 1) -> tuple[int, dict]:
    """Run the verification checks and return ``(exit_status, report)``."""
    if budget not in ("quick", "full"):
        raise ConfigError(f"budget must be 'quick' or 'full', got {budget!r}")
    checks = {
        "phi_ode": lambda: _check_phi(params),
        "f_pde": lambda: _check_f_pde(params),
        "terminal_conditions": lambda: _check_terminal(params),
        "legendre_duality": _check_legendre,
        "legendre_biconjugate": _check_biconjugate,
        "foc_consistency": lambda: _check_foc(params, s0),
        "policy_continuity": lambda: _check_continuity(params, s0),
        "hjb_residual_diagnostic": lambda: _check_hjb(params, s0),
    }
    if budget == "full":
        state0 = StatePoint(0.0, s0, ACCEPTANCE_V0)

        def optimality() -> dict:
            curve = ver.mc_policy_optimality(params, state0, ACCEPTANCE_ALPHAS, ACCEPTANCE_PATHS,
                                             ACCEPTANCE_STEPS, seed, workers=workers)
            return {"alpha_star": curve.alpha_star, "unimodal": curve.is_unimodal(),
                    "estimates": curve.estimates, "std_errors": curve.std_errors,
                    "flags": curve.flags,
                    "passed": 0.9 <= curve.alpha_star <= 1.1 and curve.is_unimodal()}

        def gap() -> dict:
            g = ver.value_gap(params, state0, ACCEPTANCE_PATHS, ACCEPTANCE_STEPS, seed, workers=workers)
            return {"gap": g.gap, "std_error": g.std_error, "mc_estimate": g.mc_estimate,
                    "paper_value": g.paper_value, "asserted": False,
                    "passed": math.isfinite(g.gap)}

        checks["policy_optimality"] = optimality
        checks["value_gap"] = gap

    report = {}
    for name, check in checks.items():
        try:
            report[name] = check()
        except (DomainError, ConfigError, ArithmeticError) as exc:
            report[name] = {"error": str(exc), "passed": False}
    status = EXIT_OK if all(entry["passed"] for entry in report.values()) else EXIT_CHECK_FAILED
    return status, report


# ---------------------------------------------------------------------------
# command line

def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cmd_policy(args, params: MarketParams, config: SimConfig) -> int:
    decision = optimal_policy(StatePoint(args.t, args.s, args.v), params)
    sys.stdout.write(_dump(decision.to_dict()))
    return EXIT_OK


def _cmd_simulate(args, params: MarketParams, config: SimConfig) -> int:
    changes = {k: v for k, v in (("n_paths", args.paths), ("n_steps", args.steps), ("seed", args.seed))
               if v is not None}
    config = config.replace(**changes)
    stats = simulate_paths(OptimalPolicy(params), config, params, workers=args.workers, backend=args.backend)
    out = stats.to_dict()
    out["config"] = {name: getattr(config, name) for name in config.__dataclass_fields__}
    sys.stdout.write(_dump(out))
    if args.csv:
        v = stats.terminal_wealth
        logs = log_terminal(np.where(v > 0, v, 1.0))
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write("path,terminal_wealth,log_terminal_wealth\n")
            for i, (vi, li) in enumerate(zip(v.tolist(), logs.tolist())):
                fh.write(f"{i},{vi!r},{li!r}\n" if vi > 0 else f"{i},{vi!r},\n")
    return EXIT_OK


def _cmd_sweep(args, params: MarketParams, config: SimConfig) -> int:
    if args.preset:
        spec = preset_spec(args.preset, config.s0, args.start, args.stop, args.points)
    else:
        if args.param is None or args.start is None or args.stop is None or args.points is None:
            raise ConfigError("sweep needs --preset or all of --param, --from, --to, --points")
        spec = SweepSpec(args.param, args.start, args.stop, args.points,
                         StatePoint(config.t0, config.s0, config.v0))
    emit_csv(run_sweep(spec, params), args.out)
    return EXIT_OK


def _cmd_verify(args, params: MarketParams, config: SimConfig) -> int:
    status, report = run_verify(params, config.s0, "full" if args.full else "quick",
                                seed=config.seed, workers=args.workers)
    sys.stdout.write(_dump(report))
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcpension", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON file or inline JSON object")
        return p

    p = common(sub.add_parser("policy", help="optimal allocation at one state"))
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--v", type=float, required=True)
    p.set_defaults(handler=_cmd_policy)

    p = common(sub.add_parser("simulate", help="Monte Carlo run of the optimal policy"))
    p.add_argument("--paths", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--csv", help="write per-path terminal wealth here")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--backend", choices=available_backends())
    p.set_defaults(handler=_cmd_simulate)

    p = common(sub.add_parser("sweep", help="one-parameter policy scan as CSV"))
    p.add_argument("--preset", choices=PRESETS + ("fig4",))
    p.add_argument("--param", choices=SWEEP_PARAMETERS)
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_sweep)

    p = common(sub.add_parser("verify", help="run the verification checks"))
    p.add_argument("--full", action="store_true", help="include the Monte Carlo oracles")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        params, config = parse_config(args.config)
        return args.handler(args, params, config)
    except (ConfigError, DomainError, OSError) as exc:
        print(f"dcpension: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
