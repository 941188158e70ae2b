"""Time the compiled and numpy simulation kernels on the same workload.

    python3 benchmarks/bench_kernels.py [--paths N] [--steps M] [--repeat K]

Normals are drawn once up front so only the kernels are timed; both
backends are checked to produce the same terminal wealth.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dcpension._backend import available_backends, get_kernel
from dcpension.market import MarketParams
from dcpension.policy import OptimalPolicy, UncappedCandidatePolicy, ZeroRiskPolicy
from dcpension.simulation import SimConfig, _schedule
from dcpension.streams import path_normals

PARAMS = MarketParams(r=0.03, R=0.06, k=0.5, theta=3.0, sigma=1.5, c=0.2, T=20.0)


def run(kernel, z, config, policy, log_scheme):
    sched = _schedule(config, PARAMS)
    code, scale = policy.kernel
    out = np.empty(z.shape[0])
    kernel(z, config.s0, config.v0, sched.step_ct, sched.phi_r, sched.phi_R, sched.dt,
           sched.coef_a, sched.coef_b, sched.exact, log_scheme, PARAMS.r, PARAMS.R, PARAMS.k,
           PARAMS.theta, PARAMS.sigma**2, PARAMS.c, PARAMS.price_floor, code, scale, out)
    return out


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--paths", type=int, default=20_000)
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    config = SimConfig(args.paths, args.steps, 0.0, 2.0, 1200.0, seed=1)
    t_rng, z = best_of(lambda: path_normals(1, 0, args.paths, args.steps), 1)
    print(f"{args.paths} paths x {args.steps} steps; normals: {t_rng:.3f} s")
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy kernel is available")
    cases = [
        ("optimal, linear", OptimalPolicy(PARAMS), False),
        ("optimal, log", OptimalPolicy(PARAMS), True),
        ("candidate x1.2, log", UncappedCandidatePolicy(PARAMS, 1.2), True),
        ("zero risk, linear", ZeroRiskPolicy(PARAMS), False),
    ]
    header = f"{'case':<22}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}"
    print(header)
    for label, policy, log_scheme in cases:
        timings, outs = {}, {}
        for name in backends:
            kernel = get_kernel(name)
            timings[name], outs[name] = best_of(lambda: run(kernel, z, config, policy, log_scheme), args.repeat)
        line = f"{label:<22}" + "".join(f"{timings[n]:>11.3f}s" for n in backends)
        if len(backends) == 2:
            line += f"{timings['python'] / timings['cython']:>9.1f}x"
            diff = np.max(np.abs(outs["python"] - outs["cython"]) / np.abs(outs["cython"]))
            line += f"   max rel diff {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
