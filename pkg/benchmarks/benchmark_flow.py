"""Time the compiled kernels against the pure-python fallback.

Runs the same workloads in two subprocesses, one with numba acceleration as
installed and one with SOFTBARRIER_NO_NUMBA=1, and prints both timings with
the speedup. The workloads cover the hot path at its three call depths: raw
flow-plus-sensitivity integration, the batched barrier sweep, and full
filtered control (single steps and a closed-loop run).

Usage:
    python3 benchmarks/benchmark_flow.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _worker(repeat):
    import numpy as np

    from softbarrier import (
        HorizonGrid,
        NUMBA_ENABLED,
        SimConfig,
        build_pendulum_scenario,
        default_config,
        integrate_flow,
        simulate,
    )
    from softbarrier.barrier import soft_barrier_grid
    from softbarrier.filter import control_single
    from softbarrier.sim import sample_states

    scenario = build_pendulum_scenario("wide")
    cfg = default_config(scenario)
    grid = HorizonGrid(50, 0.1, 5)
    X100 = sample_states(scenario, 100, seed=0)
    X300 = sample_states(scenario, 300, seed=1)
    X50 = sample_states(scenario, 50, seed=2)
    sim_cfg = SimConfig(x0=[0.5, 0.0], duration=5.0, delta_t=0.1,
                        law="single")

    workloads = {
        "flow_sensitivity_100_states":
            lambda: [integrate_flow(scenario, x, grid) for x in X100],
        "barrier_grid_300_states":
            lambda: soft_barrier_grid(scenario, X300, grid, cfg.rho1),
        "filter_step_50_states":
            lambda: [control_single(scenario, x, cfg) for x in X50],
        "closed_loop_5s_run":
            lambda: simulate(scenario, sim_cfg, cfg),
    }

    t0 = time.perf_counter()
    integrate_flow(scenario, X100[0], grid)
    first_call = time.perf_counter() - t0

    timings = {}
    for name, fn in workloads.items():
        fn()  # warm any remaining compile targets off the clock
        best = float("inf")
        for _ in range(repeat):
            start = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - start)
        timings[name] = best
    print(json.dumps({
        "numba_enabled": NUMBA_ENABLED,
        "first_flow_call_s": first_call,
        "timings": timings,
    }))


def _spawn(repeat, fallback):
    env = dict(os.environ)
    if fallback:
        env["SOFTBARRIER_NO_NUMBA"] = "1"
    else:
        env.pop("SOFTBARRIER_NO_NUMBA", None)
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker",
         "--repeat", str(repeat)],
        capture_output=True, text=True, env=env, check=True,
    )
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions per workload (best-of)")
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.worker:
        _worker(args.repeat)
        return 0

    accel = _spawn(args.repeat, fallback=False)
    plain = _spawn(args.repeat, fallback=True)
    if not accel["numba_enabled"]:
        print("note: numba unavailable; both columns ran the fallback")

    name_w = max(len(n) for n in accel["timings"]) + 2
    print(f"{'workload':<{name_w}}{'accelerated':>12}{'fallback':>12}"
          f"{'speedup':>9}")
    for name, fast in accel["timings"].items():
        slow = plain["timings"][name]
        print(f"{name:<{name_w}}{fast:>11.4f}s{slow:>11.4f}s"
              f"{slow / fast:>8.1f}x")
    print(f"\nfirst flow call (includes compile): "
          f"{accel['first_flow_call_s']:.2f} s accelerated, "
          f"{plain['first_flow_call_s']:.2f} s fallback")
    return 0


if __name__ == "__main__":
    sys.exit(main())
