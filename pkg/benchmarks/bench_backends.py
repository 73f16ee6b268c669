"""Benchmark the numba kernels against the pure-numpy fallback.

The backend is fixed at import time by VOLMORT_NO_NUMBA, so this script
re-executes itself in a subprocess for each backend and prints a table.

Usage: python benchmarks/bench_backends.py [--paths 200] [--steps 1000]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def run_workload(n_paths: int, n_steps: int) -> dict:
    import numpy as np

    from volmort import backend
    from volmort.experiments import ScenarioConfig
    from volmort.hedging import build_tables, equilibrium_strategy
    from volmort.kernels import TimeGrid
    from volmort.riccati import RiccatiProblem, solve_riccati
    from volmort.simulate import evolve_wealth, simulate_mu_batch, simulate_paths

    cfg = ScenarioConfig(dt=10.0 / n_steps)
    grid = cfg.grid()
    mp, rp, lp = cfg.mortality_params(), cfg.rate_params(), cfg.liability_params()
    hc = cfg.hedge_config()

    # warm-up triggers JIT compilation on the numba backend
    simulate_mu_batch(mp, TimeGrid(grid.step, 16), 1, seed=0)
    tables = build_tables(hc, grid)
    warm = simulate_paths(mp, rp, grid, 1, seed=0, lp=lp, claims_horizon=cfg.T0)[0]
    equilibrium_strategy(hc, warm, tables)

    out = {"backend": backend()}
    t0 = time.perf_counter()
    simulate_mu_batch(mp, grid, n_paths, seed=1)
    out["simulate_mu_batch"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    solve_riccati(RiccatiProblem((0.0, -1.0), mp.drift, mp.kernels), grid)
    out["solve_riccati"] = time.perf_counter() - t0

    paths = simulate_paths(mp, rp, grid, 20, seed=2, lp=lp, claims_horizon=cfg.T0)
    n0 = tables.n0
    t0 = time.perf_counter()
    for p in paths:
        s = equilibrium_strategy(hc, p, tables)
        evolve_wealth(p, s.u, lp, tables.panel, cfg.x0, n_cells=n0)
    out["strategy_plus_wealth_x20"] = time.perf_counter() - t0
    return out


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.child:
        print(json.dumps(run_workload(args.paths, args.steps)))
        return 0

    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, VOLMORT_NO_NUMBA=disable)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--child",
             "--paths", str(args.paths), "--steps", str(args.steps)],
            env=env, capture_output=True, text=True, check=True,
        )
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    keys = [k for k in results[0] if k != "backend"]
    name_w = max(len(k) for k in keys) + 2
    print(f"workload ({args.paths} paths, {args.steps} steps)".ljust(name_w)
          + "".join(f"{r['backend']:>12}" for r in results) + f"{'speedup':>10}")
    for k in keys:
        times = [r[k] for r in results]
        ratio = times[1] / times[0] if times[0] > 0 else float("inf")
        print(k.ljust(name_w) + "".join(f"{t:>11.3f}s" for t in times) + f"{ratio:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
