"""Command-line interface: scenario simulation, pricing, hedging, estimation
and the packaged experiments.  Scenario options come from a flat JSON config
file (all keys optional; see ScenarioConfig for the defaults) plus a few
common overrides."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .estimation import (estimate_cointegrated, estimate_correlated,
                         estimate_markovian, holder_regularity)
from .experiments import (ScenarioConfig, _write_csv, run_frontier, run_sensitivity,
                          run_showcase, write_claims_csv, write_manifest,
                          write_paths_csv)
from .hedging import build_tables, equilibrium_strategy
from .kernels import TimeGrid
from .pricing import term_structure
from .simulate import evolve_wealth, simulate_paths


def _load_config(args) -> ScenarioConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    cfg = ScenarioConfig.from_dict(data)
    overrides = {}
    for name in ("seed", "n_paths"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "lam", None) is not None:
        overrides["lam"] = args.lam
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _add_common(p, n_paths=False):
    p.add_argument("--config", help="JSON scenario config (flat key/value)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    if n_paths:
        p.add_argument("--n-paths", dest="n_paths", type=int, default=None)


def cmd_simulate(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    paths = simulate_paths(cfg.mortality_params(), cfg.rate_params(), cfg.grid(),
                           cfg.n_paths, seed=cfg.seed, lp=cfg.liability_params(),
                           claims_horizon=cfg.T0)
    write_paths_csv(os.path.join(args.out, "paths.csv"), paths)
    write_claims_csv(os.path.join(args.out, "claims.csv"), paths)
    write_manifest(args.out, cfg, "simulate")
    print(f"wrote {cfg.n_paths} paths to {args.out}")


def cmd_price(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    maturities = [float(x) for x in args.maturities.split(",")]
    rows = term_structure(cfg.mortality_params(), cfg.rate_params(),
                          cfg.market_prices(), maturities)
    _write_csv(os.path.join(args.out, "term_structure.csv"),
               ["t", "T", "bond_price", "longevity_price", "sigma_b", "sigma_l1"], rows)
    write_manifest(args.out, cfg, "price", {"maturities": maturities})
    print(f"wrote term structure for {len(maturities)} maturities to {args.out}")


def cmd_hedge(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    grid = cfg.grid()
    lp = cfg.liability_params()
    hc = cfg.hedge_config()
    tables = build_tables(hc, grid)
    path = simulate_paths(cfg.mortality_params(), cfg.rate_params(), grid, 1,
                          seed=cfg.seed, lp=lp, claims_horizon=cfg.T0)[0]
    s = equilibrium_strategy(hc, path, tables)
    n0 = tables.n0
    x = evolve_wealth(path, s.u, lp, tables.panel, cfg.x0, n_cells=n0)
    t = grid.times
    _write_csv(os.path.join(args.out, "hedge.csv"),
               ["t", "u1", "u2", "gamma1", "gamma3", "X"],
               ((t[k], s.u1[k], s.u2[k], s.gamma1[k], s.gamma3[k], x[k]) for k in range(n0)))
    write_manifest(args.out, cfg, "hedge", {"terminal_wealth": float(x[-1])})
    print(f"wrote hedge.csv ({n0} nodes) to {args.out}")


def _read_columns(path, names):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [np.array([float(r[n]) for r in rows]) for n in names]


def cmd_estimate(args):
    cfg = _load_config(args)
    mu1, mu2 = _read_columns(args.input, ["mu1", "mu2"])
    grid = TimeGrid(args.dt or cfg.dt, len(mu1) - 1)
    fn = {"model1": lambda: estimate_cointegrated(mu1, mu2, grid),
          "model2": lambda: estimate_markovian(mu2, grid),
          "model2prime": lambda: estimate_correlated(mu1, mu2, grid)}[args.model]
    res = fn()
    os.makedirs(args.out, exist_ok=True)
    keys = sorted(res.params)
    _write_csv(os.path.join(args.out, "estimates.csv"),
               ["model", *keys, "rss", "resid_autocorr_lag1", "n_obs"],
               [[res.model, *[res.params[k] for k in keys], res.rss,
                 res.resid_autocorr_lag1, res.n_obs]])
    print(f"{res.model}: " + "  ".join(f"{k}={res.params[k]:.6g}" for k in keys))


def cmd_hurst(args):
    cfg = _load_config(args)
    (x,) = _read_columns(args.input, [args.column])
    grid = TimeGrid(args.dt or cfg.dt, len(x) - 1)
    lags = np.array([int(v) for v in args.lags.split(",")])
    h, se = holder_regularity(x, grid, lags)
    print(f"H_hat = {h:.4f}  (slope se {se:.4f})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_csv(os.path.join(args.out, "hurst.csv"),
                   ["column", "h_hat", "se"], [[args.column, h, se]])


def cmd_showcase(args):
    cfg = _load_config(args)
    terminal = run_showcase(cfg, args.out)
    for k, v in sorted(terminal.items()):
        print(f"terminal discounted wealth [{k}]: {v:.4f}")


def cmd_frontier(args):
    cfg = _load_config(args)
    points = run_frontier(cfg, args.out, progress=True)
    print(f"wrote {len(points)} frontier points to {args.out}")


def cmd_sensitivity(args):
    cfg = _load_config(args)
    values = [float(v) for v in args.values.split(",")]
    run_sensitivity(cfg, args.parameter, values, args.out)
    print(f"wrote sensitivity sweep over {args.parameter} to {args.out}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="volmort",
                                 description="Cointegrated LRD mortality: simulation, pricing, hedging, estimation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate paths and claims to CSV")
    _add_common(p, n_paths=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("price", help="zero-coupon and longevity bond term structure")
    _add_common(p)
    p.add_argument("--maturities", default="1,2,3,4,5,6,7,8,9,10")
    p.set_defaults(fn=cmd_price)

    p = sub.add_parser("hedge", help="equilibrium strategy and wealth on one path")
    _add_common(p)
    p.add_argument("--lam", type=float, default=None, help="risk aversion override")
    p.set_defaults(fn=cmd_hedge)

    p = sub.add_parser("estimate", help="fit model parameters from a (t,mu1,mu2) CSV")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=["model1", "model2", "model2prime"], default="model1")
    p.add_argument("--dt", type=float, default=None)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("hurst", help="Holder-regularity exponent of a path column")
    p.add_argument("--config", help="JSON scenario config")
    p.add_argument("--input", required=True)
    p.add_argument("--column", default="mu1")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--lags", default="1,2,4,8,16")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_hurst)

    p = sub.add_parser("showcase", help="single-seed study: paths, strategies, wealth")
    _add_common(p)
    p.set_defaults(fn=cmd_showcase)

    p = sub.add_parser("frontier", help="efficient frontiers across risk aversions")
    _add_common(p, n_paths=True)
    p.set_defaults(fn=cmd_frontier)

    p = sub.add_parser("sensitivity", help="strategy sweep over c1 or c2")
    _add_common(p)
    p.add_argument("--parameter", choices=["c1", "c2"], default="c2")
    p.add_argument("--values", default="2,4,6")
    p.set_defaults(fn=cmd_sensitivity)

    args = ap.parse_args(argv)
    return args.fn(args) or 0


if __name__ == "__main__":
    sys.exit(main())
