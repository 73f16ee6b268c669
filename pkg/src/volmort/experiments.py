"""Config-driven reproduction of the numerical study: showcase paths and
strategies, efficient frontiers across risk aversions, and the liability
sensitivity sweeps.  Everything is emitted as CSV plus a run manifest; a
standalone matplotlib script consuming the CSVs is written alongside (the
library itself never renders).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._accel import backend
from .affine import Baseline, CIR, VASICEK, MarketPrices, MortalityParams, RateParams
from .estimation import (estimate_cointegrated, estimate_correlated,
                         estimate_markovian)
from .hedging import (NO_HEDGE, HedgeConfig, ModelTables, build_tables,
                      equilibrium_strategy, no_hedge_strategy)
from .kernels import CointegrationDrift, KernelMatrix, KernelSpec, TimeGrid
from .pricing import term_structure
from .simulate import (LiabilityParams, PathBundle, evolve_wealth,
                       simulate_claims, simulate_paths)

VARIANTS = ("model1", "model2", "model2prime", "markovian", "no_hedge")


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat scenario schema; defaults are the paper-style baseline set."""

    h1: float = 0.83
    h2: float = 0.5
    b1: float = 1e-4
    theta1: float = 0.5
    sigma1: float = 2e-3
    mu1_0: float = 8e-5
    b2: float = 1e-4
    theta2: float = 0.6
    sigma2: float = 1e-3
    beta1: float = 1.0
    beta2: float = 0.6
    mu2_0: float = 8e-5
    baseline_coef: float = 0.000004212
    baseline_power: float = 2.68
    baseline_offset: float = 25.0
    r0: float = 0.04
    b_r: float = 0.02
    theta_r: float = 0.6
    sigma_r: float = 0.01
    phi1: float = 0.1
    vartheta: float = 0.1
    c1: float = 8.0
    c2: float = 4.0
    claim_dist: str = "deterministic"
    claim_mean: float = 1.0
    lam: float = 10.0
    x0: float = 100.0
    T0: float = 5.0
    T: float = 10.0
    dt: float = 0.01
    vol_model: str = VASICEK
    n_paths: int = 2000
    seed: int = 20240901
    lambda_grid: tuple = (1.0, 10.0, 20.0, 40.0)
    variants: tuple = ("model1", "model2", "no_hedge", "markovian")
    train_seed: int = 77

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        d = dict(d)
        for key in ("lambda_grid", "variants"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda_grid"] = list(self.lambda_grid)
        d["variants"] = list(self.variants)
        return d

    # -- model objects ------------------------------------------------------

    def grid(self) -> TimeGrid:
        return TimeGrid(self.dt, int(round(self.T / self.dt)))

    def baseline(self) -> Baseline:
        return Baseline(self.baseline_coef, self.baseline_power, self.baseline_offset)

    def mortality_params(self) -> MortalityParams:
        drift = CointegrationDrift(self.b1, self.b2, self.theta1, self.theta2,
                                   self.beta1, self.beta2)
        kern = KernelMatrix(KernelSpec(self.h1), KernelSpec(self.h2), self.beta1)
        m = self.baseline()
        return MortalityParams(drift, kern, self.vol_model, self.sigma1, self.sigma2,
                               (self.mu1_0, self.mu2_0), m, m)

    def rate_params(self) -> RateParams:
        return RateParams(self.b_r, self.theta_r, self.sigma_r, self.r0, self.vol_model)

    def market_prices(self) -> MarketPrices:
        flavor = "deterministic" if self.vol_model == VASICEK else "volatility_driven"
        return MarketPrices(flavor, self.phi1, self.vartheta)

    def liability_params(self) -> LiabilityParams:
        return LiabilityParams(self.c1, self.c2, self.claim_dist, self.claim_mean)

    def hedge_config(self, lam: float | None = None) -> HedgeConfig:
        return HedgeConfig(self.mortality_params(), self.rate_params(),
                           self.market_prices(), self.liability_params(),
                           self.lam if lam is None else lam, self.T0, self.T,
                           flavor=self.vol_model)


# ---------------------------------------------------------------------------
# belief variants
# ---------------------------------------------------------------------------

_THETA_FLOOR = 0.01  # mean-reversion estimates can dip negative on short samples


def fit_variant_params(cfg: ScenarioConfig, which: str) -> MortalityParams:
    """Mortality parameters a ``which``-believing insurer would use.

    model1 / model2 / model2prime re-estimate the mu2 parameters on a
    training path of the true model over [0, T0] (the national mu1 side and
    the Hurst exponents are treated as known); markovian keeps the true
    values but flattens both kernels to H = 1/2.
    """
    mp_true = cfg.mortality_params()
    if which == "markovian":
        kern = KernelMatrix(KernelSpec(0.5), KernelSpec(0.5), cfg.beta1)
        return dataclasses.replace(mp_true, kernels=kern)
    if which in ("model1", "model2", "model2prime"):
        sub = TimeGrid(cfg.dt, int(round(cfg.T0 / cfg.dt)))
        train = simulate_paths(mp_true, cfg.rate_params(), sub, 1, seed=cfg.train_seed)[0]
        mu1, mu2 = train.mu[:, 0], train.mu[:, 1]
        if which == "model1":
            est = estimate_cointegrated(mu1, mu2, sub).params
        elif which == "model2":
            est = estimate_markovian(mu2, sub).params
        else:
            est = estimate_correlated(mu1, mu2, sub).params
        beta1 = est["beta1"]
        drift = CointegrationDrift(cfg.b1, est["b2"], cfg.theta1,
                                   max(est["theta2"], _THETA_FLOOR),
                                   beta1, est["beta2"])
        h2 = cfg.h2 if which == "model1" else 0.5
        kern = KernelMatrix(KernelSpec(cfg.h1), KernelSpec(h2), beta1)
        return dataclasses.replace(mp_true, drift=drift, kernels=kern,
                                   sigma2=max(est["sigma2"], 1e-12),
                                   rho=est.get("rho", 0.0))
    if which == "no_hedge":
        return mp_true
    raise ValueError(f"unknown variant {which!r}")


def variant_tables(cfg: ScenarioConfig, grid: TimeGrid) -> dict[str, ModelTables]:
    """Hedge tables per requested variant (built once, shared across paths)."""
    out = {}
    base = cfg.hedge_config()
    for which in cfg.variants:
        mp_v = fit_variant_params(cfg, which)
        flavor = NO_HEDGE if which == "no_hedge" else base.flavor
        cfg_v = dataclasses.replace(base, mp=mp_v, flavor=flavor)
        out[which] = build_tables(cfg_v, grid)
    return out


def _strategy_for(tables: ModelTables, path: PathBundle):
    if tables.cfg.flavor == NO_HEDGE:
        return no_hedge_strategy(tables.cfg, path, tables)
    return equilibrium_strategy(tables.cfg, path, tables)


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".12g")
    return v


def write_manifest(out_dir: str, cfg: ScenarioConfig, experiment: str, extra: dict | None = None) -> None:
    man = {
        "experiment": experiment,
        "package_version": __version__,
        "kernel_backend": backend(),
        "config": cfg.to_dict(),
    }
    if extra:
        man.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)


def write_paths_csv(out_path: str, bundles: list[PathBundle]) -> None:
    """Long-format node rows: path id, t, states, integrals, discount."""
    header = ["path", "t", "mu1", "mu2", "mu_hat1", "mu_hat2", "r", "int_mu2_hat", "disc"]

    def rows():
        for i, b in enumerate(bundles):
            t = b.grid.times
            for j in range(b.grid.n_steps + 1):
                yield (i, t[j], b.mu[j, 0], b.mu[j, 1], b.mu_hat[j, 0], b.mu_hat[j, 1],
                       b.r[j], b.int_mu2_hat[j], b.disc[j])

    _write_csv(out_path, header, rows())


def write_claims_csv(out_path: str, bundles: list[PathBundle]) -> None:
    header = ["path", "time", "size"]

    def rows():
        for i, b in enumerate(bundles):
            for tt, zz in zip(b.claim_times, b.claim_sizes):
                yield (i, float(tt), float(zz))

    _write_csv(out_path, header, rows())


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_showcase(cfg: ScenarioConfig, out_dir: str) -> dict:
    """One seeded path: states, per-variant strategies and wealth, plot script."""
    os.makedirs(out_dir, exist_ok=True)
    grid = cfg.grid()
    mp, rp, lp = cfg.mortality_params(), cfg.rate_params(), cfg.liability_params()
    path = simulate_paths(mp, rp, grid, 1, seed=cfg.seed, lp=lp, claims_horizon=cfg.T0)[0]
    tabs = variant_tables(cfg, grid)
    # wealth always evolves under the true market loadings
    panel_true = build_tables(cfg.hedge_config(), grid).panel

    t = grid.times
    n0 = grid.index_of(cfg.T0)
    write_paths_csv(os.path.join(out_dir, "paths.csv"), [path])
    _write_csv(os.path.join(out_dir, "mu_paths.csv"), ["t", "mu1", "mu2"],
               ((t[j], path.mu[j, 0], path.mu[j, 1]) for j in range(len(t))))
    _write_csv(os.path.join(out_dir, "mu_hat_paths.csv"), ["t", "mu_hat1", "mu_hat2"],
               ((t[j], path.mu_hat[j, 0], path.mu_hat[j, 1]) for j in range(len(t))))
    _write_csv(os.path.join(out_dir, "rate_path.csv"), ["t", "r"],
               ((t[j], path.r[j]) for j in range(len(t))))
    write_claims_csv(os.path.join(out_dir, "claims.csv"), [path])

    strat_rows = []
    wealth_rows = []
    terminal = {}
    for which, tb in tabs.items():
        s = _strategy_for(tb, path)
        x = evolve_wealth(path, s.u, lp, panel_true, cfg.x0, n_cells=n0)
        terminal[which] = float(x[-1])
        for k in range(n0):
            strat_rows.append((which, t[k], s.u1[k], s.u2[k], s.gamma1[k], s.gamma3[k]))
        for k in range(n0 + 1):
            wealth_rows.append((which, t[k], x[k]))
    _write_csv(os.path.join(out_dir, "strategies.csv"),
               ["variant", "t", "u1", "u2", "gamma1", "gamma3"], strat_rows)
    _write_csv(os.path.join(out_dir, "wealth.csv"), ["variant", "t", "X"], wealth_rows)
    _write_plot_script(out_dir)
    write_manifest(out_dir, cfg, "showcase", {"terminal_wealth": terminal})
    return terminal


def run_frontier(cfg: ScenarioConfig, out_dir: str | None = None,
                 progress: bool = False) -> list[dict]:
    """Efficient-frontier points per (variant, lambda) on shared paths.

    All variants are evaluated on the same simulated truth (common random
    numbers), so the per-lambda comparisons report paired differences
    against model1 as well as per-point standard errors.
    """
    grid = cfg.grid()
    mp, rp, lp = cfg.mortality_params(), cfg.rate_params(), cfg.liability_params()
    n0 = grid.index_of(cfg.T0)
    tabs = variant_tables(cfg, grid)
    panel_true = build_tables(cfg.hedge_config(), grid).panel
    lams = list(cfg.lambda_grid)
    xs = {(w, la): np.empty(cfg.n_paths) for w in tabs for la in lams}
    for i in range(cfg.n_paths):
        path = simulate_paths(mp, rp, grid, 1, seed=(cfg.seed, i), lp=lp,
                              claims_horizon=cfg.T0)[0]
        for which, tb in tabs.items():
            base = _strategy_for(tb, path)
            for la in lams:
                if la == tb.cfg.lam:
                    s = base
                else:
                    tb_l = dataclasses.replace(tb, cfg=dataclasses.replace(tb.cfg, lam=la))
                    s = _strategy_for(tb_l, path)
                xs[which, la][i] = evolve_wealth(path, s.u, lp, panel_true, cfg.x0,
                                                 n_cells=n0)[-1]
        if progress and (i + 1) % 200 == 0:
            print(f"  {i + 1}/{cfg.n_paths} paths")
    points = []
    for which in tabs:
        for la in lams:
            x = xs[which, la]
            points.append({
                "label": which, "lambda": la, "n_paths": cfg.n_paths,
                "mean": float(x.mean()), "variance": float(x.var(ddof=1)),
                "se_mean": float(x.std(ddof=1) / np.sqrt(cfg.n_paths)),
            })
    pairs = []
    if "model1" in tabs:
        for which in tabs:
            if which == "model1":
                continue
            for la in lams:
                d = xs["model1", la] - xs[which, la]
                pairs.append({
                    "label": which, "lambda": la,
                    "mean_diff": float(d.mean()),
                    "se_diff": float(d.std(ddof=1) / np.sqrt(cfg.n_paths)),
                    "var_model1": float(xs["model1", la].var(ddof=1)),
                    "var_other": float(xs[which, la].var(ddof=1)),
                })
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "frontier.csv"),
                   ["label", "lambda", "n_paths", "mean", "variance", "se_mean"],
                   ([p["label"], p["lambda"], p["n_paths"], p["mean"], p["variance"], p["se_mean"]]
                    for p in points))
        if pairs:
            _write_csv(os.path.join(out_dir, "frontier_pairs.csv"),
                       ["label", "lambda", "mean_diff", "se_diff", "var_model1", "var_other"],
                       ([q["label"], q["lambda"], q["mean_diff"], q["se_diff"],
                         q["var_model1"], q["var_other"]] for q in pairs))
        write_manifest(out_dir, cfg, "frontier")
    return points


def run_sensitivity(cfg: ScenarioConfig, parameter: str, values, out_dir: str | None = None):
    """Equilibrium strategies on a common seeded path for a c1 or c2 sweep."""
    if parameter not in ("c1", "c2"):
        raise ValueError("parameter must be 'c1' or 'c2'")
    grid = cfg.grid()
    mp, rp = cfg.mortality_params(), cfg.rate_params()
    n0 = grid.index_of(cfg.T0)
    base = cfg.hedge_config()
    tables = build_tables(base, grid)
    path = simulate_paths(mp, rp, grid, 1, seed=cfg.seed, lp=cfg.liability_params(),
                          claims_horizon=cfg.T0)[0]
    t = grid.times
    rows = []
    series = {}
    for v in values:
        lp_v = dataclasses.replace(cfg.liability_params(), **{parameter: float(v)})
        cfg_v = dataclasses.replace(base, lp=lp_v)
        s = equilibrium_strategy(cfg_v, path, dataclasses.replace(tables, cfg=cfg_v))
        series[float(v)] = s
        for k in range(n0):
            rows.append((float(v), t[k], s.u1[k], s.u2[k]))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, f"sensitivity_{parameter}.csv"),
                   [parameter, "t", "u1", "u2"], rows)
        write_manifest(out_dir, cfg, f"sensitivity_{parameter}",
                       {"values": [float(v) for v in values]})
    return series


def _write_plot_script(out_dir: str) -> None:
    script = '''"""Plot the showcase CSVs (generated artifact; run where matplotlib is available)."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows


mu = load("mu_paths.csv")
t = [float(r["t"]) for r in mu]
fig, axes = plt.subplots(2, 2, figsize=(11, 7))
axes[0, 0].plot(t, [float(r["mu1"]) for r in mu], label="mu1")
axes[0, 0].plot(t, [float(r["mu2"]) for r in mu], label="mu2")
axes[0, 0].set_title("simulated mortality pair"); axes[0, 0].legend()

rate = load("rate_path.csv")
axes[0, 1].plot([float(r["t"]) for r in rate], [float(r["r"]) for r in rate])
axes[0, 1].set_title("short rate")

strat = defaultdict(lambda: ([], []))
for r in load("strategies.csv"):
    strat[r["variant"]][0].append(float(r["t"]))
    strat[r["variant"]][1].append(float(r["u1"]))
for name, (tt, u1) in sorted(strat.items()):
    axes[1, 0].plot(tt, u1, label=name)
axes[1, 0].set_title("longevity-bond position u1"); axes[1, 0].legend()

wealth = defaultdict(lambda: ([], []))
for r in load("wealth.csv"):
    wealth[r["variant"]][0].append(float(r["t"]))
    wealth[r["variant"]][1].append(float(r["X"]))
for name, (tt, x) in sorted(wealth.items()):
    axes[1, 1].plot(tt, x, label=name)
axes[1, 1].set_title("discounted wealth"); axes[1, 1].legend()

fig.tight_layout()
fig.savefig("showcase.png", dpi=150)
print("wrote showcase.png")
'''
    with open(os.path.join(out_dir, "plot_showcase.py"), "w") as fh:
        fh.write(script)
