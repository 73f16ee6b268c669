"""Open-loop equilibrium mean-variance hedging.

The BSDE behind the equilibrium control has a closed-form solution whose
coefficients (Gamma, gamma1..3) are outer time integrals of conditional
quantities under a shifted measure (drift-adjusted parameters).  For each
path the integrals are evaluated on the simulation grid with trapezoid
weights; the stochastic part of the conditional means is maintained
incrementally (cost O(n0^2) per path, n0 = strategy nodes).

Controls (amounts in the longevity bond u1 and risk-free bond u2):

  u1 = e^{int r} (lam*phi1 - gamma1) / (psi1(T-t) sigma1)
  u2 = e^{int r} (-lam*phi1/(psi1(T-t) sigma1) + lam*vt/(d1(t) sigma_r)
        + gamma1/(psi1(T-t) sigma1) - gamma3/(d1(t) sigma_r))

with the CIR analog using sqrt-state loadings.  The no-hedge variant holds
u1 = 0 and u2 = e^{int r}(lam*vt - gamma3)/(d1 sigma_r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import _accel
from ._accel import njit
from .affine import (CIR, VASICEK, MarketPrices, MortalityParams, RateParams,
                     deterministic_mean, rate_transform_closed,
                     under_hedging_measure, _psi_for)
from .kernels import TimeGrid, e_theta
from .pricing import InstrumentPanel, instrument_panel
from .simulate import LiabilityParams, PathBundle, evolve_wealth, innovations_from_path

NO_HEDGE = "no_hedge"


@dataclass(frozen=True)
class HedgeConfig:
    mp: MortalityParams
    rp: RateParams
    prices: MarketPrices
    lp: LiabilityParams
    lam: float
    T0: float
    T: float
    flavor: str = VASICEK  # vasicek | cir | no_hedge
    hedge_sign: int = +1   # sign convention of the shifted-measure adjustment
    q_sign: int = +1       # sign convention of the pricing measure

    def __post_init__(self):
        if not 0 < self.T0 < self.T:
            raise ValueError("need 0 < T0 < T")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.flavor not in (VASICEK, CIR, NO_HEDGE):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        base = VASICEK if self.flavor == NO_HEDGE else self.flavor
        if self.mp.vol_model != base or self.rp.vol_model != base:
            raise ValueError("flavor must match the volatility models")


@dataclass
class StrategySeries:
    """Controls and BSDE diagnostics on the strategy nodes t_0..t_{n0-1}."""

    grid: TimeGrid
    n_nodes: int
    u1: np.ndarray
    u2: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray
    big_gamma: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return np.column_stack([self.u1, self.u2])

    @property
    def times(self) -> np.ndarray:
        return self.grid.step * np.arange(self.n_nodes)


@dataclass(frozen=True)
class ModelTables:
    """Path-independent inputs of the per-path strategy recursion.

    p1/q1 (p2/q2) are the W1 (W2) loading lag-tables: p_i from the Riccati
    solution behind exp(Y), q_i from E_Theta behind the hazard forecast,
    both already multiplied by the volatility matrix, so off-diagonal noise
    correlation of a belief flows through them.
    """

    cfg: HedgeConfig
    grid: TimeGrid
    n0: int
    e11: np.ndarray       # E_Theta lag tables under the hedging measure
    e21: np.ndarray
    e22: np.ndarray
    psi_h: np.ndarray     # hedging Riccati solution, f = (0,-1), shape (n0+1, 2)
    p1: np.ndarray
    q1: np.ndarray
    p2: np.ndarray
    q2: np.ndarray
    yquad: np.ndarray     # (1/2) int_0^u psi a psi' dv  (vasicek)
    dbar0: np.ndarray
    dbar1: np.ndarray
    detmean: np.ndarray   # hedging-measure deterministic mean, (n0+1, 2)
    m1_vals: np.ndarray
    m2_vals: np.ndarray
    m2_cum: np.ndarray
    panel: InstrumentPanel
    mp_bar: MortalityParams
    rp_bar: RateParams


def build_tables(cfg: HedgeConfig, grid: TimeGrid) -> ModelTables:
    """Precompute all lag tables for strategies on [0, T0] under ``grid``."""
    n0 = grid.index_of(cfg.T0)
    sub = TimeGrid(grid.step, n0)
    mp_bar, rp_bar = under_hedging_measure(cfg.mp, cfg.rp, cfg.prices, sign=cfg.hedge_sign)
    tabs = e_theta(mp_bar.drift, mp_bar.kernels, sub)
    psi_h = _psi_for(mp_bar, (0.0, -1.0), sub, tabs if cfg.mp.vol_model == VASICEK else None)
    detmean = deterministic_mean(mp_bar, sub, tabs)
    rt = rate_transform_closed(rp_bar, cfg.T0, grid.step)
    t = sub.times
    e21 = tabs.e[:, 1, 0].copy()
    e22 = tabs.e[:, 1, 1].copy()
    yquad = np.zeros(n0 + 1)
    if cfg.mp.vol_model == VASICEK:
        sm = cfg.mp.sigma_matrix
        p1 = sm[0, 0] * psi_h.psi[:, 0] + sm[1, 0] * psi_h.psi[:, 1]
        q1 = sm[0, 0] * e21 + sm[1, 0] * e22
        p2 = sm[1, 1] * psi_h.psi[:, 1]
        q2 = sm[1, 1] * e22
        q = p1**2 + p2**2
        yquad[1:] = 0.5 * np.cumsum(0.5 * grid.step * (q[1:] + q[:-1]))
    else:
        # CIR loadings are state-dependent; the cir series applies them inline
        p1 = cfg.mp.sigma1 * psi_h.psi[:, 0]
        q1 = cfg.mp.sigma1 * e21
        p2 = cfg.mp.sigma2 * psi_h.psi[:, 1]
        q2 = cfg.mp.sigma2 * e22
    panel = instrument_panel(cfg.mp, cfg.rp, cfg.prices, grid, cfg.T, n0, cfg.q_sign)
    return ModelTables(
        cfg=cfg, grid=grid, n0=n0,
        e11=tabs.e[:, 0, 0].copy(), e21=e21, e22=e22,
        psi_h=psi_h.psi, p1=p1, q1=q1, p2=p2, q2=q2,
        yquad=yquad, dbar0=rt.d0, dbar1=rt.d1,
        detmean=detmean, m1_vals=cfg.mp.baseline1(t), m2_vals=cfg.mp.baseline2(t),
        m2_cum=cfg.mp.baseline2.cumulative(t), panel=panel,
        mp_bar=mp_bar, rp_bar=rp_bar,
    )


# ---------------------------------------------------------------------------
# Vasicek per-path series (numba + numpy backends)
# ---------------------------------------------------------------------------


def _vas_series_loop(n0, dt, e21, e22, p1, q1, p2, q2, yquad, dbar0, dbar1, detmean2,
                     m2_vals, m2_cum, c_real, sh1, sh2, r_path, disc,
                     lam, phi1, vt, s1, sr, c1, c2, ez,
                     psi1p, d1t, no_hedge,
                     u1, u2, g1, g2, g3, gam):
    m2acc = np.zeros(n0 + 1)
    for k in range(n0):
        if k > 0:
            a1 = sh1[k - 1]
            a2 = sh2[k - 1]
            for j in range(k, n0 + 1):
                m2acc[j] += e21[j - k + 1] * a1 + e22[j - k + 1] * a2
        rk = r_path[k]
        dk = disc[k]
        # single pass over s-nodes j = k..n0 with trapezoid end weights
        i1 = 0.0  # gamma1 integrand sum
        i2 = 0.0  # gamma2
        i3 = 0.0  # gamma3
        ig = 0.0  # Gamma liability part
        fprev = detmean2[k] + m2acc[k]
        gcum = 0.0
        for j in range(k, n0 + 1):
            f = detmean2[j] + m2acc[j]
            if j > k:
                gcum += 0.5 * dt * (fprev + f)
            fprev = f
            lag = j - k
            y1 = -(c_real[k] + gcum) + yquad[lag]
            bond = math.exp(dbar0[lag] + dbar1[lag] * rk)
            surv = math.exp(-m2_cum[j] + y1)
            muhat_fc = m2_vals[j] + f
            w = dt if (j > k and j < n0) else 0.5 * dt
            i1 += w * bond * (c2 * surv * p1[lag] + ez * c1 * q1[lag])
            i2 += w * bond * (c2 * surv * p2[lag] + ez * c1 * q2[lag])
            i3 += w * bond * dbar1[lag] * (c2 * surv + ez * c1 * muhat_fc)
            ig += w * bond * (c2 * surv + ez * c1 * muhat_fc)
        g1[k] = -dk * i1
        g2[k] = -dk * i2
        g3[k] = -dk * sr * i3
        gam[k] = lam * (phi1 * phi1 + vt * vt) * (n0 - k) * dt - dk * ig
        pl = psi1p[k] * s1
        db = d1t[k] * sr
        if no_hedge:
            u1[k] = 0.0
            u2[k] = (lam * vt - g3[k]) / (dk * db)
        else:
            u1[k] = (lam * phi1 - g1[k]) / (dk * pl)
            u2[k] = (-lam * phi1 / pl + lam * vt / db + g1[k] / pl - g3[k] / db) / dk
    return 0


_vas_series_nb = njit(cache=True)(_vas_series_loop) if _accel.HAVE_NUMBA else None


def _vas_series_np(n0, dt, e21, e22, p1, q1, p2, q2, yquad, dbar0, dbar1, detmean2,
                   m2_vals, m2_cum, c_real, sh1, sh2, r_path, disc,
                   lam, phi1, vt, s1, sr, c1, c2, ez,
                   psi1p, d1t, no_hedge,
                   u1, u2, g1, g2, g3, gam):
    """Vectorized-over-s fallback of the per-node recursion."""
    m2acc = np.zeros(n0 + 1)
    for k in range(n0):
        if k > 0:
            lag = np.arange(1, n0 - k + 2)
            m2acc[k:] += e21[lag] * sh1[k - 1] + e22[lag] * sh2[k - 1]
        f = detmean2[k:] + m2acc[k:]
        gcum = np.zeros(n0 + 1 - k)
        gcum[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]))
        lag = np.arange(n0 + 1 - k)
        y1 = -(c_real[k] + gcum) + yquad[lag]
        bond = np.exp(dbar0[lag] + dbar1[lag] * r_path[k])
        surv = np.exp(-m2_cum[k:] + y1)
        muhat_fc = m2_vals[k:] + f
        w = np.full(n0 + 1 - k, dt)
        w[0] = w[-1] = 0.5 * dt
        dk = disc[k]
        g1[k] = -dk * np.sum(w * bond * (c2 * surv * p1[lag] + ez * c1 * q1[lag]))
        g2[k] = -dk * np.sum(w * bond * (c2 * surv * p2[lag] + ez * c1 * q2[lag]))
        g3[k] = -dk * sr * np.sum(w * bond * dbar1[lag] * (c2 * surv + ez * c1 * muhat_fc))
        gam[k] = lam * (phi1**2 + vt**2) * (n0 - k) * dt - dk * np.sum(w * bond * (c2 * surv + ez * c1 * muhat_fc))
        pl = psi1p[k] * s1
        db = d1t[k] * sr
        if no_hedge:
            u1[k] = 0.0
            u2[k] = (lam * vt - g3[k]) / (dk * db)
        else:
            u1[k] = (lam * phi1 - g1[k]) / (dk * pl)
            u2[k] = (-lam * phi1 / pl + lam * vt / db + g1[k] / pl - g3[k] / db) / dk
    return 0


def _hedging_shocks(tables: ModelTables, path: PathBundle) -> np.ndarray:
    """Sigma-scaled innovations under the hedging measure, reconstructed from
    the path with the belief parameters (exact when belief = truth)."""
    cfg = tables.cfg
    n0 = tables.n0
    sub = TimeGrid(tables.grid.step, n0)
    shocks = innovations_from_path(path.mu[: n0 + 1], cfg.mp, sub)
    dt = tables.grid.step
    if cfg.mp.vol_model == VASICEK:
        col = cfg.mp.sigma_matrix[:, 0]
        shocks[:, 0] += cfg.hedge_sign * col[0] * cfg.prices.phi1 * dt
        shocks[:, 1] += cfg.hedge_sign * col[1] * cfg.prices.phi1 * dt
    else:
        mu1 = np.maximum(path.mu[:n0, 0], 0.0)
        shocks[:, 0] += cfg.hedge_sign * cfg.prices.phi1 * cfg.mp.sigma1**2 * mu1 * dt
    return shocks


def _realized_cum_mu2(path: PathBundle, n0: int, dt: float) -> np.ndarray:
    out = np.zeros(n0 + 1)
    mu2 = path.mu[: n0 + 1, 1]
    out[1:] = np.cumsum(0.5 * dt * (mu2[1:] + mu2[:-1]))
    return out


def equilibrium_strategy(cfg: HedgeConfig, path: PathBundle,
                         tables: ModelTables | None = None) -> StrategySeries:
    """Equilibrium controls along one path, on nodes t_0..t_{n0-1}."""
    if tables is None:
        tables = build_tables(cfg, path.grid)
    if cfg.flavor == CIR:
        return _cir_series(cfg, path, tables)
    n0 = tables.n0
    dt = tables.grid.step
    sh = _hedging_shocks(tables, path)
    c_real = _realized_cum_mu2(path, n0, dt)
    u1 = np.empty(n0); u2 = np.empty(n0)
    g1 = np.empty(n0); g2 = np.empty(n0); g3 = np.empty(n0); gam = np.empty(n0)
    fn = _vas_series_nb if _vas_series_nb is not None else _vas_series_np
    fn(n0, dt, tables.e21, tables.e22,
       tables.p1, tables.q1, tables.p2, tables.q2,
       tables.yquad, tables.dbar0, tables.dbar1,
       np.ascontiguousarray(tables.detmean[:, 1]),
       tables.m2_vals, tables.m2_cum, c_real,
       np.ascontiguousarray(sh[:, 0]), np.ascontiguousarray(sh[:, 1]),
       path.r[: n0 + 1], path.disc[: n0 + 1],
       cfg.lam, cfg.prices.phi1, cfg.prices.vartheta,
       cfg.mp.sigma1, cfg.rp.sigma_r,
       cfg.lp.c1, cfg.lp.c2, cfg.lp.ez,
       tables.panel.psi1_lag, tables.panel.d1_t, cfg.flavor == NO_HEDGE,
       u1, u2, g1, g2, g3, gam)
    return StrategySeries(grid=tables.grid, n_nodes=n0, u1=u1, u2=u2,
                          gamma1=g1, gamma2=g2, gamma3=g3, big_gamma=gam)


def no_hedge_strategy(cfg: HedgeConfig, path: PathBundle,
                      tables: ModelTables | None = None) -> StrategySeries:
    """Bond-only benchmark: u1 = 0, u2 = e^{int r}(lam*vt - gamma3)/(d1 sigma_r)."""
    from dataclasses import replace

    cfg_nh = replace(cfg, flavor=NO_HEDGE)
    if tables is not None:
        tables = replace(tables, cfg=cfg_nh)
    return equilibrium_strategy(cfg_nh, path, tables)


def gamma_solution(cfg: HedgeConfig, path: PathBundle, t: float,
                   tables: ModelTables | None = None):
    """(Gamma, gamma1, gamma2, gamma3) at time t along the path."""
    if tables is None:
        tables = build_tables(cfg, path.grid)
    if abs(t - cfg.T0) < 1e-12:
        return 0.0, 0.0, 0.0, 0.0
    k = tables.grid.index_of(t)
    s = equilibrium_strategy(cfg, path, tables)
    return float(s.big_gamma[k]), float(s.gamma1[k]), float(s.gamma2[k]), float(s.gamma3[k])


# ---------------------------------------------------------------------------
# CIR series (numpy only; quadratic Y correction needs per-node convolutions)
# ---------------------------------------------------------------------------


def _cir_series(cfg: HedgeConfig, path: PathBundle, tables: ModelTables) -> StrategySeries:
    n0 = tables.n0
    dt = tables.grid.step
    lam, c1, c2, ez = cfg.lam, cfg.lp.c1, cfg.lp.c2, cfg.lp.ez
    phi1, vt = cfg.prices.phi1, cfg.prices.vartheta
    s1, s2, sr = cfg.mp.sigma1, cfg.mp.sigma2, cfg.rp.sigma_r
    th_r_t = tables.rp_bar.theta_r
    br = cfg.rp.b_r
    sh = _hedging_shocks(tables, path)
    c_real = _realized_cum_mu2(path, n0, dt)
    psi1h = tables.psi_h[:, 0]
    psi2h = tables.psi_h[:, 1]
    q1 = (s1 * psi1h) ** 2
    q2 = (s2 * psi2h) ** 2
    m1acc = np.zeros(n0 + 1)
    m2acc = np.zeros(n0 + 1)
    u1 = np.empty(n0); u2 = np.empty(n0)
    g1 = np.empty(n0); g2 = np.empty(n0); g3 = np.empty(n0); gam = np.empty(n0)
    w_end = lambda m: np.concatenate(([0.5], np.ones(max(m - 1, 0)), [0.5]))[: m + 1] * dt if m >= 1 else np.array([0.5 * dt])
    for k in range(n0):
        if k > 0:
            lag = np.arange(1, n0 - k + 2)
            m1acc[k:] += tables.e11[lag] * sh[k - 1, 0]
            m2acc[k:] += tables.e21[lag] * sh[k - 1, 0] + tables.e22[lag] * sh[k - 1, 1]
        f1 = tables.detmean[k:, 0] + m1acc[k:]
        f2 = tables.detmean[k:, 1] + m2acc[k:]
        m = n0 - k
        lag = np.arange(m + 1)
        gcum = np.zeros(m + 1)
        gcum[1:] = np.cumsum(0.5 * dt * (f2[1:] + f2[:-1]))
        # quadratic Y correction: (1/2) int_t^s sum_i q_i(s-v) E_t[mu_i(v)] dv
        f1p = np.maximum(f1, 0.0)
        f2p = np.maximum(f2, 0.0)
        conv = fftconvolve(q1[: m + 1], f1p)[: m + 1] + fftconvolve(q2[: m + 1], f2p)[: m + 1]
        edge = 0.5 * (q1[lag] * f1p[0] + q1[0] * f1p[lag] + q2[lag] * f2p[0] + q2[0] * f2p[lag])
        yq = 0.5 * dt * (conv - edge)
        y2 = -(c_real[k] + gcum) + yq
        rk = path.r[k]
        dk = path.disc[k]
        mu1k = max(path.mu[k, 0], 0.0)
        mu2k = max(path.mu[k, 1], 0.0)
        big_b = (1.0 - np.exp(-th_r_t * lag * dt)) / th_r_t
        d1t = -big_b
        d0t = -br * (lag * dt - big_b) / th_r_t
        bond = np.exp(d0t + d1t * rk)
        surv = np.exp(-tables.m2_cum[k:] + y2)
        muhat_fc = tables.m2_vals[k:] + f2
        w = w_end(m)
        # normalized loadings: gamma1 = ghat1 * s1*sqrt(mu1(t)), etc.
        spec1 = lam * phi1**2 * s1**2 * tables.e11[lag]
        ghat1 = np.sum(w * (spec1 - bond * (c2 * surv * psi1h[lag] + ez * c1 * tables.e21[lag]) * dk))
        ghat2 = np.sum(w * (-bond * (c2 * surv * psi2h[lag] + ez * c1 * tables.e22[lag]) * dk))
        spec3 = lam * vt**2 * sr**2 * np.exp(-th_r_t * lag * dt)
        ghat3 = np.sum(w * (spec3 - bond * d1t * (c2 * surv + ez * c1 * muhat_fc) * dk))
        g1[k] = ghat1 * s1 * math.sqrt(mu1k)
        g2[k] = ghat2 * s2 * math.sqrt(mu2k)
        g3[k] = ghat3 * sr * math.sqrt(rk if rk > 0 else 0.0)
        gam[k] = np.sum(w * (lam * (phi1**2 * s1**2 * f1 + vt**2 * sr**2 * _rate_mean(rk, br, th_r_t, lag * dt))
                             - bond * (c2 * surv + ez * c1 * muhat_fc) * dk))
        pl = tables.panel.psi1_lag[k]
        db = tables.panel.d1_t[k]
        u1[k] = (lam * phi1 - ghat1) / (dk * pl)
        u2[k] = (-lam * phi1 / pl + lam * vt / db + ghat1 / pl - ghat3 / db) / dk
    return StrategySeries(grid=tables.grid, n_nodes=n0, u1=u1, u2=u2,
                          gamma1=g1, gamma2=g2, gamma3=g3, big_gamma=gam)


def _rate_mean(r_t, br, th, u):
    e = np.exp(-th * u)
    return r_t * e + br * (1.0 - e) / th


# ---------------------------------------------------------------------------
# equilibrium verification
# ---------------------------------------------------------------------------


def lambda_residual(cfg: HedgeConfig, path: PathBundle, t: float,
                    tables: ModelTables | None = None) -> tuple[np.ndarray, float]:
    """Prop-6 condition assembled from the solution components.

    Returns (Lambda(t;t) as a 2-vector, scale) where scale is the magnitude
    of the individual terms; the residual should vanish at quadrature
    accuracy for the equilibrium control.
    """
    if tables is None:
        tables = build_tables(cfg, path.grid)
    k = tables.grid.index_of(t)
    if k >= tables.n0:
        raise ValueError("t must lie strictly before T0")
    s = equilibrium_strategy(cfg, path, tables)
    pan = tables.panel
    sl1 = pan.sigma_l1(k, path.mu[k, 0])
    sb = pan.sigma_b(k, path.r[k])
    ph = pan.phi1_at(k, path.mu[k, 0])
    vt = pan.vartheta_at(k, path.r[k])
    nu = np.array([vt * sb + ph * sl1, vt * sb])
    disc = path.disc[k]
    u = np.array([s.u1[k], s.u2[k]])
    gvec = np.array([s.gamma1[k], s.gamma2[k], s.gamma3[k]])
    sigma_s = np.array([[sl1, 0.0], [0.0, 0.0], [sb, sb]])
    k1 = disc * sigma_s @ u + gvec
    lam_res = disc * (-cfg.lam * nu + sigma_s.T @ k1)
    scale = abs(cfg.lam) * np.linalg.norm(nu) + np.linalg.norm(sigma_s.T @ gvec) + 1e-12
    return lam_res, float(scale)


def verify_equilibrium(cfg: HedgeConfig, path: PathBundle, t: float, eta,
                       epsilon: float = 0.05, n_inner: int = 1000, seed=0,
                       x0: float = 100.0, n_batches: int = 10,
                       tables: ModelTables | None = None) -> dict:
    """Spike-variation estimate of [J(u + eta 1_[t,t+eps)) - J(u*)] / eps.

    Branches the path at t (conditioning on F_t), evaluates the equilibrium
    control on each branch, and uses the linearity of the wealth equation in
    the control: the perturbation adds D = int_t^{t+eps} disc (nu'eta ds +
    eta' sigma_S' dW) to X(T0) path by path.  Returns the estimate, its
    batch-based standard error, and the direct Lambda(t;t) residual.
    """
    from .simulate import resimulate_from

    if tables is None:
        tables = build_tables(cfg, path.grid)
    eta = np.asarray(eta, dtype=float)
    k0 = tables.grid.index_of(t)
    ke = min(k0 + max(int(round(epsilon / tables.grid.step)), 1), tables.n0)
    rng = np.random.default_rng(seed)
    n0 = tables.n0
    xs = np.empty(n_inner)
    ds = np.empty(n_inner)
    for i in range(n_inner):
        br = resimulate_from(path, cfg.mp, cfg.rp, k0, rng, lp=cfg.lp, claims_horizon=cfg.T0)
        ss = equilibrium_strategy(cfg, br, tables)
        x = evolve_wealth(br, ss.u, cfg.lp, tables.panel, x0, n_cells=n0)
        xs[i] = x[-1]
        d = 0.0
        for k in range(k0, ke):
            sl1 = tables.panel.sigma_l1(k, br.mu[k, 0])
            sb = tables.panel.sigma_b(k, br.r[k])
            ph = tables.panel.phi1_at(k, br.mu[k, 0])
            vt = tables.panel.vartheta_at(k, br.r[k])
            nu = np.array([vt * sb + ph * sl1, vt * sb])
            mart = eta[0] * sl1 * br.dW[0, k] + (eta[0] + eta[1]) * sb * br.dW[2, k]
            d += br.disc[k] * (nu @ eta * tables.grid.step + mart)
        ds[i] = d
    j_diff = _j_difference(xs, ds, cfg.lam)
    bs = np.array_split(np.arange(n_inner), n_batches)
    batch_vals = np.array([_j_difference(xs[b], ds[b], cfg.lam) for b in bs])
    se = batch_vals.std(ddof=1) / math.sqrt(n_batches)
    res, scale = lambda_residual(cfg, path, t, tables)
    return {
        "estimate": j_diff / epsilon,
        "se": se / epsilon,
        "lambda_residual": res,
        "lambda_scale": scale,
    }


def _j_difference(xs: np.ndarray, ds: np.ndarray, lam: float) -> float:
    """J(X+D) - J(X) with J = Var/2 - lam*mean, from paired samples."""
    var_x = xs.var(ddof=1)
    var_xd = (xs + ds).var(ddof=1)
    return 0.5 * (var_xd - var_x) - lam * ds.mean()
