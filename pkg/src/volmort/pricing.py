"""Zero-coupon bond and longevity bond: closed-form prices and volatility
loadings under the Vasicek and CIR settings.

Prices are exponential-affine under the pricing measure Q (a drift
substitution of the physical parameters).  The longevity bond pays the
national survival proportion, so only mu1 enters:

    B_L(t,T) = B(t,T) * exp(-int_t^T m1) * E_Q[exp(-int_t^T mu1)|F_t].

Loadings: sigma_b = d1(t) * sigma_r (times sqrt(r) under CIR) and
sigma_l = (psi1(T-t) * sigma1, 0) (times sqrt(mu1) under CIR), where psi1
solves the pricing Volterra-Riccati equation for f = (-1, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .affine import (CIR, VASICEK, MarketPrices, MortalityParams, RateParams,
                     affine_rate_ode, deterministic_mean, functional_Y,
                     rate_transform_closed, under_pricing_measure, _psi_for)
from .kernels import TimeGrid, e_theta


@dataclass(frozen=True)
class BondQuote:
    price: float
    sigma_b: float
    sigma_l: tuple[float, float]  # second entry always 0: only mu1 is priced
    t: float
    T: float


def zero_coupon_bond(rp: RateParams, prices: MarketPrices, t: float, T: float,
                     r_t: float, q_sign: int = +1) -> BondQuote:
    """Risk-free bond price exp(d0 + d1 r_t) under Q and its volatility loading."""
    if t > T:
        raise ValueError("need t <= T")
    mp_dummy = None
    rp_q = _rate_under_q(rp, prices, q_sign)
    d0, d1 = affine_rate_ode(rp_q, t, T, method="closed")
    price = math.exp(d0 + d1 * r_t)
    sig_b = d1 * rp.sigma_r * (math.sqrt(max(r_t, 0.0)) if rp.vol_model == CIR else 1.0)
    return BondQuote(price=price, sigma_b=sig_b, sigma_l=(0.0, 0.0), t=t, T=T)


def _rate_under_q(rp: RateParams, prices: MarketPrices, q_sign: int) -> RateParams:
    from dataclasses import replace

    if rp.vol_model == VASICEK:
        return replace(rp, b_r=rp.b_r + q_sign * rp.sigma_r * prices.vartheta)
    return replace(rp, theta_r=rp.theta_r - q_sign * prices.vartheta * rp.sigma_r**2)


def pricing_psi1(mp: MortalityParams, prices: MarketPrices, grid: TimeGrid,
                 q_sign: int = +1) -> np.ndarray:
    """psi1 on the grid for the longevity-bond loading (f = (-1, 0)).

    Vasicek: psi1 = (-1 - psi1*theta1)*K1 (measure change moves only b).
    CIR: theta1 is replaced by its Q-adjusted value and the quadratic term
    is kept, per the volatility-driven setting.
    """
    if mp.vol_model == VASICEK:
        psi = _psi_for(mp, (-1.0, 0.0), grid)
        return psi.psi[:, 0]
    rp_dummy = RateParams(1.0, 1.0, 1.0, 0.0)
    mp_q, _ = under_pricing_measure(mp, rp_dummy, prices, sign=q_sign)
    psi = _psi_for(mp_q, (-1.0, 0.0), grid)
    return psi.psi[:, 0]


def longevity_bond(mp: MortalityParams, rp: RateParams, prices: MarketPrices,
                   t: float, T: float, r_t: float, q_sign: int = +1,
                   mu1_t: float | None = None, dt: float = 1e-3,
                   mean_state: tuple | None = None) -> BondQuote:
    """Longevity bond quote at time t for maturity T.

    At t = 0 everything is deterministic.  For t > 0 pass ``mean_state`` =
    (grid, mean_curve, int_mu1_realized): the Q-conditional mean curve of mu
    on the pricing grid and the realized int_0^t mu1; ``mu1_t`` feeds the
    CIR loading.
    """
    if t > T:
        raise ValueError("need t <= T")
    base = zero_coupon_bond(rp, prices, t, T, r_t, q_sign)
    mp_q, _ = under_pricing_measure(mp, rp, prices, sign=q_sign)
    if t == 0.0 and mean_state is None:
        n = int(round(T / dt))
        grid = TimeGrid(dt, n)
        psi = _psi_for(mp_q, (-1.0, 0.0), grid)
        y = functional_Y(mp_q, (-1.0, 0.0), psi, 0.0, T)
        int_mu1_realized = 0.0
        psi1_lag = psi.psi[grid.index_of(T), 0]
    else:
        if mean_state is None:
            raise ValueError("t > 0 requires mean_state")
        grid, mean_curve, int_mu1_realized = mean_state
        psi = _psi_for(mp_q, (-1.0, 0.0), grid)
        y = functional_Y(mp_q, (-1.0, 0.0), psi, t, T, mean_curve=mean_curve)
        psi1_lag = psi.psi[grid.index_of(T) - grid.index_of(t), 0]
    m1_fwd = float(mp.baseline1.cumulative(T) - mp.baseline1.cumulative(t))
    surv = math.exp(int_mu1_realized + y - m1_fwd)
    if mp.vol_model == CIR:
        if mu1_t is None:
            mu1_t = float(mp.mu0[0]) if t == 0.0 else None
        if mu1_t is None:
            raise ValueError("CIR loading needs mu1_t")
        sig_l1 = psi1_lag * mp.sigma1 * math.sqrt(max(mu1_t, 0.0))
    else:
        sig_l1 = psi1_lag * mp.sigma1
    return BondQuote(price=base.price * surv, sigma_b=base.sigma_b,
                     sigma_l=(float(sig_l1), 0.0), t=t, T=T)


# ---------------------------------------------------------------------------
# per-node loadings panel for wealth evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstrumentPanel:
    """Bond loadings and risk premia evaluated on strategy nodes 0..n0.

    psi1_lag[k] = psi1(T - t_k) from the pricing Riccati solution;
    d1_t[k] = d1 of the T-maturity bond at t_k (Q mean reversion).
    """

    flavor: str
    psi1_lag: np.ndarray
    d1_t: np.ndarray
    sigma1: float
    sigma_r: float
    phi1: float
    vartheta: float

    def sigma_l1(self, k: int, mu1_k: float) -> float:
        s = self.psi1_lag[k] * self.sigma1
        if self.flavor == CIR:
            s *= math.sqrt(max(mu1_k, 0.0))
        return s

    def sigma_b(self, k: int, r_k: float) -> float:
        s = self.d1_t[k] * self.sigma_r
        if self.flavor == CIR:
            s *= math.sqrt(max(r_k, 0.0))
        return s

    def phi1_at(self, k: int, mu1_k: float) -> float:
        if self.flavor == CIR:
            return self.phi1 * self.sigma1 * math.sqrt(max(mu1_k, 0.0))
        return self.phi1

    def vartheta_at(self, k: int, r_k: float) -> float:
        if self.flavor == CIR:
            return self.vartheta * self.sigma_r * math.sqrt(max(r_k, 0.0))
        return self.vartheta


def instrument_panel(mp: MortalityParams, rp: RateParams, prices: MarketPrices,
                     grid: TimeGrid, T: float, n_nodes: int,
                     q_sign: int = +1) -> InstrumentPanel:
    """Build the loadings panel for strategy nodes t_0..t_{n_nodes} (T = bond maturity)."""
    jT = grid.index_of(T) if T <= grid.horizon + 1e-12 else None
    if jT is None or n_nodes > grid.n_steps:
        raise ValueError("bond maturity/strategy nodes must lie on the grid")
    psi1 = pricing_psi1(mp, prices, grid, q_sign)
    psi1_lag = psi1[jT - np.arange(n_nodes + 1)]
    rp_q = _rate_under_q(rp, prices, q_sign)
    th = rp_q.theta_r
    tk = grid.step * np.arange(n_nodes + 1)
    d1_t = (np.exp(-th * (T - tk)) - 1.0) / th
    return InstrumentPanel(flavor=mp.vol_model, psi1_lag=psi1_lag, d1_t=d1_t,
                           sigma1=mp.sigma1, sigma_r=rp.sigma_r,
                           phi1=prices.phi1, vartheta=prices.vartheta)


def term_structure(mp: MortalityParams, rp: RateParams, prices: MarketPrices,
                   maturities, q_sign: int = +1, dt: float = 1e-3):
    """Time-0 quotes for a list of maturities: rows of
    (t, T, bond_price, longevity_price, sigma_b, sigma_l1)."""
    rows = []
    for T in maturities:
        zb = zero_coupon_bond(rp, prices, 0.0, T, rp.r0, q_sign)
        lb = longevity_bond(mp, rp, prices, 0.0, T, rp.r0, q_sign, dt=dt)
        rows.append((0.0, float(T), zb.price, lb.price, zb.sigma_b, lb.sigma_l[0]))
    return rows
