import dataclasses
import math

import numpy as np
import pytest

from volmort import (KernelMatrix, KernelSpec, TimeGrid, affine_rate_ode,
                     deterministic_mean, e_theta, longevity_bond, psi_linear,
                     simulate_mu_batch, simulate_rate_batch, term_structure,
                     under_pricing_measure, zero_coupon_bond)
from volmort.affine import NoiseAccumulator
from volmort.pricing import instrument_panel, pricing_psi1

from conftest import BASE, base_mortality, base_prices, base_rate


def test_maturity_quotes_are_trivial():
    zb = zero_coupon_bond(base_rate(), base_prices(), 3.0, 3.0, 0.05)
    assert zb.price == 1.0
    assert zb.sigma_b == 0.0
    lb = longevity_bond(base_mortality(), base_rate(), base_prices(), 0.0, 0.0, 0.04)
    assert lb.price == 1.0


def test_vasicek_sigma_b_is_displayed_d1_formula():
    rp, pr = base_rate(), base_prices()
    for t, T in ((0.0, 10.0), (2.5, 10.0), (4.0, 5.0)):
        q = zero_coupon_bond(rp, pr, t, T, rp.r0)
        d1 = (math.exp(-rp.theta_r * (T - t)) - 1.0) / rp.theta_r
        assert q.sigma_b == pytest.approx(d1 * rp.sigma_r, rel=1e-12)


def test_vasicek_sigma_l_is_psi1_sigma1():
    mp, rp, pr = base_mortality(), base_rate(), base_prices()
    q = longevity_bond(mp, rp, pr, 0.0, 10.0, rp.r0, dt=1e-3)
    g = TimeGrid(1e-3, 10000)
    psi1 = psi_linear((-1.0, 0.0), mp.drift, mp.kernels, g).psi[:, 0]
    assert q.sigma_l[0] == pytest.approx(psi1[-1] * mp.sigma1, rel=1e-10)
    assert q.sigma_l[1] == 0.0


def test_zcb_price_matches_monte_carlo_under_q():
    rp, pr = base_rate(), base_prices()
    rp_q = dataclasses.replace(rp, b_r=rp.b_r + rp.sigma_r * pr.vartheta)
    g = TimeGrid(0.01, 1000)
    r = simulate_rate_batch(rp_q, g, 10000, seed=2024)
    disc = np.exp(-np.trapezoid(r, dx=g.step, axis=1))
    q = zero_coupon_bond(rp, pr, 0.0, 10.0, rp.r0)
    se = disc.std() / np.sqrt(len(disc))
    assert abs(disc.mean() - q.price) < 3 * se


def test_longevity_bond_matches_monte_carlo_under_q():
    mp, rp, pr = base_mortality(), base_rate(), base_prices()
    mp_q, rp_q = under_pricing_measure(mp, rp, pr)
    g = TimeGrid(0.01, 1000)
    vals = []
    for b0 in range(0, 10000, 2500):
        mu1, _, _ = simulate_mu_batch(mp_q, g, 2500, seed=31415, base_index=b0)
        r = simulate_rate_batch(rp_q, g, 2500, seed=31415, base_index=b0)
        ihat1 = np.trapezoid(mu1, dx=g.step, axis=1) + mp.baseline1.cumulative(10.0)
        vals.append(np.exp(-np.trapezoid(r, dx=g.step, axis=1) - ihat1))
    v = np.concatenate(vals)
    q = longevity_bond(mp, rp, pr, 0.0, 10.0, rp.r0)
    se = v.std() / np.sqrt(len(v))
    assert abs(v.mean() - q.price) < 3 * se


def test_survival_discount_cannot_raise_price():
    # B_L <= B whenever mu_hat_1 >= 0 along the analytic mean
    mp, rp, pr = base_mortality(), base_rate(), base_prices()
    mp_q, _ = under_pricing_measure(mp, rp, pr)
    g = TimeGrid(0.01, 1000)
    mean = deterministic_mean(mp_q, g)
    assert np.all(mean[:, 0] + mp.baseline1(g.times) >= 0)
    for T in (2.0, 5.0, 10.0):
        zb = zero_coupon_bond(rp, pr, 0.0, T, rp.r0)
        lb = longevity_bond(mp, rp, pr, 0.0, T, rp.r0)
        assert 0.0 < lb.price <= zb.price


def test_fractional_price_continuous_at_markovian_limit():
    rp, pr = base_rate(), base_prices()
    mp_eps = base_mortality(kernels=KernelMatrix(KernelSpec(0.5001), KernelSpec(0.5), 1.0))
    mp_mkv = base_mortality(kernels=KernelMatrix(KernelSpec(0.5), KernelSpec(0.5), 1.0))
    a = longevity_bond(mp_eps, rp, pr, 0.0, 10.0, rp.r0).price
    b = longevity_bond(mp_mkv, rp, pr, 0.0, 10.0, rp.r0).price
    assert abs(a - b) / b < 1e-3


def test_one_step_return_drift_is_r_plus_nu_l():
    # E[dB_L/B_L] = (r + nu_L) dt under P to first order; the known martingale
    # part is subtracted as a control variate
    mp, rp, pr = base_mortality(), base_rate(), base_prices()
    mp_q, rp_q = under_pricing_measure(mp, rp, pr)
    T = 10.0
    g = TimeGrid(0.01, 1000)
    tab_q = e_theta(mp_q.drift, mp_q.kernels, g)
    det_q = deterministic_mean(mp_q, g, tab_q)
    psi = psi_linear((-1.0, 0.0), mp_q.drift, mp_q.kernels, g)
    b0 = longevity_bond(mp, rp, pr, 0.0, T, rp.r0)
    sig_l1 = b0.sigma_l[0]
    sig_b = b0.sigma_b
    nu_l = pr.vartheta * sig_b + pr.phi1 * sig_l1

    from volmort import functional_Y, simulate_paths
    from conftest import base_liability

    n = 4000
    paths = simulate_paths(mp, rp, g, n, seed=777)
    dt = g.step
    resid = np.empty(n)
    for i, p in enumerate(paths):
        # Q-measure shock for the conditional-mean update: sigma*dW^Q = sigma*dW - sigma*phi dt
        sh = np.array([[mp.sigma1 * (p.dW[0, 0] - pr.phi1 * dt), mp.sigma2 * p.dW[1, 0]]])
        acc = NoiseAccumulator(tab_q, det_q, np.vstack([sh, np.zeros((g.n_steps - 1, 2))]),
                               path_mu=p.mu)
        acc.advance()
        y = functional_Y(mp_q, (-1.0, 0.0), psi, dt, T, mean_curve=acc.mean_curve())
        int_mu1 = 0.5 * dt * (p.mu[0, 0] + p.mu[1, 0])
        m1_fwd = mp.baseline1.cumulative(T) - mp.baseline1.cumulative(dt)
        d0, d1 = affine_rate_ode(rp_q, dt, T)
        b_next = math.exp(d0 + d1 * p.r[1]) * math.exp(int_mu1 + y - m1_fwd)
        ret = (b_next - b0.price) / b0.price
        mart = sig_l1 * p.dW[0, 0] + sig_b * p.dW[2, 0]
        resid[i] = ret - mart
    drift_hat = resid.mean() / dt
    se = resid.std() / np.sqrt(n) / dt
    assert abs(drift_hat - (rp.r0 + nu_l)) < max(3 * se, 2e-3)


def test_term_structure_rows_and_panel():
    mp, rp, pr = base_mortality(), base_rate(), base_prices()
    rows = term_structure(mp, rp, pr, [2.0, 5.0, 10.0])
    assert len(rows) == 3
    assert all(r[2] > 0 and r[3] > 0 and r[3] <= r[2] for r in rows)
    g = TimeGrid(0.01, 1000)
    pan = instrument_panel(mp, rp, pr, g, 10.0, 500)
    psi1 = pricing_psi1(mp, pr, g)
    assert pan.psi1_lag[0] == psi1[1000]
    assert pan.psi1_lag[500] == psi1[500]
    assert pan.sigma_b(0, rp.r0) == pytest.approx((math.exp(-6.0) - 1.0) / 0.6 * rp.sigma_r)


def test_cir_quotes_use_sqrt_state_loadings():
    mpc = base_mortality(vol_model="cir", sigma1=0.02, sigma2=0.015)
    rpc = base_rate(vol_model="cir", sigma_r=0.05)
    prc = dataclasses.replace(base_prices(), flavor="volatility_driven")
    zb = zero_coupon_bond(rpc, prc, 0.0, 10.0, rpc.r0)
    thq = rpc.theta_r - prc.vartheta * rpc.sigma_r**2
    d1 = (math.exp(-thq * 10.0) - 1.0) / thq
    assert zb.sigma_b == pytest.approx(d1 * rpc.sigma_r * math.sqrt(rpc.r0), rel=1e-12)
    lb = longevity_bond(mpc, rpc, prc, 0.0, 10.0, rpc.r0, dt=2e-3)
    assert 0 < lb.price < zb.price
    assert lb.sigma_l[0] < 0
