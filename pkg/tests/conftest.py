import dataclasses

import numpy as np
import pytest

from volmort import (Baseline, CointegrationDrift, HedgeConfig, KernelMatrix,
                     KernelSpec, LiabilityParams, MarketPrices,
                     MortalityParams, RateParams, TimeGrid)

# baseline parameter set of the numerical study (fractional national rate,
# Markovian insurer noise, cointegrated drift)
BASE = dict(
    h1=0.83, h2=0.5,
    b1=1e-4, theta1=0.5, sigma1=2e-3, mu1_0=8e-5,
    b2=1e-4, theta2=0.6, sigma2=1e-3, beta1=1.0, beta2=0.6, mu2_0=8e-5,
    r0=0.04, b_r=0.02, theta_r=0.6, sigma_r=0.01,
    phi1=0.1, vartheta=0.1, c1=8.0, c2=4.0, lam=10.0, x0=100.0,
    T0=5.0, T=10.0,
)


def base_drift() -> CointegrationDrift:
    return CointegrationDrift(BASE["b1"], BASE["b2"], BASE["theta1"], BASE["theta2"],
                              BASE["beta1"], BASE["beta2"])


def base_kernels(h1=None, h2=None) -> KernelMatrix:
    return KernelMatrix(KernelSpec(BASE["h1"] if h1 is None else h1),
                        KernelSpec(BASE["h2"] if h2 is None else h2),
                        BASE["beta1"])


def base_mortality(with_baseline=True, **over) -> MortalityParams:
    m = Baseline() if with_baseline else Baseline(0.0, 1.0, 0.0)
    mp = MortalityParams(base_drift(), base_kernels(), "vasicek",
                         BASE["sigma1"], BASE["sigma2"],
                         (BASE["mu1_0"], BASE["mu2_0"]), m, m)
    return dataclasses.replace(mp, **over) if over else mp


def base_rate(**over) -> RateParams:
    rp = RateParams(BASE["b_r"], BASE["theta_r"], BASE["sigma_r"], BASE["r0"])
    return dataclasses.replace(rp, **over) if over else rp


def base_prices() -> MarketPrices:
    return MarketPrices("deterministic", BASE["phi1"], BASE["vartheta"])


def base_liability(**over) -> LiabilityParams:
    lp = LiabilityParams(BASE["c1"], BASE["c2"])
    return dataclasses.replace(lp, **over) if over else lp


def base_hedge_config(**over) -> HedgeConfig:
    hc = HedgeConfig(base_mortality(), base_rate(), base_prices(), base_liability(),
                     BASE["lam"], BASE["T0"], BASE["T"])
    return dataclasses.replace(hc, **over) if over else hc


@pytest.fixture(scope="session")
def grid_t10():
    return TimeGrid(0.01, 1000)


@pytest.fixture(scope="session")
def showcase_path(grid_t10):
    from volmort import simulate_paths

    return simulate_paths(base_mortality(), base_rate(), grid_t10, 1, seed=42,
                          lp=base_liability(), claims_horizon=BASE["T0"])[0]
