"""Model parameters, measure adjustments, and the exponential-affine
machinery: conditional means of the mortality state, the functional Y_t(T)
behind E[exp(int f mu)|F_t], and the scalar affine ODEs for the short rate.

Volatility flavors
------------------
* "vasicek": sigma(mu) = diag(sigma1, sigma2) constant; market prices of risk
  are deterministic (phi1(t), 0) and vartheta(t).
* "cir": sigma(mu) = diag(s1*sqrt(mu1), s2*sqrt(mu2)); market prices of risk
  are volatility-driven, phi(t) = sigma(mu)(phi1~, 0)^T, vartheta = vt~*sigma_r(r).

Measure changes are pure parameter substitutions:

  pricing (Q):  vasicek b1 -> b1 + sigma1*phi1, b_r -> b_r + sigma_r*vartheta
                cir     theta1 -> theta1 - phi1~*s1^2, theta_r -> theta_r - vt~*sr~^2
  hedging (Pbar/Ptilde):
                vasicek b1 -> b1 - sigma1*phi1, b_r -> b_r - sigma_r*vartheta
                cir     theta1 -> theta1 + phi1~*s1^2, theta_r -> theta_r + vt~*sr~^2

The relative sign between the two is exposed (``sign``) because the source
conventions differ between the pricing and hedging derivations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve

from .kernels import (CointegrationDrift, KernelMatrix, ResolventTables,
                      TimeGrid, e_theta)
from .riccati import RiccatiProblem, RiccatiSolution, psi_linear, solve_riccati

VASICEK = "vasicek"
CIR = "cir"


@dataclass(frozen=True)
class Baseline:
    """Deterministic mortality baseline m(t) = coef * (t + age_offset)^power."""

    coef: float = 0.000004212
    power: float = 2.68
    age_offset: float = 25.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.coef * (t + self.age_offset) ** self.power

    def cumulative(self, t):
        """int_0^t m(v) dv."""
        t = np.asarray(t, dtype=float)
        p1 = self.power + 1.0
        return self.coef * ((t + self.age_offset) ** p1 - self.age_offset**p1) / p1


ZERO_BASELINE = Baseline(coef=0.0, power=1.0, age_offset=0.0)


@dataclass(frozen=True)
class MortalityParams:
    """Model parameters of the mortality pair.

    ``rho`` is the instantaneous noise correlation of mu2 with W1 (the
    correlated-Markov belief variant); the simulated truth and the CIR
    flavor use rho = 0, where sigma(mu) is diagonal.
    """

    drift: CointegrationDrift
    kernels: KernelMatrix
    vol_model: str  # VASICEK | CIR
    sigma1: float
    sigma2: float
    mu0: tuple[float, float]
    baseline1: Baseline = ZERO_BASELINE
    baseline2: Baseline = ZERO_BASELINE
    rho: float = 0.0

    def __post_init__(self):
        if self.vol_model not in (VASICEK, CIR):
            raise ValueError(f"unknown vol_model {self.vol_model!r}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("volatility coefficients must be positive")
        if self.vol_model == CIR and min(self.mu0) < 0:
            raise ValueError("CIR flavor needs non-negative initial state")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.rho != 0.0 and self.vol_model != VASICEK:
            raise ValueError("correlated noise is only supported with constant volatility")

    @property
    def sigma_matrix(self) -> np.ndarray:
        """Constant volatility matrix ((s1, 0), (rho*s2, sqrt(1-rho^2)*s2))."""
        if self.vol_model != VASICEK:
            raise ValueError("sigma_matrix is the constant-volatility form")
        return np.array([
            [self.sigma1, 0.0],
            [self.rho * self.sigma2, math.sqrt(1.0 - self.rho**2) * self.sigma2],
        ])

    def sigma_at(self, mu):
        """Diagonal of sigma(mu) for state(s) mu of shape (..., 2); rho = 0 flavors."""
        mu = np.asarray(mu, dtype=float)
        s = np.array([self.sigma1, self.sigma2])
        if self.vol_model == VASICEK:
            return np.broadcast_to(s, mu.shape).copy()
        return s * np.sqrt(np.maximum(mu, 0.0))

    def quad_coeffs(self):
        """(q1, q2) of the Riccati quadratic term A(u) = (q1 u1^2, q2 u2^2)."""
        if self.vol_model == VASICEK:
            return None
        return (self.sigma1**2, self.sigma2**2)


@dataclass(frozen=True)
class RateParams:
    b_r: float
    theta_r: float
    sigma_r: float
    r0: float
    vol_model: str = VASICEK

    def __post_init__(self):
        if self.b_r <= 0 or self.theta_r <= 0:
            raise ValueError("b_r and theta_r must be positive")
        if self.vol_model == CIR and self.r0 < 0:
            raise ValueError("CIR flavor needs r0 >= 0")


@dataclass(frozen=True)
class MarketPrices:
    """Market prices of mortality risk (phi1) and rate risk (vartheta).

    Under the vasicek flavor these are the deterministic prices themselves;
    under cir they are the tilde-coefficients multiplying the volatilities.
    """

    flavor: str  # "deterministic" | "volatility_driven"
    phi1: float = 0.1
    vartheta: float = 0.1


def _adjust(mp: MortalityParams, rp: RateParams, prices: MarketPrices, sign: int):
    """Shared drift substitution; sign=+1 pricing convention, -1 hedging.

    The mortality drift shifts by sigma(mu)'s first column times phi1, which
    reaches b2 as well when the belief carries noise correlation (rho != 0).
    """
    if mp.vol_model == VASICEK:
        d = mp.drift
        col = mp.sigma_matrix[:, 0]
        d2 = replace(d, b1=d.b1 + sign * col[0] * prices.phi1,
                     b2=d.b2 + sign * col[1] * prices.phi1)
        rp2 = replace(rp, b_r=rp.b_r + sign * rp.sigma_r * prices.vartheta)
        return replace(mp, drift=d2), rp2
    d = mp.drift
    d2 = replace(d, theta1=d.theta1 - sign * prices.phi1 * mp.sigma1**2)
    if d2.theta1 <= 0:
        raise ValueError("adjusted theta1 is not positive")
    rp2 = replace(rp, theta_r=rp.theta_r - sign * prices.vartheta * rp.sigma_r**2)
    return replace(mp, drift=d2), rp2


def under_pricing_measure(mp, rp, prices, sign: int = +1):
    """Parameters of (mu, r) under the pricing measure Q."""
    return _adjust(mp, rp, prices, +sign)


def under_hedging_measure(mp, rp, prices, sign: int = +1):
    """Parameters of (mu, r) under the shifted measure used by the BSDE solution."""
    return _adjust(mp, rp, prices, -sign)


# ---------------------------------------------------------------------------
# conditional means and the Y functional
# ---------------------------------------------------------------------------


def deterministic_mean(mp: MortalityParams, grid: TimeGrid,
                       tables: ResolventTables | None = None) -> np.ndarray:
    """E[mu(s)] on the grid: (I - int_0^s R_Theta) mu0 + int_0^s E_Theta(s-v) b dv."""
    if tables is None:
        tables = e_theta(mp.drift, mp.kernels, grid)
    mu0 = np.asarray(mp.mu0, dtype=float)
    b = mp.drift.b_vector
    out = mu0 - np.einsum("nij,j->ni", tables.r_cum, mu0) + np.einsum("nij,j->ni", tables.e_cum, b)
    return out


class NoiseAccumulator:
    """Per-path state M(t, s) = int_0^t E_Theta(s - v) sigma(mu(v)) dW(v).

    ``shocks`` holds the sigma-scaled Brownian increments sigma(mu(t_j)) dW_j
    (shape (n_steps, 2)) under the measure the caller works in.  ``advance``
    moves t forward one node; ``mean_curve`` returns E[mu(s)|F_t] for s-nodes
    >= t (entries below t are the realized path when it is supplied).
    """

    def __init__(self, tables: ResolventTables, detmean: np.ndarray, shocks: np.ndarray,
                 path_mu: np.ndarray | None = None):
        self.tables = tables
        self.detmean = detmean
        self.shocks = np.asarray(shocks, dtype=float)
        self.path_mu = path_mu
        n = tables.grid.n_steps
        self.k = 0
        self.m = np.zeros((n + 1, 2))

    def advance(self):
        """Incorporate the shock of cell [t_k, t_{k+1}) and move to t_{k+1}."""
        k = self.k
        if k >= self.shocks.shape[0]:
            raise IndexError("accumulator advanced past the end of the grid")
        e = self.tables.e
        nfwd = self.m.shape[0] - (k + 1)
        lag = slice(1, nfwd + 1)  # s_j - t_k = (j-k)*dt for j = k+1..n
        e1, e2 = self.shocks[k]
        self.m[k + 1 :, 0] += e[lag, 0, 0] * e1
        self.m[k + 1 :, 1] += e[lag, 1, 0] * e1 + e[lag, 1, 1] * e2
        self.k = k + 1

    def mean_curve(self) -> np.ndarray:
        """E[mu(s)|F_t] over all grid nodes s (realized values below t)."""
        out = self.detmean + self.m
        if self.path_mu is not None:
            out[: self.k + 1] = self.path_mu[: self.k + 1]
        return out


def conditional_mean_mu(mp: MortalityParams, grid: TimeGrid, acc: NoiseAccumulator | None = None,
                        tables: ResolventTables | None = None) -> np.ndarray:
    """E[mu(s)|F_t] on the grid under the measure encoded in ``mp``.

    With no accumulator (t = 0) this is the deterministic Volterra mean.
    Otherwise the accumulator supplies the stochastic-integral state at its
    current time and must have been built against the same parameter set.
    """
    if acc is None:
        return deterministic_mean(mp, grid, tables)
    if acc.tables.grid != grid:
        raise ValueError("accumulator grid does not match")
    return acc.mean_curve()


def _psi_for(mp: MortalityParams, f, grid: TimeGrid,
             tables: ResolventTables | None = None) -> RiccatiSolution:
    if mp.vol_model == VASICEK:
        return psi_linear(f, mp.drift, mp.kernels, grid, tables)
    prob = RiccatiProblem(tuple(f), mp.drift, mp.kernels, quad_coeffs=mp.quad_coeffs())
    return solve_riccati(prob, grid)


def _a_diag(mp: MortalityParams, mean_curve: np.ndarray) -> np.ndarray:
    """Diagonal of a(mu) = sigma(mu) sigma(mu)^T along a state curve."""
    s2 = np.array([mp.sigma1**2, mp.sigma2**2])
    if mp.vol_model == VASICEK:
        return np.broadcast_to(s2, mean_curve.shape).copy()
    return s2 * np.maximum(mean_curve, 0.0)  # affine: a(mu) = diag(s_i^2 mu_i)


def functional_Y(mp: MortalityParams, f, psi: RiccatiSolution, t: float, T: float,
                 mean_curve: np.ndarray | None = None,
                 tables: ResolventTables | None = None) -> float:
    """Y_t(T) so that E[exp(int_0^T f mu ds)|F_t] = exp(Y_t(T)).

    Uses the conditional-mean form: int_0^T f E[mu(s)|F_t] ds plus the
    convexity correction (1/2) int_t^T psi(T-s) a(E[mu_s|F_t]) psi(T-s)^T ds.
    ``mean_curve`` is E[mu|F_t] on psi's grid (defaults to the t=0
    deterministic mean, which is only valid for t = 0).
    """
    grid = psi.grid
    if T > grid.horizon + 1e-12:
        raise ValueError("T exceeds the psi grid horizon")
    jT = grid.index_of(T)
    jt = grid.index_of(t)
    if mean_curve is None:
        if jt != 0:
            raise ValueError("mean_curve is required for t > 0")
        mean_curve = deterministic_mean(mp, grid, tables)
    f = np.asarray(f, dtype=float)
    dt = grid.step
    lin = np.trapezoid(mean_curve[: jT + 1] @ f, dx=dt)
    rev = psi.psi[: jT - jt + 1][::-1]  # psi(T-s) for s-nodes t..T
    a = _a_diag(mp, mean_curve[jt : jT + 1])
    quad = 0.5 * np.trapezoid(np.einsum("nj,nj,nj->n", rev, a, rev), dx=dt)
    return float(lin + quad)


def laplace_at_zero(mp: MortalityParams, f, T: float, dt: float = 1e-3) -> float:
    """E[exp(int_0^T f mu(s) ds)] = exp(Y_0(T)) for constant row vector f."""
    if T == 0.0:
        return 1.0
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9:
        raise ValueError("T must be a multiple of dt")
    grid = TimeGrid(dt, n)
    tables = e_theta(mp.drift, mp.kernels, grid)
    psi = _psi_for(mp, f, grid, tables)
    y0 = functional_Y(mp, f, psi, 0.0, T, tables=tables)
    return math.exp(y0)


# ---------------------------------------------------------------------------
# scalar affine rate transform: E[exp(-int_t^T r)] = exp(d0(t) + d1(t) r(t))
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateTransform:
    """d0, d1 as functions of the lag u = T - t (uniform lag grid)."""

    lag_step: float
    d0: np.ndarray
    d1: np.ndarray

    def at(self, u: float) -> tuple[float, float]:
        j = int(round(u / self.lag_step))
        if not 0 <= j < len(self.d0) or abs(j * self.lag_step - u) > 1e-9 * max(1.0, u):
            raise ValueError(f"lag {u} not on the transform grid")
        return float(self.d0[j]), float(self.d1[j])


def rate_transform_closed(rp: RateParams, max_lag: float, lag_step: float) -> RateTransform:
    """Closed forms used by the pricing/hedging propositions.

    Vasicek: d1(u) = (e^(-theta u) - 1)/theta and the explicit d0 integral
    (constant coefficients).  CIR: the displayed linear d1 with a0 = 0, so
    d0(u) = -b_r (u - B(u))/theta.  ``rp`` must already carry the
    measure-adjusted (theta_r, b_r).
    """
    n = int(round(max_lag / lag_step))
    u = lag_step * np.arange(n + 1)
    th = rp.theta_r
    big_b = (1.0 - np.exp(-th * u)) / th
    d1 = -big_b
    int_d1 = -(u - big_b) / th
    if rp.vol_model == VASICEK:
        a0 = rp.sigma_r**2
        int_d1sq = (u - 2.0 * big_b + (1.0 - np.exp(-2.0 * th * u)) / (2.0 * th)) / th**2
        d0 = rp.b_r * int_d1 + 0.5 * a0 * int_d1sq
    else:
        d0 = rp.b_r * int_d1
    return RateTransform(lag_step=lag_step, d0=d0, d1=d1)


def rate_transform_numeric(rp: RateParams, max_lag: float, lag_step: float,
                           include_quadratic: bool = True) -> RateTransform:
    """RK4 backward integration of the affine ODE system

        d1' = 1 + theta_r d1 - (1/2) a1 d1^2,
        d0' = -b_r d1 - (1/2) a0 d1^2,  d0(T) = d1(T) = 0,

    expressed on the lag axis u = T - t (so both increase from 0).  a0, a1
    follow the vol flavor; include_quadratic=False drops the d1^2 term of d1'
    to mirror the displayed CIR closed form.
    """
    a0 = rp.sigma_r**2 if rp.vol_model == VASICEK else 0.0
    a1 = rp.sigma_r**2 if rp.vol_model == CIR else 0.0
    if not include_quadratic:
        a1 = 0.0
    th, br = rp.theta_r, rp.b_r

    def rhs(y):
        d1, d0 = y
        return np.array([-1.0 - th * d1 + 0.5 * a1 * d1 * d1, br * d1 + 0.5 * a0 * d1 * d1])

    n = int(round(max_lag / lag_step))
    h = lag_step
    out = np.zeros((n + 1, 2))
    y = np.zeros(2)
    for i in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return RateTransform(lag_step=lag_step, d0=out[:, 1], d1=out[:, 0])


def affine_rate_ode(rp: RateParams, t: float, T: float, method: str = "closed",
                    lag_step: float = 1e-3) -> tuple[float, float]:
    """(d0(t), d1(t)) for maturity T; ``rp`` carries the measure-adjusted drift."""
    u = T - t
    if u < 0:
        raise ValueError("need t <= T")
    if u == 0:
        return 0.0, 0.0
    n = max(1, int(round(u / lag_step)))
    step = u / n
    if method == "closed":
        tr = rate_transform_closed(rp, u, step)
    elif method == "numeric":
        tr = rate_transform_numeric(rp, u, step)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(tr.d0[n]), float(tr.d1[n])
