"""Fractional kernels, convolution quadrature, Mittag-Leffler evaluation and
resolvents of the second kind.

Conventions
-----------
* A "grid function" is a 1-D ndarray of length ``grid.n_steps + 1`` holding
  samples at the nodes ``t_j = j * grid.step``.
* ``convolve_kernel(f, k, grid)`` discretizes ``(F*K)(t) = int_0^t F(s) K(t-s) ds``
  by pairing left-endpoint samples of ``f`` with exact cell integrals of the
  (possibly singular) power kernel.
* The resolvent of the second kind of ``K`` is the kernel ``R`` with
  ``K*R = R*K = K - R``.  For the power kernel ``c t^(a-1)/Gamma(a)`` it is
  ``R(t) = c t^(a-1) E_{a,a}(-c t^a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gammaln


class MittagLefflerError(ValueError):
    """Raised when a Mittag-Leffler evaluation cannot meet its tolerance."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j*step, j = 0..n_steps."""

    step: float
    n_steps: int

    def __post_init__(self):
        if self.step <= 0 or self.n_steps < 1:
            raise ValueError("need step > 0 and n_steps >= 1")

    @property
    def horizon(self) -> float:
        return self.step * self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        j = int(round(t / self.step))
        if abs(j * self.step - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= j <= self.n_steps:
            raise ValueError(f"t={t} is not a node of this grid")
        return j


@dataclass(frozen=True)
class KernelSpec:
    """Power kernel K(t) = scale * t^(hurst-1/2) / Gamma(hurst+1/2).

    ``hurst = 1/2`` gives the constant kernel K = scale.  Weights and the
    numeric resolvent are exact for any hurst in (0,1); hurst < 1/2 makes the
    kernel singular at 0 and is supported but experimental (none of the
    hedging formulas are exercised there).
    """

    hurst: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError("hurst must lie in (0,1)")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def alpha(self) -> float:
        """Exponent a = hurst + 1/2 of the t^(a-1)/Gamma(a) form."""
        return self.hurst + 0.5

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.scale * t ** (self.hurst - 0.5) / math.gamma(self.hurst + 0.5)
        return out

    def cumulative(self, t):
        """int_0^t K(s) ds = scale * t^(H+1/2) / Gamma(H+3/2)."""
        t = np.asarray(t, dtype=float)
        return self.scale * t ** (self.hurst + 0.5) / math.gamma(self.hurst + 1.5)


@dataclass(frozen=True)
class KernelMatrix:
    """Lower-triangular 2x2 kernel ((K1, 0), (beta1*K1, K2))."""

    k1: KernelSpec
    k2: KernelSpec
    beta1: float


@dataclass(frozen=True)
class CointegrationDrift:
    """Mean-reversion matrix Theta = ((theta1, 0), (beta2, theta2)) and level b."""

    b1: float
    b2: float
    theta1: float
    theta2: float
    beta1: float
    beta2: float

    def __post_init__(self):
        if self.theta1 <= 0 or self.theta2 <= 0:
            raise ValueError("theta1 and theta2 must be positive")

    @property
    def theta_matrix(self) -> np.ndarray:
        return np.array([[self.theta1, 0.0], [self.beta2, self.theta2]])

    @property
    def b_vector(self) -> np.ndarray:
        return np.array([self.b1, self.b2])


# ---------------------------------------------------------------------------
# quadrature weights and discrete convolution
# ---------------------------------------------------------------------------


def kernel_cell_weights(k: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Exact cell integrals w_m = int_{t_m}^{t_{m+1}} K(s) ds, m = 0..n_steps-1."""
    t = grid.times
    cum = k.cumulative(t)
    return np.diff(cum)


def convolve_kernel(f: np.ndarray, k, grid: TimeGrid, sampling: str = "left") -> np.ndarray:
    """Discrete (F*K)(t_n) = int_0^{t_n} F(s) K(t_n - s) ds on the grid.

    The kernel is integrated exactly over each cell (weights w_m); ``f`` is
    represented per cell either by its left-endpoint sample (``sampling="left"``,
    the convention of the forward solvers) or by the endpoint average
    (``sampling="trapezoid"``, second order for smooth f).  ``f`` has shape
    (n+1,) for a scalar kernel or (n+1, 2) (row-vector samples) for a
    KernelMatrix; the result has the same shape and (F*K)(0) = 0.
    """
    f = np.asarray(f, dtype=float)
    n = grid.n_steps
    if f.shape[0] != n + 1:
        raise ValueError("f is not sampled on this grid")
    if isinstance(k, KernelSpec):
        if f.ndim != 1:
            raise ValueError("scalar kernel requires a 1-D grid function")
        w = kernel_cell_weights(k, grid)
        if sampling == "left":
            cell = f[:-1]
        elif sampling == "trapezoid":
            cell = 0.5 * (f[:-1] + f[1:])
        else:
            raise ValueError(f"unknown sampling {sampling!r}")
        out = np.zeros(n + 1)
        out[1:] = fftconvolve(cell, w)[:n]
        return out
    if isinstance(k, KernelMatrix):
        if f.ndim != 2 or f.shape[1] != 2:
            raise ValueError("matrix kernel requires an (n+1, 2) row-vector grid function")
        # (f*K)_1 = (f1 + beta1*f2)*K1 ; (f*K)_2 = f2*K2
        c1 = convolve_kernel(f[:, 0] + k.beta1 * f[:, 1], k.k1, grid, sampling)
        c2 = convolve_kernel(f[:, 1], k.k2, grid, sampling)
        return np.column_stack([c1, c2])
    raise TypeError(f"unsupported kernel type {type(k)!r}")


def convolve_fn(f: np.ndarray, g: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Trapezoid discretization of (f*g)(t_n) = int_0^{t_n} f(s) g(t_n - s) ds."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = grid.n_steps
    if f.shape != (n + 1,) or g.shape != (n + 1,):
        raise ValueError("f and g must be grid functions on the same grid")
    full = fftconvolve(f, g)[: n + 1]
    full -= 0.5 * (f[0] * g + g[0] * f)
    return grid.step * full


# ---------------------------------------------------------------------------
# Mittag-Leffler function
# ---------------------------------------------------------------------------

#: float64 series is trusted while the running peak-term/|sum| ratio stays
#: below this; beyond it, cancellation eats the 1e-10 target and the
#: evaluation is redone in extended precision.
_ML_CANCEL_LIMIT = 1e4


def _ml_series_float(alpha: float, beta: float, z: np.ndarray, max_terms: int):
    acc = np.zeros_like(z)
    peak = np.zeros_like(z)
    with np.errstate(divide="ignore"):
        logz = np.where(z == 0.0, -np.inf, np.log(np.abs(z)))
    sgn = np.sign(z)
    # terms |z|^n/Gamma(a*n+b) decay once a*n+b exceeds |z|^(1/a)
    decay_from = np.abs(z) ** (1.0 / alpha) + 2.0
    converged = np.zeros(z.shape, dtype=bool)
    term = np.empty_like(z)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(max_terms):
            if n == 0:
                term[:] = 1.0 / math.gamma(beta)
            else:
                log_t = n * logz - gammaln(alpha * n + beta)
                term[:] = np.where(np.isneginf(log_t), 0.0, np.exp(log_t) * sgn**n)
            acc += term
            np.maximum(peak, np.abs(term), out=peak)
            small = np.abs(term) <= 1e-16 * np.maximum(np.abs(acc), 1e-300)
            converged |= small & (alpha * n + beta > decay_from)
            if converged.all():
                break
    return acc, peak, converged


def _ml_mpmath(alpha: float, beta: float, z: float, extra_digits: int) -> float:
    import mpmath as mp

    with mp.workdps(30 + max(extra_digits, 0)):
        za, al, be = mp.mpf(z), mp.mpf(alpha), mp.mpf(beta)
        acc = mp.mpf(0)
        n = 0
        while True:
            term = za**n / mp.gamma(al * n + be)
            acc += term
            n += 1
            if n > 20 and abs(term) < mp.mpf(10) ** (-mp.mp.dps) * (abs(acc) + 1):
                break
            if n > 100000:  # pragma: no cover
                raise MittagLefflerError("extended-precision series did not converge")
        return float(acc)


def mittag_leffler(alpha: float, beta: float, z, max_terms: int = 400):
    """E_{alpha,beta}(z) = sum_n z^n / Gamma(alpha*n + beta), real z.

    Accurate to ~1e-10 relative on |z| <= 50.  Small and moderate arguments
    use the float64 power series; once cancellation would degrade that
    (large negative z), the affected entries are resummed with an
    extended-precision series whose working precision is sized from the
    observed peak-term/result ratio.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    scalar = np.isscalar(z) or np.ndim(z) == 0
    acc, peak, converged = _ml_series_float(alpha, beta, z_arr.ravel(), max_terms)
    bad = ~converged | (peak > _ML_CANCEL_LIMIT * np.maximum(np.abs(acc), 1e-300))
    if bad.any():
        flat = acc.copy()
        for i in np.flatnonzero(bad):
            ratio = peak[i] / max(abs(acc[i]), 1e-300)
            extra = int(math.log10(max(ratio, 1.0))) + 10
            flat[i] = _ml_mpmath(alpha, beta, float(z_arr.ravel()[i]), extra)
        acc = flat
    out = acc.reshape(z_arr.shape)
    return float(out[0]) if scalar else out.reshape(np.shape(z))


# ---------------------------------------------------------------------------
# resolvents
# ---------------------------------------------------------------------------


def resolvent(k: KernelSpec, grid: TimeGrid, method: str = "closed_form") -> np.ndarray:
    """Resolvent of the second kind of ``k`` sampled on the grid.

    closed_form: R(t) = c t^(a-1) E_{a,a}(-c t^a) with a = hurst+1/2, c = scale.
    numeric:     forward recursion of the discrete identity K*R = K - R using
                 exact kernel cell weights against left-endpoint samples of R
                 (needs hurst >= 1/2 so that K is finite at the nodes).
    """
    a = k.alpha
    c = k.scale
    t = grid.times
    if method == "closed_form":
        out = np.empty(grid.n_steps + 1)
        out[1:] = c * t[1:] ** (a - 1.0) * mittag_leffler(a, a, -c * t[1:] ** a)
        if a > 1.0:
            out[0] = 0.0
        elif a == 1.0:
            out[0] = c
        else:
            out[0] = np.inf
        return out
    if method == "numeric":
        if k.hurst < 0.5:
            raise ValueError("numeric resolvent needs hurst >= 1/2 (kernel finite at nodes)")
        # K*R = K - R with trapezoid cell sampling of R, except that R's first
        # cell (where R ~ K is kinked) enters through its mass m0; locally
        # R = K - K*K + ..., so m0 = int_0^dt K - c^2 dt^(2a)/Gamma(2a+1).
        # The current node sits in the last cell with weight w0/2, making each
        # step an explicit solve.
        w = kernel_cell_weights(k, grid)
        kv = np.asarray(k(t))
        dt = grid.step
        m0 = k.cumulative(dt) - c * c * dt ** (2 * a) / math.gamma(2 * a + 1)
        r = np.empty(grid.n_steps + 1)
        r[0] = kv[0]
        r[1] = (kv[1] - m0 * w[0] / dt) if grid.n_steps >= 1 else r[0]
        for n in range(2, grid.n_steps + 1):
            conv = m0 * w[n - 1] / dt
            conv += 0.5 * (r[1:n] @ w[n - 2 :: -1] + r[2:n] @ w[n - 2 : 0 : -1])
            r[n] = (kv[n] - conv) / (1.0 + 0.5 * w[0])
        return r
    raise ValueError(f"unknown method {method!r}")


def resolvent_integral(k: KernelSpec, t) -> np.ndarray:
    """int_0^t R(s) ds = 1 - E_{a,1}(-c t^a) for the power-kernel resolvent."""
    a = k.alpha
    t = np.asarray(t, dtype=float)
    return 1.0 - mittag_leffler(a, 1.0, -k.scale * t**a)


def resolvent_identity_residual(k: KernelSpec, grid: TimeGrid, r: np.ndarray | None = None) -> np.ndarray:
    """Residual (K*R + R - K)(t_n), n >= 1, for a resolvent sampled on the grid.

    K*R is discretized with exact kernel cell weights against trapezoid
    samples of R, except R's kinked first cell which enters through its exact
    mass int_0^dt R.  Converges to 0 as dt -> 0 when R is the true resolvent.
    """
    n = grid.n_steps
    dt = grid.step
    if r is None:
        r = resolvent(k, grid, method="closed_form")
    w = kernel_cell_weights(k, grid)
    m0 = float(resolvent_integral(k, dt))
    conv = np.zeros(n + 1)
    conv[1:] = m0 * w / dt
    if n >= 2:
        s = 0.5 * (r[1:n] + r[2 : n + 1])
        conv[2:] += fftconvolve(s, w)[: n - 1]
    kv = np.asarray(k(grid.times))
    return conv[1:] + r[1:] - kv[1:]


@dataclass(frozen=True)
class ResolventTables:
    """R_Theta and E_Theta = K - R_Theta*K sampled on a grid.

    ``e`` / ``r`` have shape (n+1, 2, 2); the (0,1) entry is identically 0.
    ``e_cum`` / ``r_cum`` hold cumulative integrals int_0^t E(s) ds and
    int_0^t R(s) ds (diagonal entries exact via Mittag-Leffler, the (2,1)
    entry by trapezoid), used for conditional means and the linear Riccati
    closed form.
    """

    grid: TimeGrid
    r: np.ndarray
    e: np.ndarray
    e_cum: np.ndarray
    r_cum: np.ndarray


def e_theta(drift: CointegrationDrift, kernels: KernelMatrix, grid: TimeGrid,
            method: str = "closed_form") -> ResolventTables:
    """Resolvent pair (R_Theta, E_Theta) for the lower-triangular model.

    R_Theta is the resolvent of K*Theta; its entries are built from the
    scalar resolvents R1 of theta1*K1 and R2 of theta2*K2:

        R_Theta = ((R1, 0),
                   (beta1*R1 + (beta2/theta2)*R2 - (beta1 + beta2/theta2)*R2*R1, R2))

    and E_Theta = R_Theta * Theta^{-1}, so E^11 = R1/theta1, E^22 = R2/theta2,
    E^21 = (beta1/theta1)*R1 - (beta1/theta1 + beta2/(theta1*theta2))*R2*R1.
    """
    if abs(kernels.beta1 - drift.beta1) > 1e-12 * max(1.0, abs(drift.beta1)):
        raise ValueError("kernel matrix and drift disagree on beta1")
    th1, th2 = drift.theta1, drift.theta2
    be1, be2 = drift.beta1, drift.beta2
    if kernels.k1.hurst < 0.5 or kernels.k2.hurst < 0.5:
        raise ValueError("e_theta requires kernels finite at the nodes (hurst >= 1/2)")
    k1s = KernelSpec(kernels.k1.hurst, kernels.k1.scale * th1)
    k2s = KernelSpec(kernels.k2.hurst, kernels.k2.scale * th2)
    r1 = resolvent(k1s, grid, method=method)
    r2 = resolvent(k2s, grid, method=method)
    r2r1 = convolve_fn(r2, r1, grid)

    n = grid.n_steps
    r = np.zeros((n + 1, 2, 2))
    r[:, 0, 0] = r1
    r[:, 1, 1] = r2
    r[:, 1, 0] = be1 * r1 + (be2 / th2) * r2 - (be1 + be2 / th2) * r2r1

    e = np.zeros_like(r)
    e[:, 0, 0] = r1 / th1
    e[:, 1, 1] = r2 / th2
    e[:, 1, 0] = (be1 / th1) * r1 - (be1 / th1 + be2 / (th1 * th2)) * r2r1

    # cumulatives: scalar-resolvent parts exact via Mittag-Leffler, the smooth
    # convolution R2*R1 by trapezoid
    int_r1 = resolvent_integral(k1s, grid.times)
    int_r2 = resolvent_integral(k2s, grid.times)
    int_r2r1 = np.zeros(n + 1)
    dt = grid.step
    int_r2r1[1:] = np.cumsum(0.5 * dt * (r2r1[1:] + r2r1[:-1]))
    e_cum = np.zeros_like(e)
    r_cum = np.zeros_like(r)
    r_cum[:, 0, 0] = int_r1
    r_cum[:, 1, 1] = int_r2
    r_cum[:, 1, 0] = be1 * int_r1 + (be2 / th2) * int_r2 - (be1 + be2 / th2) * int_r2r1
    e_cum[:, 0, 0] = int_r1 / th1
    e_cum[:, 1, 1] = int_r2 / th2
    e_cum[:, 1, 0] = (be1 / th1) * int_r1 - (be1 / th1 + be2 / (th1 * th2)) * int_r2r1
    return ResolventTables(grid=grid, r=r, e=e, e_cum=e_cum, r_cum=r_cum)
