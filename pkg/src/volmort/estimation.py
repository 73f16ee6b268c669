"""Parameter recovery from discretely observed mortality paths, and a
path-regularity (Hurst/Holder exponent) estimator.

The cointegrated fit exploits that Z = mu2 - beta1*mu1 eliminates every K1
term exactly, leaving (for H2 = 1/2) the standard discretizable equation

    dZ = (b2 - beta2*mu1 - theta2*mu2) dt + sigma2 dW2,

so for each candidate beta1 an OLS of dZ on (1, mu1, mu2) yields the drift
parameters, and beta1 is chosen by profiling the residual sum of squares.
RSS(beta1) is exactly quadratic, so the grid minimum is polished to the
parabola vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import TimeGrid

MODEL1 = "model1"
MODEL2 = "model2"
MODEL2PRIME = "model2prime"


@dataclass(frozen=True)
class EstimationResult:
    model: str
    params: dict = field(default_factory=dict)
    rss: float = float("nan")
    resid_autocorr_lag1: float = float("nan")
    n_obs: int = 0


def _ols(x: np.ndarray, y: np.ndarray):
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    return coef, resid


def _lag1_autocorr(resid: np.ndarray) -> float:
    r = resid - resid.mean()
    denom = float(r @ r)
    if denom == 0.0:
        return 0.0
    return float(r[1:] @ r[:-1] / denom)


def estimate_cointegrated(mu1: np.ndarray, mu2: np.ndarray, grid: TimeGrid,
                          beta_grid: np.ndarray | None = None) -> EstimationResult:
    """Profile fit of (beta1, beta2, b2, theta2, sigma2) on one observed pair.

    H1 is treated as known (identified from national data); the regression
    design (1, mu1, mu2) is shared across candidates, so the profile uses
    one QR factorization and RSS(beta1) is assembled from projections.
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if mu1.shape != mu2.shape or mu1.ndim != 1 or len(mu1) != grid.n_steps + 1:
        raise ValueError("paths must be grid functions on the given grid")
    if beta_grid is None:
        beta_grid = np.arange(0.0, 2.0 + 1e-12, 0.01)
    dt = grid.step
    d1 = np.diff(mu1)
    d2 = np.diff(mu2)
    x = np.column_stack([np.ones(len(d1)), mu1[:-1], mu2[:-1]])
    q, r = np.linalg.qr(x)
    if np.min(np.abs(np.diag(r))) < 1e-13 * np.max(np.abs(np.diag(r))):
        raise np.linalg.LinAlgError("regression design is rank deficient (collinear regressors)")
    # residual parts orthogonal to the design
    p1 = d1 - q @ (q.T @ d1)
    p2 = d2 - q @ (q.T @ d2)
    a = float(p1 @ p1)
    b = float(p1 @ p2)
    c = float(p2 @ p2)
    rss_grid = c - 2.0 * beta_grid * b + beta_grid**2 * a
    i = int(np.argmin(rss_grid))
    beta1 = float(beta_grid[i])
    if a > 0:
        vertex = b / a
        lo, hi = float(beta_grid[0]), float(beta_grid[-1])
        if lo <= vertex <= hi:
            beta1 = vertex
    y = d2 - beta1 * d1
    coef, resid = _ols(x, y)
    rss = float(resid @ resid)
    sigma2 = float(np.sqrt(rss / len(y)) / np.sqrt(dt))
    params = {
        "beta1": beta1,
        "b2": float(coef[0] / dt),
        "beta2": float(-coef[1] / dt),
        "theta2": float(-coef[2] / dt),
        "sigma2": sigma2,
    }
    return EstimationResult(model=MODEL1, params=params, rss=rss,
                            resid_autocorr_lag1=_lag1_autocorr(resid), n_obs=len(y))


def estimate_markovian(mu2: np.ndarray, grid: TimeGrid) -> EstimationResult:
    """OU fit of mu2 alone (the beta1 = beta2 = 0 misspecification)."""
    mu2 = np.asarray(mu2, dtype=float)
    if mu2.ndim != 1 or len(mu2) != grid.n_steps + 1:
        raise ValueError("path must be a grid function on the given grid")
    dt = grid.step
    d2 = np.diff(mu2)
    x = np.column_stack([np.ones(len(d2)), mu2[:-1]])
    coef, resid = _ols(x, d2)
    rss = float(resid @ resid)
    params = {
        "beta1": 0.0,
        "beta2": 0.0,
        "b2": float(coef[0] / dt),
        "theta2": float(-coef[1] / dt),
        "sigma2": float(np.sqrt(rss / len(d2)) / np.sqrt(dt)),
    }
    return EstimationResult(model=MODEL2, params=params, rss=rss,
                            resid_autocorr_lag1=_lag1_autocorr(resid), n_obs=len(d2))


def estimate_correlated(mu1: np.ndarray, mu2: np.ndarray, grid: TimeGrid) -> EstimationResult:
    """OU fit of mu2 plus the noise correlation rho against mu1 innovations.

    Both paths are de-drifted by their own OU fits; rho is the sample
    correlation of the residual increments.
    """
    ou2 = estimate_markovian(mu2, grid)
    mu1 = np.asarray(mu1, dtype=float)
    dt = grid.step
    d1 = np.diff(mu1)
    x1 = np.column_stack([np.ones(len(d1)), mu1[:-1]])
    _, e1 = _ols(x1, d1)
    d2 = np.diff(mu2)
    x2 = np.column_stack([np.ones(len(d2)), mu2[:-1]])
    _, e2 = _ols(x2, d2)
    rho = float(np.corrcoef(e1, e2)[0, 1])
    params = dict(ou2.params)
    params["rho"] = rho
    return EstimationResult(model=MODEL2PRIME, params=params, rss=ou2.rss,
                            resid_autocorr_lag1=ou2.resid_autocorr_lag1, n_obs=ou2.n_obs)


def holder_regularity(path: np.ndarray, grid: TimeGrid,
                      lags: np.ndarray | None = None) -> tuple[float, float]:
    """Holder/Hurst exponent from detrended absolute increments.

    Regresses log mean |x(t+L) - x(t)| on log L over a geometric lag set
    (defaults to {1,2,4,8,16} grid steps).  Increments are mean-centered per
    lag, which removes smooth additive trends to first order; any known
    baseline should still be subtracted by the caller.  Returns (slope,
    regression standard error of the slope).
    """
    x = np.asarray(path, dtype=float)
    if x.ndim != 1 or len(x) < 1000:
        raise ValueError("need a 1-D path with at least 1000 nodes")
    if lags is None:
        lags = np.array([1, 2, 4, 8, 16])
    lags = np.asarray(lags, dtype=int)
    if lags.min() < 1 or lags.max() >= len(x) // 4:
        raise ValueError("lags must be >= 1 and small relative to the path")
    logm = np.empty(len(lags), dtype=float)
    for i, lag in enumerate(lags):
        d = x[lag:] - x[:-lag]
        d = d - d.mean()
        logm[i] = np.log(np.mean(np.abs(d)))
    logl = np.log(lags * grid.step)
    design = np.column_stack([np.ones(len(lags)), logl])
    coef, resid = _ols(design, logm)
    dof = max(len(lags) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    return float(coef[1]), float(np.sqrt(cov[1, 1]))
