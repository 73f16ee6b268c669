"""Path simulation for the coupled mortality/rate/claims system and the
discounted wealth recursion.

The mortality pair follows the stochastic Volterra equation with the
lower-triangular power kernel; the Euler scheme pairs exact kernel cell
weights with left-endpoint drift and noise samples:

    mu(t_n) = mu0 + sum_{j<n} W[n-1-j] ( b - Theta mu(t_j) + sigma(mu(t_j)) dW_j / dt )

where W[m] are the 2x2 cell-weight matrices.  The short rate uses plain
Euler (vasicek) or full-truncation Euler (cir).  Claims form a compound
Poisson process with intensity c1 * max(mu2_hat, 0), sampled by thinning.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit, prange
from .affine import CIR, VASICEK, MortalityParams, RateParams
from .kernels import TimeGrid, kernel_cell_weights


@dataclass(frozen=True)
class LiabilityParams:
    """Compound-Poisson claims (frequency c1 * mu2_hat) and annuity scale c2.

    claim_dist: "deterministic" (z = mean) or "exponential" (mean ``mean``).
    """

    c1: float = 8.0
    c2: float = 4.0
    claim_dist: str = "deterministic"
    mean: float = 1.0

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        if self.claim_dist not in ("deterministic", "exponential"):
            raise ValueError(f"unknown claim_dist {self.claim_dist!r}")
        if self.mean <= 0:
            raise ValueError("claim mean must be positive")

    @property
    def ez(self) -> float:
        return self.mean

    @property
    def ez2(self) -> float:
        if self.claim_dist == "deterministic":
            return self.mean**2
        return 2.0 * self.mean**2


@dataclass
class PathBundle:
    """One simulated realization on a grid (arrays indexed by node)."""

    grid: TimeGrid
    dW: np.ndarray                 # (3, n_steps): W1, W2, W_r increments
    mu: np.ndarray                 # (n_steps+1, 2)
    mu_hat: np.ndarray             # (n_steps+1, 2)
    r: np.ndarray                  # (n_steps+1,)
    int_mu2_hat: np.ndarray        # (n_steps+1,) trapezoid of mu_hat2 (signed)
    int_mu2_hat_floored: np.ndarray  # same with integrand floored at 0
    disc: np.ndarray               # (n_steps+1,) exp(-int_0^t r)
    seed: object = None
    claim_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    claim_sizes: np.ndarray = field(default_factory=lambda: np.empty(0))

    def claims_in_cells(self, n_cells: int | None = None) -> np.ndarray:
        """Total claim size per grid cell [t_k, t_{k+1})."""
        n = n_cells if n_cells is not None else self.grid.n_steps
        out = np.zeros(n)
        if len(self.claim_times):
            idx = np.minimum((self.claim_times / self.grid.step).astype(int), n - 1)
            np.add.at(out, idx, self.claim_sizes)
        return out


# ---------------------------------------------------------------------------
# mortality-pair kernels (numba + numpy backends)
# ---------------------------------------------------------------------------


def _mu_loop(w1, w2, beta1, b1, b2, th1, th2, be2, s1, s2, cir, mu10, mu20, dW1, dW2, mu1, mu2):
    """dW1/dW2 hold increments pre-divided by dt (the weights carry dt)."""
    n_paths, n = dW1.shape
    for p in prange(n_paths):
        g1 = np.empty(n)
        g2 = np.empty(n)
        mu1[p, 0] = mu10
        mu2[p, 0] = mu20
        for k in range(1, n + 1):
            j = k - 1
            m1 = mu1[p, j]
            m2 = mu2[p, j]
            if cir:
                v1 = s1 * np.sqrt(max(m1, 0.0))
                v2 = s2 * np.sqrt(max(m2, 0.0))
            else:
                v1 = s1
                v2 = s2
            g1[j] = (b1 - th1 * m1) + v1 * dW1[p, j]
            g2[j] = (b2 - be2 * m1 - th2 * m2) + v2 * dW2[p, j]
            acc1 = 0.0
            acc2 = 0.0
            for i in range(k):
                acc1 += g1[i] * w1[k - 1 - i]
                acc2 += g2[i] * w2[k - 1 - i]
            mu1[p, k] = mu10 + acc1
            mu2[p, k] = mu20 + beta1 * acc1 + acc2
    return mu1, mu2


_mu_nb = njit(parallel=True, cache=True)(_mu_loop) if _accel.HAVE_NUMBA else None


def _mu_np(w1, w2, beta1, b1, b2, th1, th2, be2, s1, s2, cir, mu10, mu20, dW1, dW2, mu1, mu2):
    """Vectorized across paths; sequential in time (feedback through drift)."""
    n_paths, n = dW1.shape
    g1 = np.empty((n_paths, n))
    g2 = np.empty((n_paths, n))
    mu1[:, 0] = mu10
    mu2[:, 0] = mu20
    for k in range(1, n + 1):
        j = k - 1
        m1 = mu1[:, j]
        m2 = mu2[:, j]
        if cir:
            v1 = s1 * np.sqrt(np.maximum(m1, 0.0))
            v2 = s2 * np.sqrt(np.maximum(m2, 0.0))
        else:
            v1, v2 = s1, s2
        g1[:, j] = (b1 - th1 * m1) + v1 * dW1[:, j]
        g2[:, j] = (b2 - be2 * m1 - th2 * m2) + v2 * dW2[:, j]
        acc1 = g1[:, :k] @ w1[k - 1 :: -1]
        acc2 = g2[:, :k] @ w2[k - 1 :: -1]
        mu1[:, k] = mu10 + acc1
        mu2[:, k] = mu20 + beta1 * acc1 + acc2
    return mu1, mu2


def _simulate_mu_batch(mp: MortalityParams, grid: TimeGrid, dW1, dW2):
    """dW1/dW2 are *scaled* increments dW/dt of shape (n_paths, n_steps)."""
    w1 = kernel_cell_weights(mp.kernels.k1, grid)
    w2 = kernel_cell_weights(mp.kernels.k2, grid)
    d = mp.drift
    n_paths, n = dW1.shape
    mu1 = np.empty((n_paths, n + 1))
    mu2 = np.empty((n_paths, n + 1))
    fn = _mu_nb if _mu_nb is not None else _mu_np
    fn(w1, w2, mp.kernels.beta1, d.b1, d.b2, d.theta1, d.theta2, d.beta2,
       mp.sigma1, mp.sigma2, mp.vol_model == CIR,
       float(mp.mu0[0]), float(mp.mu0[1]), dW1, dW2, mu1, mu2)
    return mu1, mu2


def _simulate_rate(rp: RateParams, grid: TimeGrid, dWr):
    """Euler (vasicek) / full-truncation Euler (cir); dWr shape (n_paths, n)."""
    n_paths, n = dWr.shape
    dt = grid.step
    r = np.empty((n_paths, n + 1))
    r[:, 0] = rp.r0
    if rp.vol_model == VASICEK:
        for k in range(n):
            r[:, k + 1] = r[:, k] + (rp.b_r - rp.theta_r * r[:, k]) * dt + rp.sigma_r * dWr[:, k]
    else:
        for k in range(n):
            rk = np.maximum(r[:, k], 0.0)
            r[:, k + 1] = r[:, k] + (rp.b_r - rp.theta_r * rk) * dt + rp.sigma_r * np.sqrt(rk) * dWr[:, k]
    return r


def _cumtrapz0(y: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(y)
    out[..., 1:] = np.cumsum(0.5 * dt * (y[..., 1:] + y[..., :-1]), axis=-1)
    return out


def _path_seed(seed, index: int, stream: int) -> np.random.Generator:
    # per-(path, stream) entropy tuple: order-independent random access with
    # sound cross-stream statistics (manual spawn keys showed detectable
    # grand-mean correlation across sequentially keyed streams)
    base = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    ss = np.random.SeedSequence(entropy=(*base, index, stream))
    return np.random.default_rng(ss)


def simulate_mu_batch(mp: MortalityParams, grid: TimeGrid, n_paths: int, seed,
                      base_index: int = 0):
    """Mortality pair only, as (mu1, mu2, dW) arrays with a leading path axis.

    Lighter than ``simulate_paths`` for large Monte Carlo runs; path
    ``base_index + i`` uses the same increments it would get there, so runs
    can be chunked without changing the sample.
    """
    n = grid.n_steps
    dW = np.empty((n_paths, 2, n))
    for i in range(n_paths):
        dW[i] = _path_seed(seed, base_index + i, 0).standard_normal((3, n))[:2] * np.sqrt(grid.step)
    mu1, mu2 = _simulate_mu_batch(mp, grid, dW[:, 0] / grid.step, dW[:, 1] / grid.step)
    return mu1, mu2, dW


def simulate_rate_batch(rp: RateParams, grid: TimeGrid, n_paths: int, seed,
                        base_index: int = 0) -> np.ndarray:
    """Short-rate paths only, shape (n_paths, n_steps+1)."""
    n = grid.n_steps
    dWr = np.empty((n_paths, n))
    for i in range(n_paths):
        dWr[i] = _path_seed(seed, base_index + i, 0).standard_normal((3, n))[2] * np.sqrt(grid.step)
    return _simulate_rate(rp, grid, dWr)


def simulate_paths(mp: MortalityParams, rp: RateParams, grid: TimeGrid, n_paths: int,
                   seed, lp: LiabilityParams | None = None,
                   claims_horizon: float | None = None) -> list[PathBundle]:
    """Simulate ``n_paths`` independent realizations; deterministic in ``seed``.

    Randomness is drawn per path from spawn-keyed child generators, so path i
    is reproducible in isolation and results do not depend on batch size.
    When ``lp`` is given, claims are attached (on [0, claims_horizon], which
    defaults to the grid horizon).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n = grid.n_steps
    dW = np.empty((n_paths, 3, n))
    for i in range(n_paths):
        dW[i] = _path_seed(seed, i, 0).standard_normal((3, n)) * np.sqrt(grid.step)
    mu1, mu2 = _simulate_mu_batch(mp, grid, dW[:, 0] / grid.step, dW[:, 1] / grid.step)
    r = _simulate_rate(rp, grid, dW[:, 2])
    t = grid.times
    m1t = mp.baseline1(t)
    m2t = mp.baseline2(t)
    bundles = []
    for i in range(n_paths):
        mu = np.column_stack([mu1[i], mu2[i]])
        mu_hat = mu + np.column_stack([m1t, m2t])
        int2 = _cumtrapz0(mu_hat[:, 1], grid.step)
        int2f = _cumtrapz0(np.maximum(mu_hat[:, 1], 0.0), grid.step)
        disc = np.exp(-_cumtrapz0(r[i], grid.step))
        b = PathBundle(grid=grid, dW=dW[i], mu=mu, mu_hat=mu_hat, r=r[i],
                       int_mu2_hat=int2, int_mu2_hat_floored=int2f, disc=disc,
                       seed=(seed, i))
        if lp is not None:
            simulate_claims(lp, b, horizon=claims_horizon)
        bundles.append(b)
    return bundles


def simulate_claims(lp: LiabilityParams, path: PathBundle, horizon: float | None = None,
                    rng: np.random.Generator | None = None) -> PathBundle:
    """Attach thinned compound-Poisson claims with intensity c1*max(mu2_hat,0).

    The candidate stream runs at the path's peak intensity; candidates are
    accepted with probability lambda(t)/lambda_max.  Claim sizes are iid from
    the configured law.  Mutates and returns ``path``.
    """
    if rng is None:
        if path.seed is None:
            raise ValueError("path carries no seed record; pass an explicit rng")
        rng = _path_seed(path.seed[0], path.seed[1], 1)
    T0 = horizon if horizon is not None else path.grid.horizon
    t = path.grid.times
    lam = lp.c1 * np.maximum(path.mu_hat[:, 1], 0.0)
    jmax = min(int(np.ceil(T0 / path.grid.step - 1e-9)), path.grid.n_steps)
    lam_max = float(lam[: jmax + 1].max()) if lp.c1 > 0 else 0.0
    if lam_max <= 0:
        path.claim_times = np.empty(0)
        path.claim_sizes = np.empty(0)
        return path
    n_cand = rng.poisson(lam_max * T0)
    cand = np.sort(rng.uniform(0.0, T0, n_cand))
    lam_at = np.interp(cand, t, lam)
    keep = rng.uniform(0.0, 1.0, n_cand) < lam_at / lam_max
    times = cand[keep]
    if lp.claim_dist == "deterministic":
        sizes = np.full(times.shape, lp.mean)
    else:
        sizes = rng.exponential(lp.mean, times.shape)
    path.claim_times = times
    path.claim_sizes = sizes
    return path


def resimulate_from(path: PathBundle, mp: MortalityParams, rp: RateParams, k: int,
                    rng: np.random.Generator, lp: LiabilityParams | None = None,
                    claims_horizon: float | None = None) -> PathBundle:
    """Branch a path at node k: keep increments before t_k, redraw after.

    Claims after t_k are redrawn as well (earlier ones are kept); used by the
    spike-variation equilibrium check where expectations condition on F_{t_k}.
    """
    grid = path.grid
    n = grid.n_steps
    dW = path.dW.copy()
    dW[:, k:] = rng.standard_normal((3, n - k)) * np.sqrt(grid.step)
    mu1, mu2 = _simulate_mu_batch(mp, grid, dW[None, 0] / grid.step, dW[None, 1] / grid.step)
    r = _simulate_rate(rp, grid, dW[None, 2])
    t = grid.times
    mu = np.column_stack([mu1[0], mu2[0]])
    mu_hat = mu + np.column_stack([mp.baseline1(t), mp.baseline2(t)])
    int2 = _cumtrapz0(mu_hat[:, 1], grid.step)
    int2f = _cumtrapz0(np.maximum(mu_hat[:, 1], 0.0), grid.step)
    disc = np.exp(-_cumtrapz0(r[0], grid.step))
    out = PathBundle(grid=grid, dW=dW, mu=mu, mu_hat=mu_hat, r=r[0],
                     int_mu2_hat=int2, int_mu2_hat_floored=int2f, disc=disc, seed=None)
    if lp is not None:
        T0 = claims_horizon if claims_horizon is not None else grid.horizon
        simulate_claims(lp, out, horizon=T0, rng=rng)
        tk = k * grid.step
        keep_old = path.claim_times < tk
        keep_new = out.claim_times >= tk
        out.claim_times = np.concatenate([path.claim_times[keep_old], out.claim_times[keep_new]])
        out.claim_sizes = np.concatenate([path.claim_sizes[keep_old], out.claim_sizes[keep_new]])
    return out


# ---------------------------------------------------------------------------
# innovation reconstruction (deconvolution of the discrete scheme)
# ---------------------------------------------------------------------------


def innovations_from_path(mu: np.ndarray, mp: MortalityParams, grid: TimeGrid) -> np.ndarray:
    """Recover the sigma-scaled shocks sigma(mu(t_j)) dW_j implied by a path
    under ``mp``'s discrete scheme (exact inverse of the simulator when the
    parameters are the truth; a model-filtered innovation sequence otherwise).

    Returns an (n_steps, 2) array.
    """
    mu = np.asarray(mu, dtype=float)
    n = grid.n_steps
    if mu.shape != (n + 1, 2):
        raise ValueError("mu must have shape (n_steps+1, 2)")
    w1 = kernel_cell_weights(mp.kernels.k1, grid)
    w2 = kernel_cell_weights(mp.kernels.k2, grid)
    be1 = mp.kernels.beta1
    d = mp.drift
    dt = grid.step
    # v_j = drift_j + shock_j/dt; peel off the last cell at each step
    v = np.empty((n, 2))
    y1 = mu[1:, 0] - mu[0, 0]
    # mu2 couples through beta1 * (K1 part); work with z = mu2 - beta1*mu1 which
    # depends on the K2 convolution alone
    z = (mu[:, 1] - mp.mu0[1]) - be1 * (mu[:, 0] - mp.mu0[0])
    for k in range(1, n + 1):
        acc1 = v[: k - 1, 0] @ w1[k - 1 : 0 : -1] if k > 1 else 0.0
        acc2 = v[: k - 1, 1] @ w2[k - 1 : 0 : -1] if k > 1 else 0.0
        v[k - 1, 0] = (y1[k - 1] - acc1) / w1[0]
        v[k - 1, 1] = (z[k] - acc2) / w2[0]
    drift1 = d.b1 - d.theta1 * mu[:-1, 0]
    drift2 = d.b2 - d.beta2 * mu[:-1, 0] - d.theta2 * mu[:-1, 1]
    shocks = np.column_stack([(v[:, 0] - drift1) * dt, (v[:, 1] - drift2) * dt])
    return shocks


# ---------------------------------------------------------------------------
# wealth evolution
# ---------------------------------------------------------------------------


def evolve_wealth(path: PathBundle, u: np.ndarray, lp: LiabilityParams, panel,
                  x0: float, n_cells: int | None = None) -> np.ndarray:
    """Euler recursion of the discounted wealth equation.

    ``u`` holds the controls (u1, u2) on nodes 0..n_cells-1; ``panel`` is an
    InstrumentPanel supplying the bond loadings and risk premia.  Claims and
    the annuity outflow pi(t) = c2 exp(-int max(mu2_hat,0)) come from the
    path; the jump compensator uses the floored intensity while the drift
    keeps the signed mu2_hat of the wealth equation.
    """
    grid = path.grid
    n = n_cells if n_cells is not None else u.shape[0]
    if u.shape[0] < n:
        raise ValueError("strategy does not cover the requested cells")
    dt = grid.step
    x = np.empty(n + 1)
    x[0] = x0
    jumps = path.claims_in_cells(n)
    ez = lp.ez
    for k in range(n):
        disc = path.disc[k]
        sl1, sb = panel.sigma_l1(k, path.mu[k, 0]), panel.sigma_b(k, path.r[k])
        nu_b = panel.vartheta_at(k, path.r[k]) * sb
        nu_l = nu_b + panel.phi1_at(k, path.mu[k, 0]) * sl1
        pi = lp.c2 * np.exp(-path.int_mu2_hat_floored[k])
        mu2h = path.mu_hat[k, 1]
        drift = nu_l * u[k, 0] + nu_b * u[k, 1] - pi - ez * lp.c1 * mu2h
        compensator = ez * lp.c1 * max(mu2h, 0.0)
        mart = u[k, 0] * sl1 * path.dW[0, k] + (u[k, 0] + u[k, 1]) * sb * path.dW[2, k]
        x[k + 1] = x[k] + disc * ((drift + compensator) * dt + mart - jumps[k])
    return x
