"""Volterra-Riccati solver: psi = (f - psi*Theta + 1/2*A(psi)) * K on a grid.

The linear case (A = 0, constant volatility) has the closed form
psi = f * E_Theta, which is also exposed here; the quadratic case arises
under square-root volatilities where A(u) = (q1*u1^2, q2*u2^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .kernels import (CointegrationDrift, KernelMatrix, ResolventTables,
                      TimeGrid, e_theta, kernel_cell_weights)


class RiccatiBlowupError(RuntimeError):
    """Solution magnitude exceeded the configured bound before the horizon."""

    def __init__(self, t: float, bound: float):
        super().__init__(f"|psi| exceeded {bound:g} at t={t:g}; no global solution on this grid")
        self.t = t
        self.bound = bound


@dataclass(frozen=True)
class RiccatiProblem:
    f: tuple[float, float]
    drift: CointegrationDrift
    kernels: KernelMatrix
    quad_coeffs: tuple[float, float] | None = None  # (q1, q2) >= 0 enables A(psi)

    def __post_init__(self):
        if self.quad_coeffs is not None and min(self.quad_coeffs) < 0:
            raise ValueError("quadratic coefficients must be non-negative")


@dataclass(frozen=True)
class RiccatiSolution:
    grid: TimeGrid
    psi: np.ndarray  # shape (n_steps+1, 2), psi[0] = (0, 0)


def _step_kernel(w1, w2, beta1, th1, th2, be2, f1, f2, q1, q2, n_steps, bound):
    """Forward stepping with one trapezoid corrector sweep per node.

    g_j = f - psi_j Theta + 1/2 A(psi_j); the row-vector convolution against
    the lower-triangular kernel reduces to two scalar convolutions of
    h = g1 + beta1*g2 (against K1) and g2 (against K2).
    """
    psi1 = np.zeros(n_steps + 1)
    psi2 = np.zeros(n_steps + 1)
    h = np.empty(n_steps + 1)
    g2 = np.empty(n_steps + 1)
    h[0] = f1 + beta1 * f2
    g2[0] = f2
    for n in range(1, n_steps + 1):
        # predictor: left-endpoint samples
        acc1 = 0.0
        acc2 = 0.0
        for j in range(n):
            acc1 += h[j] * w1[n - 1 - j]
            acc2 += g2[j] * w2[n - 1 - j]
        p1 = acc1
        p2 = acc2
        # corrector: evaluate g at the predicted node, redo with trapezoid pairs
        ng1 = f1 - (p1 * th1 + p2 * be2) + 0.5 * q1 * p1 * p1
        ng2 = f2 - p2 * th2 + 0.5 * q2 * p2 * p2
        nh = ng1 + beta1 * ng2
        acc1 = 0.0
        acc2 = 0.0
        for j in range(n - 1):
            acc1 += 0.5 * (h[j] + h[j + 1]) * w1[n - 1 - j]
            acc2 += 0.5 * (g2[j] + g2[j + 1]) * w2[n - 1 - j]
        acc1 += 0.5 * (h[n - 1] + nh) * w1[0]
        acc2 += 0.5 * (g2[n - 1] + ng2) * w2[0]
        psi1[n] = acc1
        psi2[n] = acc2
        if abs(acc1) > bound or abs(acc2) > bound:
            return psi1, psi2, n
        g1 = f1 - (acc1 * th1 + acc2 * be2) + 0.5 * q1 * acc1 * acc1
        g2[n] = f2 - acc2 * th2 + 0.5 * q2 * acc2 * acc2
        h[n] = g1 + beta1 * g2[n]
    return psi1, psi2, -1


_step_nb = njit(cache=True)(_step_kernel) if _accel.HAVE_NUMBA else None


def _step_np(w1, w2, beta1, th1, th2, be2, f1, f2, q1, q2, n_steps, bound):
    """Vectorized fallback: same scheme, per-step dot products over history."""
    psi1 = np.zeros(n_steps + 1)
    psi2 = np.zeros(n_steps + 1)
    h = np.empty(n_steps + 1)
    g2 = np.empty(n_steps + 1)
    h[0] = f1 + beta1 * f2
    g2[0] = f2
    for n in range(1, n_steps + 1):
        w1r = w1[n - 1 :: -1]
        w2r = w2[n - 1 :: -1]
        p1 = h[:n] @ w1r
        p2 = g2[:n] @ w2r
        ng1 = f1 - (p1 * th1 + p2 * be2) + 0.5 * q1 * p1 * p1
        ng2 = f2 - p2 * th2 + 0.5 * q2 * p2 * p2
        nh = ng1 + beta1 * ng2
        acc1 = 0.5 * (h[:n] @ w1r + h[1:n] @ w1r[:-1] + nh * w1[0])
        acc2 = 0.5 * (g2[:n] @ w2r + g2[1:n] @ w2r[:-1] + ng2 * w2[0])
        psi1[n] = acc1
        psi2[n] = acc2
        if abs(acc1) > bound or abs(acc2) > bound:
            return psi1, psi2, n
        g1 = f1 - (acc1 * th1 + acc2 * be2) + 0.5 * q1 * acc1 * acc1
        g2[n] = f2 - acc2 * th2 + 0.5 * q2 * acc2 * acc2
        h[n] = g1 + beta1 * g2[n]
    return psi1, psi2, -1


def solve_riccati(problem: RiccatiProblem, grid: TimeGrid, blowup_bound: float = 1e6) -> RiccatiSolution:
    """Solve the Volterra-Riccati equation by forward convolution stepping."""
    kb1 = problem.kernels.beta1
    if abs(kb1 - problem.drift.beta1) > 1e-12 * max(1.0, abs(kb1)):
        raise ValueError("kernel matrix and drift disagree on beta1")
    w1 = kernel_cell_weights(problem.kernels.k1, grid)
    w2 = kernel_cell_weights(problem.kernels.k2, grid)
    q1, q2 = problem.quad_coeffs if problem.quad_coeffs is not None else (0.0, 0.0)
    step = _step_nb if _step_nb is not None else _step_np
    psi1, psi2, blew = step(
        w1, w2, kb1,
        problem.drift.theta1, problem.drift.theta2, problem.drift.beta2,
        float(problem.f[0]), float(problem.f[1]), float(q1), float(q2),
        grid.n_steps, float(blowup_bound),
    )
    if blew >= 0:
        raise RiccatiBlowupError(blew * grid.step, blowup_bound)
    return RiccatiSolution(grid=grid, psi=np.column_stack([psi1, psi2]))


def psi_linear(f, drift: CointegrationDrift, kernels: KernelMatrix, grid: TimeGrid,
               tables: ResolventTables | None = None) -> RiccatiSolution:
    """Closed form of the linear case: psi(t) = int_0^t f E_Theta(u) du."""
    if tables is None:
        tables = e_theta(drift, kernels, grid)
    f = np.asarray(f, dtype=float)
    psi = np.einsum("i,nij->nj", f, tables.e_cum)
    return RiccatiSolution(grid=grid, psi=psi)
