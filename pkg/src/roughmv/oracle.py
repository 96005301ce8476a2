"""Independent reference computations for cross-validation.

Nothing here calls the Riccati solver or the portfolio formulas; the only
internal dependencies are kernel primitives and parameter containers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect

from .errors import DomainError, NumericError
from .kernels import KernelKind, UniformGrid, product_weights
from .params import ModelParams


@dataclass(frozen=True)
class OdeSolution:
    t: np.ndarray
    w: np.ndarray
    y: np.ndarray
    substeps: int
    error_estimate: float


def _rk4(f, b: float, T: float, n_steps: int, record_every: int):
    """Classical RK4 for ``w' = f(w)``, ``y' = b w`` from zero, in plain floats."""
    h = T / n_steps
    w = y = 0.0
    ws, ys = [0.0], [0.0]
    for i in range(n_steps):
        w1 = w
        k1 = f(w1)
        w2 = w + 0.5 * h * k1
        k2 = f(w2)
        w3 = w + 0.5 * h * k2
        k3 = f(w3)
        w4 = w + h * k3
        k4 = f(w4)
        y += h / 6.0 * b * (w1 + 2.0 * w2 + 2.0 * w3 + w4)
        w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (i + 1) % record_every == 0:
            ws.append(w)
            ys.append(y)
    return np.array([ws, ys]).T


def _rk4_halving(f, b: float, grid: UniformGrid, tol: float, max_substeps: int = 1 << 12):
    m = 1
    coarse = _rk4(f, b, grid.T, grid.N * m, m)
    while True:
        try:
            fine = _rk4(f, b, grid.T, grid.N * 2 * m, 2 * m)
        except OverflowError:
            raise NumericError("ODE oracle diverged") from None
        err = float(np.max(np.abs(fine - coarse)))
        if not np.all(np.isfinite(fine)):
            raise NumericError("ODE oracle diverged")
        if err < tol or 2 * m >= max_substeps:
            if err >= tol:
                raise NumericError(f"RK4 step halving stalled at error {err:.3g}")
            return fine, 2 * m, err
        m *= 2
        coarse = fine


def riccati_ode_solve(c0: float, c1: float, c2: float, grid: UniformGrid, *, scale: float = 1.0, tol: float = 1e-9):
    """RK4 for ``w' = scale (c0 + c1 w + c2 w^2)``, ``w(0) = 0``, plus ``int_0^t w``.

    Returns ``(w, int w)`` on the grid.
    """
    states, _, _ = _rk4_halving(lambda w: scale * (c0 + c1 * w + c2 * w * w), 1.0, grid, tol)
    return states[:, 0], states[:, 1]


def heston_ode_solve(params: ModelParams, grid: UniformGrid, *, tol: float = 1e-9) -> OdeSolution:
    """``w' = c (c2 w^2 - lam w - theta^2)``, ``y' = kappa phi w`` from zero.

    ``c`` is the constant-kernel scale, so ``w`` coincides with ``psi`` for
    ``K = c``.
    """
    k = params.kernel
    scale = k.c if k.kind is KernelKind.CONSTANT else 1.0
    lam, c2, th2, kp = params.lam, params.c2, params.theta**2, params.kappa * params.phi
    states, m, err = _rk4_halving(lambda w: scale * (c2 * w * w - lam * w - th2), kp, grid, tol)
    return OdeSolution(grid.t, states[:, 0], states[:, 1], m, err)


def heston_M0(params: ModelParams, *, N: int = 2000, tol: float = 1e-9) -> float:
    """``2 exp(2 int r + y(T) + V0 w(T) / c)`` for the constant kernel ``K = c``."""
    if params.kernel.kind is not KernelKind.CONSTANT:
        raise DomainError("the ODE reduction needs the constant kernel")
    sol = heston_ode_solve(params, UniformGrid(params.T, N), tol=tol)
    return 2.0 * math.exp(2.0 * params.rate_integral + sol.y[-1] + params.V0 * sol.w[-1] / params.kernel.c)


def heston_exp_moment(a: float, params: ModelParams, *, N: int = 2000, tol: float = 1e-9) -> float:
    """``E exp(a int_0^T V)`` for the constant kernel from the Riccati ODE of ``g``."""
    if params.kernel.kind is not KernelKind.CONSTANT:
        raise DomainError("the ODE reduction needs the constant kernel")
    c = params.kernel.c
    g, int_g = riccati_ode_solve(a, -params.kappa, params.sigma**2 / 2.0, UniformGrid(params.T, N), scale=c, tol=tol)
    return math.exp(params.kappa * params.phi * int_g[-1] + params.V0 * g[-1] / c)


def deterministic_volterra(params: ModelParams, grid: UniformGrid) -> np.ndarray:
    """``V = V0 + K * (kappa (phi - V))`` by implicit product-trapezoidal marching (exact per step for linear drift)."""
    A, B, _ = product_weights(params.kernel, grid.h, grid.N)
    k, phi, V0 = params.kappa, params.phi, params.V0
    V = np.empty(grid.N + 1)
    V[0] = V0
    D = np.empty(grid.N + 1)
    D[0] = k * (phi - V0)
    for n in range(grid.N):
        hist = A[1 : n + 1] @ D[n:0:-1] + B[: n + 1] @ D[n::-1]
        V[n + 1] = (V0 + A[0] * k * phi + hist) / (1.0 + A[0] * k)
        D[n + 1] = k * (phi - V[n + 1])
    return V


def brute_quadrature(f, a: float, b: float, tol: float = 1e-10, *, limit: int = 500) -> float:
    """Adaptive Gauss-Kronrod quadrature that refuses to return an unconverged value."""
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    val, err = quad(f, a, b, epsabs=tol, epsrel=0.0, limit=limit)
    if not err <= tol:
        raise NumericError(f"quadrature error estimate {err:.3g} exceeds tolerance {tol:.3g}")
    return float(val)


def q2_inverse_numeric(a: float, kappa: float, sigma: float, tau: float, *, xtol: float = 1e-10) -> float:
    """Invert ``Q2(w) = int_0^w du / (a - kappa u + sigma^2 u^2 / 2)`` by quadrature and bisection."""
    D = kappa**2 - 2.0 * a * sigma**2
    if not D > 0:
        raise DomainError("needs kappa^2 - 2 a sigma^2 > 0")
    if a == 0 or tau == 0:
        return 0.0
    w_star = (kappa - math.sqrt(D)) / sigma**2

    def H(u):
        return a - kappa * u + 0.5 * sigma**2 * u * u

    def Q2(w):
        return quad(lambda u: 1.0 / H(u), 0.0, w, epsabs=1e-13, epsrel=1e-13, limit=200)[0]

    # Q2 grows from 0 to infinity as w moves from 0 towards w* (either sign of a);
    # approach w* geometrically so quad never sees the pole
    gap = 0.5
    while Q2(w_star * (1.0 - gap)) <= tau:
        gap *= 0.5
        if gap < 1e-15:
            return w_star
    lo, hi = sorted((0.0, w_star * (1.0 - gap)))
    return float(bisect(lambda w: Q2(w) - tau, lo, hi, xtol=xtol))
