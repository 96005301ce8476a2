"""Scalar Riccati-Volterra equations ``f = K * (c0 + c1 f + c2 f^2)``.

Solved by the fractional Adams predictor-corrector built on the
product-integration weights of :mod:`roughmv.kernels`, together with the
closed-form comparison bounds used to sanity-check the solutions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import rgamma

from .errors import AdmissibilityError, DomainError, ExplosionError, NumericError
from .kernels import KernelKind, KernelSpec, UniformGrid, convolve, product_weights
from .params import ModelParams

BLOWUP_THRESHOLD = 1e8


@dataclass(frozen=True)
class RiccatiRHS:
    """``F(f) = c0 + c1 f + c2 f^2``."""

    c0: float
    c1: float
    c2: float

    def __call__(self, f):
        return self.c0 + f * (self.c1 + self.c2 * f)

    @classmethod
    def for_psi(cls, params: ModelParams) -> "RiccatiRHS":
        return cls(-params.theta**2, -params.lam, params.c2)

    @classmethod
    def for_g(cls, a: float, params: ModelParams) -> "RiccatiRHS":
        return cls(float(a), -params.kappa, params.sigma**2 / 2.0)


class PsiCase(str, Enum):
    NEGATIVE_DEFINITE = "1-2rho^2>0"
    LINEAR = "1-2rho^2=0"
    BOUNDED = "1-2rho^2<0 with bounds"
    UNGUARANTEED = "1-2rho^2<0 without bounds"


@dataclass(frozen=True)
class RiccatiSolution:
    grid: UniformGrid
    values: np.ndarray
    rhs_values: np.ndarray
    kernel: KernelSpec
    converged: bool
    max_residual: float
    rhs: RiccatiRHS | None = None
    case: PsiCase | None = None

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    @property
    def reflected(self) -> np.ndarray:
        """``f(T - s)`` on the same grid in ``s``."""
        return self.values[::-1]

    def integral(self) -> float:
        """``int_0^T f`` by the trapezoidal rule."""
        return float(np.trapezoid(self.values, dx=self.grid.h))


def solve_riccati(
    rhs: RiccatiRHS,
    kernel: KernelSpec,
    grid: UniformGrid,
    *,
    corrector_sweeps: int = 1,
    tol: float = 1e-6,
    blowup: float = BLOWUP_THRESHOLD,
) -> RiccatiSolution:
    """Fractional Adams predictor-corrector for ``f = K * F(f)``, ``f(0) = 0``.

    Predictor uses product-rectangle weights, each corrector sweep the
    product-trapezoidal weights. ``converged`` records whether the final
    residual ``max |f - K * F(f)|`` is within ``tol``.

    Raises
    ------
    ExplosionError
        ``|f|`` exceeded ``blowup``; the error carries the step bracket.
    NumericError
        a NaN appeared.
    """
    if corrector_sweeps < 1:
        raise DomainError("at least one corrector sweep is required")
    N, h = grid.N, grid.h
    A, B, M0 = product_weights(kernel, h, N)
    f = np.zeros(N + 1)
    F = np.zeros(N + 1)
    F[0] = rhs(0.0)
    if rhs.c0 != 0.0:
        for n in range(N):
            pred = M0[: n + 1] @ F[n::-1]
            hist = A[1 : n + 1] @ F[n:0:-1] + B[: n + 1] @ F[n::-1]
            val = pred
            for _ in range(corrector_sweeps):
                val = A[0] * rhs(val) + hist
            if math.isnan(val):
                raise NumericError(f"NaN in Riccati solve at t={grid.t[n + 1]:.6g}")
            if not abs(val) <= blowup:
                t0, t1 = grid.t[n], grid.t[n + 1]
                raise ExplosionError(
                    f"Riccati solution exceeded {blowup:g} in ({t0:.6g}, {t1:.6g}]", t1, (t0, t1)
                )
            f[n + 1] = val
            F[n + 1] = rhs(val)
    residual = float(np.max(np.abs(f - convolve(kernel, F, grid))))
    return RiccatiSolution(grid, f, F, kernel, residual <= tol, residual, rhs)


def psi_case(params: ModelParams) -> PsiCase:
    q = 1.0 - 2.0 * params.rho**2
    if q > 0:
        return PsiCase.NEGATIVE_DEFINITE
    if q == 0:
        return PsiCase.LINEAR
    lam = params.lam
    if lam > 0 and lam**2 + 2.0 * q * params.theta**2 * params.sigma**2 > 0:
        return PsiCase.BOUNDED
    return PsiCase.UNGUARANTEED


def solve_psi(params: ModelParams, grid: UniformGrid, **kwargs) -> RiccatiSolution:
    """``psi = K * (c2 psi^2 - lam psi - theta^2)``; the applicable existence case is recorded."""
    case = psi_case(params)
    if case is PsiCase.UNGUARANTEED:
        warnings.warn(
            "no global existence guarantee for psi at these parameters; relying on the blow-up guard",
            RuntimeWarning,
            stacklevel=2,
        )
    sol = solve_riccati(RiccatiRHS.for_psi(params), params.kernel, grid, **kwargs)
    return RiccatiSolution(
        sol.grid, sol.values, sol.rhs_values, sol.kernel, sol.converged, sol.max_residual, sol.rhs, case
    )


def a0_fractional(params: ModelParams, t: float) -> float:
    """``(kappa + t^-alpha / Gamma(1 - alpha))^2 / (2 sigma^2)``; ``rgamma(0) = 0`` covers alpha = 1."""
    k = params.kernel
    if k.kind is not KernelKind.FRACTIONAL:
        raise DomainError("a0 is defined for the fractional kernel only")
    return (params.kappa + t ** (-k.alpha) * rgamma(1.0 - k.alpha)) ** 2 / (2.0 * params.sigma**2)


def solve_g(a: float, params: ModelParams, grid: UniformGrid, *, precheck: bool = False, **kwargs) -> RiccatiSolution:
    """``g = K * (a - kappa g + sigma^2 g^2 / 2)``.

    With ``precheck=True`` and a unit-scale fractional kernel with
    ``alpha < 1``, ``a >= a0(T)`` is rejected before solving.
    """
    k = params.kernel
    if precheck and k.kind is KernelKind.FRACTIONAL and k.c == 1.0 and k.alpha < 1.0:
        a0 = a0_fractional(params, params.T)
        if a >= a0:
            raise AdmissibilityError(f"a={a:.6g} is not below a0(T)={a0:.6g}")
    return solve_riccati(RiccatiRHS.for_g(a, params), k, grid, **kwargs)


# --------------------------------------------------------------- comparison bounds


def _root_pair(a: float, kappa: float, sigma: float):
    """Roots ``w- <= w+`` of ``a - kappa w + sigma^2 w^2 / 2`` when the discriminant is positive."""
    D = kappa**2 - 2.0 * a * sigma**2
    if not D > 0:
        return None
    sq = math.sqrt(D)
    w_plus = (kappa + sq) / sigma**2
    # cancellation-free form of (kappa - sqrt(D)) / sigma^2
    w_minus = 2.0 * a / (kappa + sq) if kappa + sq != 0 else 0.0
    return w_minus, w_plus, sq


def q2_inverse(a: float, kappa: float, sigma: float, tau) -> np.ndarray:
    """Inverse of ``Q2(w) = int_0^w du / (a - kappa u + sigma^2 u^2 / 2)`` at ``tau >= 0``.

    Closed form ``w- w+ (E - 1) / (w+ E - w-)`` with ``E = exp(sqrt(D) tau)``.
    """
    roots = _root_pair(a, kappa, sigma)
    if roots is None:
        raise DomainError("Q2 inverse needs kappa^2 - 2 a sigma^2 > 0")
    wm, wp, sq = roots
    tau = np.asarray(tau, dtype=float)
    if wm == 0.0:
        return np.zeros_like(tau)
    x = sq * tau
    em1 = np.expm1(x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = wm * wp * em1 / (wp * em1 + (wp - wm))
    return np.where(np.isfinite(em1), out, wm)


class BoundCase(str, Enum):
    G = "g"
    PSI = "psi case 3"
    NOT_APPLICABLE = "not applicable"


@dataclass(frozen=True)
class LemmaBounds:
    """Comparison bounds on a grid.

    ``r2`` and ``w_star`` bound ``g(a, .)`` from above; ``rbar2`` and
    ``wbar_star`` are the bounds for ``(1 - 2 rho^2) psi``, so that
    ``wbar_star / q < rbar2 / q <= psi < 0`` with ``q = 1 - 2 rho^2 < 0``.
    Entries for a case that does not apply are ``None``.
    """

    grid: UniformGrid
    w_star: float | None
    r2: np.ndarray | None
    wbar_star: float | None
    rbar2: np.ndarray | None
    applicable_case: tuple


def lemma_bounds(params: ModelParams, grid: UniformGrid, a: float | None = None) -> LemmaBounds:
    """Closed-form comparison bounds evaluated at ``int_0^t K``."""
    tau = np.asarray(params.kernel.integral(0.0, grid.t), dtype=float)
    cases = []
    w_star = r2 = wbar = rbar2 = None
    if a is not None:
        roots = _root_pair(a, params.kappa, params.sigma)
        if roots is not None:
            w_star = roots[0]
            r2 = q2_inverse(a, params.kappa, params.sigma, tau)
            cases.append(BoundCase.G)
    if psi_case(params) is PsiCase.BOUNDED:
        q = 1.0 - 2.0 * params.rho**2
        a_bar = -q * params.theta**2
        wbar = _root_pair(a_bar, params.lam, params.sigma)[0]
        rbar2 = q2_inverse(a_bar, params.lam, params.sigma, tau)
        cases.append(BoundCase.PSI)
    return LemmaBounds(grid, w_star, r2, wbar, rbar2, tuple(cases) or (BoundCase.NOT_APPLICABLE,))


# ------------------------------------------------------------- convergence study


@dataclass(frozen=True)
class ConvergenceReport:
    sizes: tuple
    errors: tuple
    orders: tuple
    order: float
    monotone: bool


def convergence_order(
    rhs: RiccatiRHS, kernel: KernelSpec, T: float, sizes=(50, 100, 200, 400), *, reference_factor: int = 8, **kwargs
) -> ConvergenceReport:
    """Empirical order from max nodal errors against a finer reference grid.

    The reference uses ``reference_factor * max(sizes)`` steps; every size
    must divide it. The reported ``order`` is the median of successive
    log2 error ratios.
    """
    sizes = tuple(int(n) for n in sizes)
    if len(sizes) < 3:
        raise DomainError("at least three refinement levels are required")
    n_ref = reference_factor * max(sizes)
    if any(n_ref % n for n in sizes):
        raise DomainError("every grid size must divide the reference size")
    ref = solve_riccati(rhs, kernel, UniformGrid(T, n_ref), **kwargs).values
    errors = []
    for n in sizes:
        sol = solve_riccati(rhs, kernel, UniformGrid(T, n), **kwargs).values
        errors.append(float(np.max(np.abs(sol - ref[:: n_ref // n]))))
    orders = []
    for (n0, e0), (n1, e1) in zip(zip(sizes, errors), zip(sizes[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            orders.append(math.log(e0 / e1) / math.log(n1 / n0))
    monotone = all(e1 <= 1.05 * e0 for e0, e1 in zip(errors, errors[1:]))
    if not monotone:
        warnings.warn("grid errors are not monotone under refinement", RuntimeWarning, stacklevel=2)
    order = float(np.median(orders)) if orders else float("inf")
    return ConvergenceReport(sizes, tuple(errors), tuple(orders), order, monotone)
