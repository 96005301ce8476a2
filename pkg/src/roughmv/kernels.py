"""Convolution kernels, their resolvents, and product-integration quadrature.

Every kernel-like object in this module (catalog kernels, power densities,
closed-form or sampled resolvents) exposes the same three methods:

``__call__(t)``
    pointwise values for ``t > 0``;
``integral(a, b)``
    exact ``int_a^b K(u) du`` (vectorised);
``cell_moments(h, n)``
    arrays ``(m0, m1)`` with ``m0[k] = int_{kh}^{(k+1)h} K(u) du`` and
    ``m1[k] = int_{kh}^{(k+1)h} (u - kh) K(u) du`` for ``k = 0..n-1``.

The cell moments are all the product-integration rules need, so singular
kernels are never sampled at ``t = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable

import mpmath
import numpy as np
from scipy.special import gammaln, rgamma, roots_jacobi, roots_legendre

from .errors import DomainError, MittagLefflerError

_EPS = np.finfo(float).eps


# --------------------------------------------------------------------------- grid


@dataclass(frozen=True)
class UniformGrid:
    """Uniform time grid ``t_n = n T / N``, ``n = 0..N``."""

    T: float
    N: int = 500

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise DomainError(f"grid horizon must be positive, got T={self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"grid size must be a positive integer, got N={self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def index_of(self, t: float) -> int:
        """Grid index of ``t``; off-grid times are rejected, never interpolated."""
        x = t / self.h
        n = int(round(x))
        if abs(x - n) > 1e-9 * max(1.0, abs(x)) or not 0 <= n <= self.N:
            raise DomainError(f"t={t} is not a node of {self}")
        return n

    def refine(self, factor: int) -> "UniformGrid":
        return UniformGrid(self.T, self.N * int(factor))


# ------------------------------------------------------------ elementary moments


def _phi1(x):
    """(e^x - 1) / x, continuous at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2.0, np.expm1(safe) / safe)


def _phi2(x):
    """(e^x (x - 1) + 1) / x^2 = int_0^1 v e^{xv} dv, continuous at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    direct = (np.expm1(safe) * (safe - 1.0) + safe) / safe**2
    # sum_k x^k / (k! (k + 2))
    series = 0.5 + x / 3.0 + x**2 / 8.0 + x**3 / 30.0 + x**4 / 144.0 + x**5 / 840.0
    return np.where(small, series, direct)


class _Power:
    """``scale * t^(order-1) / Gamma(order)`` for any ``order > 0``."""

    def __init__(self, scale: float, order: float):
        if order <= 0:
            raise DomainError(f"power kernel order must be positive, got {order}")
        self.scale = float(scale)
        self.order = float(order)

    @property
    def singular_exponent(self) -> float:
        return min(self.order - 1.0, 0.0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.order < 1 and np.any(t <= 0):
            raise DomainError("power kernel is singular at t <= 0")
        return self.scale * np.power(t, self.order - 1.0) * rgamma(self.order)

    def integral(self, a, b):
        g = self.order
        return self.scale * (np.power(b, g) - np.power(a, g)) * rgamma(g + 1.0)

    def cell_moments(self, h: float, n: int):
        g = self.order
        k = np.arange(n + 1, dtype=float)
        p0 = np.power(k, g)
        p1 = np.power(k, g + 1.0)
        d0 = np.diff(p0)
        d1 = np.diff(p1)
        m0 = self.scale * h**g * d0 * rgamma(g + 1.0)
        # int (u - kh) u^{g-1} du / Gamma(g) over [kh, (k+1)h]
        m1 = self.scale * h ** (g + 1.0) * (g * d1 * rgamma(g + 2.0) - k[:-1] * d0 * rgamma(g + 1.0))
        return m0, m1


class _Exponential:
    """``scale * exp(-rate t)``; ``rate`` may be any real number."""

    singular_exponent = 0.0

    def __init__(self, scale: float, rate: float):
        self.scale = float(scale)
        self.rate = float(rate)

    def __call__(self, t):
        return self.scale * np.exp(-self.rate * np.asarray(t, dtype=float))

    def integral(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return self.scale * np.exp(-self.rate * a) * (b - a) * _phi1(-self.rate * (b - a))

    def cell_moments(self, h: float, n: int):
        start = self.scale * np.exp(-self.rate * h * np.arange(n, dtype=float))
        m0 = start * h * _phi1(-self.rate * h)
        m1 = start * h**2 * _phi2(-self.rate * h)
        return m0, m1


class _Callable:
    """Bounded user kernel given as a callable; moments by 8-point Gauss-Legendre per cell."""

    singular_exponent = 0.0

    def __init__(self, func: Callable[[np.ndarray], np.ndarray]):
        self.func = func
        x, w = roots_legendre(8)
        self._x = 0.5 * (x + 1.0)
        self._w = 0.5 * w

    def __call__(self, t):
        return np.asarray(self.func(np.asarray(t, dtype=float)), dtype=float)

    def integral(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        nodes = a[..., None] + (b - a)[..., None] * self._x
        return (b - a) * (self(nodes) @ self._w)

    def cell_moments(self, h: float, n: int):
        left = h * np.arange(n, dtype=float)
        nodes = left[:, None] + h * self._x
        vals = self(nodes)
        return h * (vals @ self._w), h**2 * (vals @ (self._w * self._x))


# ---------------------------------------------------------------- catalog kernel


class KernelKind(str, Enum):
    CONSTANT = "constant"
    FRACTIONAL = "fractional"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class KernelSpec:
    """One of the three catalog kernels.

    ``constant``     K(t) = c
    ``fractional``   K(t) = c t^(alpha-1) / Gamma(alpha),  1/2 < alpha <= 1
    ``exponential``  K(t) = c exp(-beta t),                beta >= 0
    """

    kind: KernelKind
    c: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        try:
            kind = KernelKind(self.kind)
        except ValueError:
            raise DomainError(f"unknown kernel kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        if not self.c > 0:
            raise DomainError(f"kernel scale c must be positive, got {self.c}")
        if kind is KernelKind.FRACTIONAL and not 0.5 < self.alpha <= 1.0:
            raise DomainError(f"fractional kernel needs 1/2 < alpha <= 1, got {self.alpha}")
        if kind is KernelKind.EXPONENTIAL and not self.beta >= 0:
            raise DomainError(f"exponential kernel needs beta >= 0, got {self.beta}")

    @classmethod
    def constant(cls, c: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.CONSTANT, c=c)

    @classmethod
    def fractional(cls, alpha: float, c: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.FRACTIONAL, c=c, alpha=alpha)

    @classmethod
    def exponential(cls, beta: float, c: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.EXPONENTIAL, c=c, beta=beta)

    @property
    def is_singular(self) -> bool:
        return self.kind is KernelKind.FRACTIONAL and self.alpha < 1.0

    def _impl(self, scale: float = 1.0):
        c = self.c * scale
        if self.kind is KernelKind.FRACTIONAL:
            return _Power(c, self.alpha)
        rate = self.beta if self.kind is KernelKind.EXPONENTIAL else 0.0
        return _Exponential(c, rate)

    @property
    def singular_exponent(self) -> float:
        return self._impl().singular_exponent

    def __call__(self, t):
        return self._impl()(t)

    def integral(self, a, b):
        return self._impl().integral(a, b)

    def cell_moments(self, h: float, n: int):
        return self._impl().cell_moments(h, n)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "c": self.c}
        if self.kind is KernelKind.FRACTIONAL:
            out["alpha"] = self.alpha
        if self.kind is KernelKind.EXPONENTIAL:
            out["beta"] = self.beta
        return out


@dataclass(frozen=True)
class TrustedKernel:
    """A bounded user-supplied kernel the caller vouches is completely monotone.

    Complete monotonicity cannot be checked numerically, so a non-catalog
    kernel is only accepted when explicitly flagged ``trusted=True``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    trusted: bool = False
    name: str = "user"
    _impl_obj: _Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.trusted:
            raise DomainError("non-catalog kernels must be flagged trusted=True")
        object.__setattr__(self, "_impl_obj", _Callable(self.func))

    singular_exponent = 0.0
    is_singular = False

    def __call__(self, t):
        return self._impl_obj(t)

    def integral(self, a, b):
        return self._impl_obj.integral(a, b)

    def cell_moments(self, h: float, n: int):
        return self._impl_obj.cell_moments(h, n)


def kernel_eval(spec: KernelSpec, t):
    """Evaluate the kernel; the fractional kernel rejects ``t <= 0``."""
    return spec(t)


# --------------------------------------------------------------- Mittag-Leffler

# Beyond |z|^(1/alpha) >= 40 on the negative axis the optimally truncated
# asymptotic series is accurate to ~exp(-40).
_ASYMPTOTIC_SWITCH = 40.0
_SERIES_REL_TARGET = 1e-13


def mittag_leffler(alpha: float, beta: float, z, *, max_terms: int = 400):
    """Two-parameter Mittag-Leffler function ``sum_n z^n / Gamma(alpha n + beta)`` for real ``z``.

    Double-precision power series where it does not suffer cancellation,
    the same series in extended precision (mpmath) where it would, and the
    algebraic asymptotic expansion far out on the negative axis.
    """
    if not (alpha > 0 and beta > 0):
        raise DomainError(f"Mittag-Leffler needs alpha > 0 and beta > 0, got {alpha}, {beta}")
    z_arr = np.asarray(z, dtype=float)
    if alpha == 1.0 and beta in (1.0, 2.0):
        out = np.exp(z_arr) if beta == 1.0 else _phi1(z_arr)
        return float(out) if z_arr.ndim == 0 else out
    flat = z_arr.ravel()
    out = np.empty_like(flat)
    with np.errstate(divide="ignore"):
        far = (flat < 0) & (np.abs(flat) ** (1.0 / alpha) >= _ASYMPTOTIC_SWITCH)
    if far.any():
        out[far] = _ml_asymptotic(alpha, beta, flat[far], max_terms)
    near = ~far
    if near.any():
        vals, ok = _ml_series(alpha, beta, flat[near], max_terms)
        if not ok.all():
            idx = np.flatnonzero(near)[~ok]
            vals[~ok] = [_ml_series_mp(alpha, beta, float(flat[i]), 4 * max_terms) for i in idx]
        out[near] = vals
    if z_arr.ndim == 0:
        return float(out[0])
    return out.reshape(z_arr.shape)


def _ml_series(alpha, beta, z, max_terms):
    """Vectorised double series. Returns values and a mask of points judged accurate."""
    total = np.zeros_like(z)
    abs_total = np.zeros_like(z)
    active = np.ones(z.shape, dtype=bool)
    logabs = np.log(np.abs(np.where(z == 0, 1.0, z)))
    sign = np.sign(z)
    for n in range(max_terms):
        coef = rgamma(alpha * n + beta)
        if n == 0:
            term = np.full_like(z, coef)
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                term = np.power(z, n) * coef
            bad = ~np.isfinite(term)
            if bad.any():
                lt = n * logabs[bad] - gammaln(alpha * n + beta)
                term[bad] = np.where(lt < 700, sign[bad] ** n * np.exp(np.minimum(lt, 700)), np.inf)
            term = np.where(z == 0, 0.0, term)
        term = np.where(active, term, 0.0)
        total += term
        abs_total += np.abs(term)
        if n > 0:
            active &= ~(np.abs(term) <= 1e-17 * np.abs(total))
        if not active.any():
            break
    converged = ~active & np.isfinite(total)
    accurate = 2.0 * _EPS * abs_total <= _SERIES_REL_TARGET * np.abs(total)
    ok = converged & accurate
    # positive arguments never cancel; failure there is plain non-convergence
    if np.any(~converged & (z >= 0)):
        zbad = z[~converged & (z >= 0)]
        raise MittagLefflerError(
            f"series for E_{{{alpha},{beta}}} did not converge in {max_terms} terms "
            f"at z={zbad.max():.6g}"
        )
    return total, ok


@lru_cache(maxsize=64)
def _mp_coefficients(alpha: float, beta: float, dps: int, n_terms: int):
    with mpmath.workdps(dps):
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        return tuple(mpmath.rgamma(a * n + b) for n in range(n_terms))


def _ml_series_mp(alpha, beta, z, max_terms):
    # cancellation loses roughly log10(sum |terms|) digits; sum |terms| <= E(|z|)
    lost = abs(z) ** (1.0 / alpha) / math.log(10.0)
    dps = int(25 + lost + math.log10(1.0 + z * z))
    for _ in range(4):
        n_terms = max_terms
        coeffs = _mp_coefficients(alpha, beta, dps, n_terms)
        with mpmath.workdps(dps):
            zm = mpmath.mpf(z)
            power = mpmath.mpf(1)
            total = mpmath.mpf(0)
            abs_total = mpmath.mpf(0)
            done = False
            for n, c in enumerate(coeffs):
                term = power * c
                total += term
                abs_total += abs(term)
                if n > 0 and abs(term) <= mpmath.mpf(10) ** (-20) * abs(total):
                    done = True
                    break
                power *= zm
            if not done:
                raise MittagLefflerError(
                    f"extended-precision series for E_{{{alpha},{beta}}}({z}) "
                    f"did not converge in {n_terms} terms"
                )
            if abs_total * mpmath.mpf(10) ** (-dps + 2) <= mpmath.mpf(10) ** (-17) * abs(total):
                return float(total)
        dps *= 2
    raise MittagLefflerError(f"E_{{{alpha},{beta}}}({z}) lost all precision to cancellation")


def _ml_asymptotic(alpha, beta, z, max_terms):
    # |1/Gamma(beta - alpha k)| oscillates, so truncation is driven by the
    # envelope Gamma(alpha k + 1 - beta) / |z|^k, smallest near k = |z|^(1/alpha) / alpha
    logz = np.log(np.abs(z))
    k_opt = np.floor(np.abs(z) ** (1.0 / alpha) / alpha)
    total = np.zeros_like(z)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, max_terms + 1):
        active &= k <= k_opt
        if not active.any():
            break
        coef = rgamma(beta - alpha * k)
        if coef != 0.0:
            total += np.where(active, -np.power(z, -float(k)) * coef, 0.0)
        envelope = np.exp(gammaln(alpha * k + 1.0 - beta) - k * logz)
        active &= ~(envelope <= 1e-18 * np.abs(total))
    return total


# ----------------------------------------------------------- product integration


def product_weights(kern, h: float, n: int):
    """Product-integration weights for ``int_0^{t_m} K(t_m - s) f(s) ds``.

    Returns ``(A, B, R)``. With ``f`` linear on each cell the trapezoidal rule
    reads ``sum_k A[k] f_{m-k} + B[k] f_{m-k-1}``; with ``f`` piecewise
    constant from the left the rectangle rule reads ``sum_k R[k] f_{m-k-1}``.
    """
    m0, m1 = kern.cell_moments(h, n)
    B = m1 / h
    A = m0 - B
    return A, B, m0


def _check_grid(f, grid: UniformGrid):
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size != grid.N + 1:
        raise DomainError(f"sampled function has {f.size} values, grid has {grid.N + 1} nodes")
    return f


def convolve(kern, f, grid: UniformGrid) -> np.ndarray:
    """``(K * f)(t_n)`` for every grid node, ``f`` sampled on ``grid``.

    ``kern`` may be a :class:`KernelSpec`, a :class:`ResolventCurve` on the
    same grid, or any object with ``cell_moments``. Cost O(N^2) via
    ``np.convolve``.
    """
    f = _check_grid(f, grid)
    if isinstance(kern, ResolventCurve) and kern.grid != grid:
        raise DomainError("resolvent curve and sampled function live on different grids")
    A, B, _ = product_weights(kern, grid.h, grid.N)
    out = np.empty(grid.N + 1)
    out[0] = 0.0
    out[1:] = np.convolve(A, f[1:])[: grid.N] + np.convolve(B, f)[: grid.N]
    return out


def fractional_integral(alpha: float, f, grid: UniformGrid, t: float) -> float:
    """Riemann-Liouville integral ``I^alpha f(t) = int_0^t (t-s)^(alpha-1)/Gamma(alpha) f(s) ds``."""
    if not 0 < alpha <= 1:
        raise DomainError(f"fractional order must lie in (0, 1], got {alpha}")
    f = _check_grid(f, grid)
    n = grid.index_of(t)
    if n == 0:
        return 0.0
    A, B, _ = product_weights(_Power(1.0, alpha), grid.h, n)
    return float(A @ f[n:0:-1] + B @ f[n - 1 :: -1])


# ------------------------------------------------------------------- resolvents


class _MLResolvent:
    """``s t^(a-1) E_{a,a}(-s t^a)``: second-kind resolvent of ``s t^(a-1)/Gamma(a)``."""

    def __init__(self, scale: float, alpha: float):
        self.scale = float(scale)
        self.alpha = float(alpha)

    @property
    def singular_exponent(self) -> float:
        return self.alpha - 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("fractional resolvent is singular at t <= 0")
        a = self.alpha
        return self.scale * np.power(t, a - 1.0) * mittag_leffler(a, a, -self.scale * np.power(t, a))

    def _cumulative(self, x):
        # F0(x) = int_0^x R = 1 - E_{a,1}(z);  F1(x) = int_0^x u R du = x (E_{a,2}(z) - E_{a,1}(z))
        x = np.asarray(x, dtype=float)
        z = -self.scale * np.power(x, self.alpha)
        e1 = mittag_leffler(self.alpha, 1.0, z)
        e2 = mittag_leffler(self.alpha, 2.0, z)
        return 1.0 - e1, x * (e2 - e1)

    def integral(self, a, b):
        return self._cumulative(b)[0] - self._cumulative(a)[0]

    @lru_cache(maxsize=8)
    def cell_moments(self, h: float, n: int):
        x = h * np.arange(n + 1, dtype=float)
        F0, F1 = self._cumulative(x)
        m0 = np.diff(F0)
        m1 = np.diff(F1) - x[:-1] * m0
        m0.flags.writeable = False
        m1.flags.writeable = False
        return m0, m1


class _Sampled:
    """Piecewise-linear interpolant of values on a uniform grid."""

    singular_exponent = 0.0

    def __init__(self, grid: UniformGrid, values: np.ndarray):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)

    def __call__(self, t):
        return np.interp(t, self.grid.t, self.values)

    def integral(self, a, b):
        cum = np.concatenate([[0.0], np.cumsum(0.5 * self.grid.h * (self.values[1:] + self.values[:-1]))])

        def F(x):
            x = np.asarray(x, dtype=float)
            k = np.clip(np.floor(x / self.grid.h).astype(int), 0, self.grid.N - 1)
            d = x - k * self.grid.h
            r0 = self.values[k]
            slope = (self.values[k + 1] - r0) / self.grid.h
            return cum[k] + r0 * d + 0.5 * slope * d * d

        return F(b) - F(a)

    def cell_moments(self, h: float, n: int):
        if abs(h - self.grid.h) > 1e-12 * h or n > self.grid.N:
            raise DomainError("sampled curve does not cover the requested cells")
        v0 = self.values[:n]
        v1 = self.values[1 : n + 1]
        return 0.5 * h * (v0 + v1), h * h * (v0 + 2.0 * v1) / 6.0


class ResolventForm(str, Enum):
    CLOSED = "closed"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class ResolventCurve:
    """Second-kind resolvent ``R_lam`` of ``lam K`` sampled on a grid.

    ``values[0]`` is ``inf`` for singular kernels. The moment interface is
    exact for closed forms and piecewise-linear for numeric ones.
    """

    grid: UniformGrid
    values: np.ndarray
    lam: float
    form: ResolventForm
    impl: object = field(repr=False, compare=False)

    def __call__(self, t):
        return self.impl(t)

    def integral(self, a, b):
        return self.impl.integral(a, b)

    def cell_moments(self, h: float, n: int):
        return self.impl.cell_moments(h, n)

    @property
    def singular_exponent(self) -> float:
        return self.impl.singular_exponent

    @property
    def is_zero(self) -> bool:
        return self.lam == 0.0


class _Zero:
    singular_exponent = 0.0

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def integral(self, a, b):
        return np.zeros(np.broadcast(np.asarray(a), np.asarray(b)).shape)

    def cell_moments(self, h, n):
        return np.zeros(n), np.zeros(n)


def _closed_form_resolvent(spec: KernelSpec, lam: float):
    s = lam * spec.c
    if spec.kind is KernelKind.CONSTANT:
        return _Exponential(s, s)
    if spec.kind is KernelKind.EXPONENTIAL:
        return _Exponential(s, spec.beta + s)
    if spec.alpha == 1.0:
        return _Exponential(s, s)
    return _MLResolvent(s, spec.alpha)


def resolvent_second_kind(kern, lam: float, grid: UniformGrid, *, numeric: bool = False) -> ResolventCurve:
    """Resolvent ``R`` of ``lam K``: ``lam K * R = lam K - R``.

    Closed forms for the catalog kernels; otherwise (or with ``numeric=True``
    on a bounded kernel) the equation is marched with the product-trapezoidal
    rule. ``lam = 0`` returns the zero curve.
    """
    lam = float(lam)
    if not math.isfinite(lam):
        raise DomainError(f"lambda must be finite, got {lam}")
    t = grid.t
    if lam == 0.0:
        return ResolventCurve(grid, np.zeros_like(t), 0.0, ResolventForm.CLOSED, _Zero())
    if isinstance(kern, KernelSpec) and not numeric:
        return _closed_curve(kern, lam, grid)
    if kern.singular_exponent < 0:
        raise DomainError("numeric resolvent marching needs a kernel bounded at 0")
    values = _march_resolvent(kern, lam, grid)
    return ResolventCurve(grid, values, lam, ResolventForm.NUMERIC, _Sampled(grid, values))


@lru_cache(maxsize=32)
def _closed_curve(spec: KernelSpec, lam: float, grid: UniformGrid) -> ResolventCurve:
    impl = _closed_form_resolvent(spec, lam)
    t = grid.t
    values = np.empty_like(t)
    values[1:] = impl(t[1:])
    values[0] = np.inf if impl.singular_exponent < 0 else float(impl(0.0))
    values.flags.writeable = False
    return ResolventCurve(grid, values, lam, ResolventForm.CLOSED, impl)


def _march_resolvent(kern, lam, grid):
    A, B, _ = product_weights(kern, grid.h, grid.N)
    K = np.asarray(kern(grid.t), dtype=float)
    R = np.empty(grid.N + 1)
    R[0] = lam * K[0]
    for n in range(1, grid.N + 1):
        hist = A[1:n] @ R[n - 1 : 0 : -1] + B[:n] @ R[n - 1 :: -1]
        R[n] = (lam * K[n] - lam * hist) / (1.0 + lam * A[0])
    return R


@dataclass(frozen=True)
class FirstKindResolvent:
    """Measure ``L(dt) = atom * delta_0(dt) + density(t) dt`` with ``K * L = 1``."""

    atom: float
    density: object | None

    def apply(self, f, grid: UniformGrid, t: float | None = None) -> float:
        """``int_[0,t] f(t - s) L(ds)`` for ``f`` sampled on ``grid`` (default ``t = T``)."""
        f = _check_grid(f, grid)
        n = grid.N if t is None else grid.index_of(t)
        out = self.atom * f[n]
        if self.density is not None and n > 0:
            A, B, _ = product_weights(self.density, grid.h, n)
            out += A @ f[n:0:-1] + B @ f[n - 1 :: -1]
        return float(out)


def resolvent_first_kind(spec: KernelSpec) -> FirstKindResolvent:
    """First-kind resolvent of a catalog kernel."""
    inv = 1.0 / spec.c
    if spec.kind is KernelKind.CONSTANT or (spec.kind is KernelKind.FRACTIONAL and spec.alpha == 1.0):
        return FirstKindResolvent(inv, None)
    if spec.kind is KernelKind.EXPONENTIAL:
        if spec.beta == 0.0:
            return FirstKindResolvent(inv, None)
        return FirstKindResolvent(inv, _Exponential(spec.beta * inv, 0.0))
    return FirstKindResolvent(0.0, _Power(inv, 1.0 - spec.alpha))


# --------------------------------------------------------------- identity checks


def _half_convolution(weighted, expo: float, other, t: np.ndarray, n: int) -> np.ndarray:
    """``int_0^{t/2} weighted(u) other(t - u) du`` for each ``t``, where ``weighted(u) ~ u^expo`` at 0."""
    t = np.asarray(t, dtype=float)[:, None]
    if expo < 0:
        x, w = roots_jacobi(n, 0.0, expo)
        # nodes collapse onto x = -1 as expo -> -1; keep them strictly positive
        u = np.maximum(0.25 * t * (1.0 + x), np.sqrt(np.finfo(float).tiny))
        smooth = weighted(u) / u**expo
        return (0.25 * t[:, 0]) ** (1.0 + expo) * np.sum(w * smooth * other(t - u), axis=1)
    x, w = roots_legendre(n)
    u = 0.25 * t * (1.0 + x)
    return 0.25 * t[:, 0] * np.sum(w * weighted(u) * other(t - u), axis=1)


def _split_convolution(f, g, t: np.ndarray, n: int) -> np.ndarray:
    """``(f * g)(t)`` split at ``t/2`` so each half has one endpoint singularity at most."""
    return _half_convolution(f, f.singular_exponent, g, t, n) + _half_convolution(g, g.singular_exponent, f, t, n)


def _signed_identity_residual(spec: KernelSpec, lam: float, grid: UniformGrid) -> np.ndarray:
    R = resolvent_second_kind(spec, lam, grid)
    t = grid.t[1:]
    lamK = spec._impl(lam)
    lhs_K = lamK(t)
    if not spec.is_singular:
        conv = convolve(lamK, np.nan_to_num(R.values, posinf=0.0), grid)[1:]
        return conv - lhs_K + R.values[1:]
    # the leading singular terms of R are convolved exactly; the C^2 remainder uses the product rule
    a = spec.alpha
    s = lam * spec.c
    J = math.ceil(3.0 / a) - 1
    head = np.zeros_like(grid.t)
    exact = np.zeros_like(t)
    for j in range(J):
        coef = s * (-s) ** j
        head[1:] += coef * t ** (a * (j + 1) - 1.0) * rgamma(a * (j + 1))
        exact += lam * spec.c * coef * t ** (a * (j + 2) - 1.0) * rgamma(a * (j + 2))
    rem = np.zeros_like(grid.t)
    rem[1:] = R.values[1:] - head[1:]
    conv = exact + convolve(lamK, rem, grid)[1:]
    return conv - lhs_K + R.values[1:]


def resolvent_identity_residual(spec: KernelSpec, lam: float, grid: UniformGrid, *, extrapolate: bool = True) -> float:
    """``max_n |lam K * R - lam K + R|`` over grid nodes ``t_n > 0``.

    The convolution uses the product rule, whose O(h^2) interpolation error
    is removed by Richardson extrapolation against the grid refined twice
    unless ``extrapolate`` is false.
    """
    if lam == 0.0:
        return 0.0
    coarse = _signed_identity_residual(spec, lam, grid)
    if not extrapolate:
        return float(np.max(np.abs(coarse)))
    fine = _signed_identity_residual(spec, lam, grid.refine(2))[1::2]
    return float(np.max(np.abs((4.0 * fine - coarse) / 3.0)))


def first_kind_identity_residual(spec: KernelSpec, grid: UniformGrid, *, nodes: int = 40) -> float:
    """``max_n |(K * L)(t_n) - 1|`` with Gauss-Jacobi quadrature split at ``t/2``."""
    L = resolvent_first_kind(spec)
    K = spec._impl()
    t = grid.t[1:]
    val = L.atom * np.asarray(K(t), dtype=float)
    if L.density is not None:
        val = val + _split_convolution(L.density, K, t, nodes)
    return float(np.max(np.abs(val - 1.0)))
