"""Model parameters and deterministic short-rate curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .kernels import KernelSpec


@dataclass(frozen=True)
class RateCurve:
    """Piecewise-constant short rate.

    ``levels[i]`` applies on ``[knots[i], knots[i+1])``; the last level extends
    to infinity. ``knots[0]`` must be 0.
    """

    levels: tuple
    knots: tuple = (0.0,)

    def __post_init__(self):
        levels = tuple(float(v) for v in np.atleast_1d(self.levels))
        knots = tuple(float(v) for v in np.atleast_1d(self.knots))
        if len(levels) != len(knots) or not levels:
            raise DomainError("rate curve needs one level per knot")
        if knots[0] != 0.0 or any(b <= a for a, b in zip(knots, knots[1:])):
            raise DomainError("rate knots must start at 0 and increase strictly")
        if not all(v > 0 and math.isfinite(v) for v in levels):
            raise DomainError(f"rates must be positive, got {levels}")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, r: float) -> "RateCurve":
        return cls((r,), (0.0,))

    @property
    def is_constant(self) -> bool:
        return len(self.levels) == 1

    def __call__(self, t):
        idx = np.searchsorted(self.knots, np.asarray(t, dtype=float), side="right") - 1
        return np.asarray(self.levels)[np.clip(idx, 0, None)]

    def _cumulative(self, t):
        t = np.asarray(t, dtype=float)
        knots = np.asarray(self.knots)
        levels = np.asarray(self.levels)
        # exact integral from 0 to t of a step function
        base = np.concatenate([[0.0], np.cumsum(np.diff(knots) * levels[:-1])])
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, None)
        return base[idx] + levels[idx] * (t - knots[idx])

    def integral(self, a, b):
        """Exact ``int_a^b r(s) ds``."""
        return self._cumulative(b) - self._cumulative(a)

    def to_dict(self) -> dict:
        if self.is_constant:
            return {"r": self.levels[0]}
        return {"levels": list(self.levels), "knots": list(self.knots)}


def _as_rate(rate) -> RateCurve:
    if isinstance(rate, RateCurve):
        return rate
    return RateCurve.constant(float(rate))


@dataclass(frozen=True)
class ModelParams:
    """Volterra Heston market and investor parameters.

    ``c`` defaults to the risk-free target ``x0 exp(int_0^T r)``. ``theta = 0``
    is rejected unless ``allow_degenerate`` is set, which is meant only for
    limiting-case checks.
    """

    V0: float
    kappa: float
    phi: float
    sigma: float
    rho: float
    theta: float
    rate: RateCurve | float
    T: float
    x0: float = 1.0
    c: float | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec.constant)
    allow_degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rate", _as_rate(self.rate))
        for name in ("V0", "kappa", "phi", "sigma", "rho", "theta", "T", "x0"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.V0 < 0:
            raise DomainError(f"V0 must be nonnegative, got {self.V0}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if not self.phi > 0:
            raise DomainError(f"phi must be positive, got {self.phi}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.theta == 0.0 and not self.allow_degenerate:
            raise DomainError("theta must be nonzero")
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T}")
        if not self.x0 > 0:
            raise DomainError(f"x0 must be positive, got {self.x0}")
        if not isinstance(self.kernel, KernelSpec):
            raise DomainError("kernel must be a KernelSpec")
        floor = self.x0 * math.exp(self.rate_integral)
        if self.c is None:
            object.__setattr__(self, "c", floor)
        else:
            c = float(self.c)
            # tolerance admits the risk-free target itself after rounding
            if not c >= floor * (1.0 - 1e-12):
                raise DomainError(f"target c={c} is below the risk-free wealth {floor}")
            object.__setattr__(self, "c", c)

    @property
    def lam(self) -> float:
        return self.kappa + 2.0 * self.theta * self.rho * self.sigma

    @property
    def c2(self) -> float:
        return (1.0 - 2.0 * self.rho**2) * self.sigma**2 / 2.0

    @property
    def rate_integral(self) -> float:
        return float(self.rate.integral(0.0, self.T))

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "V0": self.V0,
            "kappa": self.kappa,
            "phi": self.phi,
            "sigma": self.sigma,
            "rho": self.rho,
            "theta": self.theta,
            "rate": self.rate.to_dict(),
            "T": self.T,
            "x0": self.x0,
            "c": self.c,
            "kernel": self.kernel.to_dict(),
        }
