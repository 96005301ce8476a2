"""Parameter sets shared by the tests."""

import math

from roughmv.kernels import KernelSpec
from roughmv.params import ModelParams


def fig1a(kernel=None, **kw):
    base = dict(V0=0.04, kappa=0.1, phi=0.3, sigma=0.03, rho=-0.7, theta=5.0, rate=0.03, T=1.0)
    base.update(kw)
    return ModelParams(kernel=kernel or KernelSpec.constant(), **base)


def fig1b(kernel=None, **kw):
    base = dict(V0=0.5, kappa=2.25, phi=0.04, sigma=0.04, rho=-0.56, theta=0.15, rate=0.01, T=1.35)
    base.update(kw)
    return ModelParams(kernel=kernel or KernelSpec.constant(), **base)


def fig2(sigma, kernel=None, **kw):
    """Strategy recipe with target ``x0 exp((r + 0.1) T)``."""
    base = dict(V0=0.5, kappa=2.25, phi=0.04, sigma=sigma, rho=-0.56, theta=0.15, rate=0.01, T=1.35, x0=1.0)
    base.update(kw)
    base.setdefault("c", base["x0"] * math.exp((0.01 + 0.1) * base["T"]))
    return ModelParams(kernel=kernel or KernelSpec.constant(), **base)


def fig4(kernel=None, **kw):
    base = dict(V0=0.04, kappa=0.1, phi=0.3, sigma=0.03, rho=-0.7, theta=0.6, rate=0.03, T=1.0, x0=1.0)
    base.update(kw)
    base.setdefault("c", base["x0"] * math.exp((0.03 + 0.1) * base["T"]))
    return ModelParams(kernel=kernel or KernelSpec.constant(), **base)


# Calibrated-looking inputs for the simulation design; the market parameters
# are user inputs, not values tied to any published table.
FIG3_MARKET = dict(V0=0.02, kappa=0.3, phi=0.02, sigma=0.3, rho=-0.7, theta=0.4)


def fig3(kernel=None, **kw):
    base = dict(FIG3_MARKET, rate=0.01, T=1.0, x0=1.0, c=math.exp(0.11))
    base.update(kw)
    return ModelParams(kernel=kernel or KernelSpec.fractional(0.6), **base)
