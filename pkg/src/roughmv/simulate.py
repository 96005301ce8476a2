"""Monte Carlo engine for variance, wealth, strategy and ``M`` paths.

Every path draws from its own generator spawned from ``SeedSequence(seed)``,
so results depend only on ``(seed, path index)`` and never on chunking or
thread count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from .errors import DomainError
from .kernels import KernelKind, UniformGrid, resolvent_second_kind
from .params import ModelParams
from .portfolio import ForwardVarianceCurve, MVSolution, xi0


class Scheme(str, Enum):
    VOLTERRA_EULER = "volterra-euler"
    LIFTED = "lifted"


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``lifted_spacing`` is the geometric ratio of the partition of the
    Laplace measure and ``lifted_x1`` its first point; by default
    ``1 + 10 n^-0.9`` and ``spacing^(-n/2)``. ``lifted_nodes`` and
    ``lifted_weights`` bypass the construction entirely.
    """

    n_paths: int
    n_steps: int = 250
    seed: int = 0
    scheme: Scheme = Scheme.VOLTERRA_EULER
    lifted_factors: int = 20
    lifted_spacing: float | None = None
    lifted_x1: float | None = None
    lifted_nodes: tuple | None = None
    lifted_weights: tuple | None = None
    lifted_tolerance: float = 0.1
    S0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        for name in ("n_paths", "n_steps", "lifted_factors"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        if int(self.seed) != self.seed or self.seed < 0:
            raise DomainError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.lifted_spacing is not None and not self.lifted_spacing > 1:
            raise DomainError("lifted_spacing must exceed 1")
        if (self.lifted_nodes is None) != (self.lifted_weights is None):
            raise DomainError("lifted nodes and weights must be given together")
        if self.lifted_nodes is not None:
            nodes = tuple(float(x) for x in self.lifted_nodes)
            weights = tuple(float(x) for x in self.lifted_weights)
            if len(nodes) != len(weights) or not nodes:
                raise DomainError("lifted nodes and weights must have equal nonzero length")
            if min(nodes) < 0 or min(weights) < 0:
                raise DomainError("lifted nodes and weights must be nonnegative")
            object.__setattr__(self, "lifted_nodes", nodes)
            object.__setattr__(self, "lifted_weights", weights)


@dataclass(frozen=True)
class Increments:
    dW1: np.ndarray
    dW2: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.dW1.shape[0]


def brownian_increments(cfg: SimConfig, T: float) -> Increments:
    """Independent ``N(0, h)`` increments for ``W1`` and ``W2``, one generator per path."""
    h = T / cfg.n_steps
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_paths)
    dW = np.empty((cfg.n_paths, 2, cfg.n_steps))
    sd = math.sqrt(h)
    for i, child in enumerate(children):
        dW[i] = np.random.default_rng(child).standard_normal((2, cfg.n_steps)) * sd
    return Increments(dW[:, 0, :], dW[:, 1, :])


def _dB(params: ModelParams, inc: Increments) -> np.ndarray:
    return params.rho * inc.dW1 + math.sqrt(1.0 - params.rho**2) * inc.dW2


@dataclass(frozen=True)
class VariancePaths:
    t: np.ndarray
    V: np.ndarray
    increments: Increments
    clipped_fraction: float
    kernel_l2_error: float | None = None


def _drive(params: ModelParams, Vp: np.ndarray, dB: np.ndarray, h: float) -> np.ndarray:
    return params.kappa * (params.phi - Vp) * h + params.sigma * np.sqrt(Vp) * dB


def simulate_variance_volterra(params: ModelParams, cfg: SimConfig, increments: Increments | None = None) -> VariancePaths:
    """Left-point Euler for ``V = V0 + K * (kappa (phi - V+)) + K * (sigma sqrt(V+) dB)``.

    Each past increment is weighted by the average of ``K`` over the cell it
    is shifted onto, so ``K = 1`` gives full-truncation Heston Euler exactly.
    Cost O(paths * steps^2).
    """
    grid = UniformGrid(params.T, cfg.n_steps)
    h, N = grid.h, grid.N
    inc = increments if increments is not None else brownian_increments(cfg, params.T)
    dB = _dB(params, inc)
    m0, _ = params.kernel.cell_moments(h, N)
    kbar = m0 / h
    P = inc.n_paths
    V = np.empty((P, N + 1))
    D = np.empty((P, N))
    V[:, 0] = params.V0
    clipped = 0
    for n in range(N):
        Vp = np.maximum(V[:, n], 0.0)
        clipped += int(np.count_nonzero(V[:, n] < 0))
        D[:, n] = _drive(params, Vp, dB[:, n], h)
        V[:, n + 1] = params.V0 + D[:, : n + 1] @ kbar[n::-1]
    clipped += int(np.count_nonzero(V[:, N] < 0))
    return VariancePaths(grid.t, V, inc, clipped / V.size)


def lifted_nodes_weights(alpha: float, n: int, spacing: float | None = None, x1: float | None = None, scale: float = 1.0):
    """Sum-of-exponentials approximation ``sum_i c_i exp(-x_i t)`` of ``scale t^(alpha-1)/Gamma(alpha)``.

    Cells ``[eta_{i-1}, eta_i]`` of a geometric partition of the Laplace
    measure ``x^-alpha dx / (Gamma(alpha) Gamma(1-alpha))``; ``c_i`` is the
    cell mass and ``x_i`` the cell mean.
    """
    if alpha >= 1.0:
        return np.array([0.0]), np.array([scale])
    if spacing is None:
        spacing = 1.0 + 10.0 * n**-0.9
    if x1 is None:
        x1 = spacing ** (-n / 2.0)
    eta = x1 * spacing ** np.arange(n + 1, dtype=float)
    norm = scale / (gamma(alpha) * gamma(1.0 - alpha))
    a, b = eta[:-1], eta[1:]
    c = norm * (b ** (1.0 - alpha) - a ** (1.0 - alpha)) / (1.0 - alpha)
    first = norm * (b ** (2.0 - alpha) - a ** (2.0 - alpha)) / (2.0 - alpha)
    return first / c, c


def lifted_kernel_l2_error(params: ModelParams, nodes, weights, lo: float, hi: float) -> float:
    """Relative L^2 distance on ``[lo, hi]`` between the kernel and its exponential sum."""
    nodes = np.asarray(nodes)
    weights = np.asarray(weights)
    K = params.kernel

    def approx(t):
        return float(np.sum(weights * np.exp(-nodes * t)))

    gap = quad(lambda t: (float(K(t)) - approx(t)) ** 2, lo, hi, limit=400, points=[min(hi, 10 * lo)])[0]
    ref = quad(lambda t: float(K(t)) ** 2, lo, hi, limit=400, points=[min(hi, 10 * lo)])[0]
    return math.sqrt(gap / ref)


def simulate_variance_lifted(params: ModelParams, cfg: SimConfig, increments: Increments | None = None) -> VariancePaths:
    """Multi-factor Markovian approximation with one shared Brownian driver.

    ``U_i`` follows ``dU_i = -x_i U_i dt + kappa (phi - V+) dt + sigma sqrt(V+) dB``,
    updated implicitly in the mean-reversion term, and ``V = V0 + sum_i c_i U_i``.
    """
    grid = UniformGrid(params.T, cfg.n_steps)
    h, N = grid.h, grid.N
    k = params.kernel
    if cfg.lifted_nodes is not None:
        x, c = np.asarray(cfg.lifted_nodes), np.asarray(cfg.lifted_weights)
        err = None
    else:
        if k.kind is not KernelKind.FRACTIONAL:
            raise DomainError("the lifted construction needs the fractional kernel or explicit nodes")
        x, c = lifted_nodes_weights(k.alpha, cfg.lifted_factors, cfg.lifted_spacing, cfg.lifted_x1, k.c)
        err = lifted_kernel_l2_error(params, x, c, h, params.T) if k.alpha < 1 else 0.0
        if err > cfg.lifted_tolerance:
            warnings.warn(
                f"lifted kernel relative L2 error {err:.3g} on [h, T] exceeds {cfg.lifted_tolerance}",
                RuntimeWarning,
                stacklevel=2,
            )
    inc = increments if increments is not None else brownian_increments(cfg, params.T)
    dB = _dB(params, inc)
    P = inc.n_paths
    U = np.zeros((P, x.size))
    V = np.empty((P, N + 1))
    V[:, 0] = params.V0
    denom = 1.0 + x * h
    clipped = 0
    for n in range(N):
        Vp = np.maximum(V[:, n], 0.0)
        clipped += int(np.count_nonzero(V[:, n] < 0))
        D = _drive(params, Vp, dB[:, n], h)
        U = (U + D[:, None]) / denom
        V[:, n + 1] = params.V0 + U @ c
    clipped += int(np.count_nonzero(V[:, N] < 0))
    return VariancePaths(grid.t, V, inc, clipped / V.size, err)


def simulate_variance(params: ModelParams, cfg: SimConfig, increments: Increments | None = None) -> VariancePaths:
    if cfg.scheme is Scheme.LIFTED:
        return simulate_variance_lifted(params, cfg, increments)
    return simulate_variance_volterra(params, cfg, increments)


# ------------------------------------------------------------- forward variance


def _G(params: ModelParams, grid: UniformGrid) -> np.ndarray:
    """``R(kh) / lam`` for ``k >= 1`` (``K(kh)`` when ``lam = 0``); entry 0 is unused."""
    out = np.zeros(grid.N + 1)
    lam = params.lam
    if lam == 0.0:
        out[1:] = params.kernel(grid.t[1:])
    else:
        out[1:] = resolvent_second_kind(params.kernel, lam, grid).values[1:] / lam
    return out


def update_forward_variance(
    xi_prev: ForwardVarianceCurve, params: ModelParams, V_n: float, dB_n: float, G: np.ndarray | None = None
) -> ForwardVarianceCurve:
    """One left-point step ``xi_{t+h}(s) = xi_t(s) + (R(s - t)/lam) sigma sqrt(V_t) dB~_t``.

    ``dB~ = dB + 2 theta rho sqrt(V) h`` converts the physical increment to
    the auxiliary measure. Values are not clipped here.
    """
    grid = xi_prev.grid
    n = xi_prev.n
    if n >= grid.N:
        raise DomainError("forward variance curve is already anchored at T")
    if G is None:
        G = _G(params, grid)
    sv = math.sqrt(max(V_n, 0.0))
    z = params.sigma * sv * (dB_n + 2.0 * params.theta * params.rho * sv * grid.h)
    vals = xi_prev.values[1:] + G[1 : grid.N - n + 1] * z
    return ForwardVarianceCurve(grid, n + 1, vals)


# ----------------------------------------------------------------- portfolio paths


@dataclass(frozen=True)
class PathBundle:
    t: np.ndarray
    V: np.ndarray
    S: np.ndarray
    X: np.ndarray
    u: np.ndarray
    pi: np.ndarray
    M: np.ndarray | None
    dW1: np.ndarray
    dW2: np.ndarray
    clipped_V_fraction: float
    clipped_xi_count: int = 0
    kernel_l2_error: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]


def simulate_portfolio(
    params: ModelParams,
    mv: MVSolution,
    cfg: SimConfig,
    *,
    variance: VariancePaths | None = None,
    u_override: Callable | None = None,
    compute_M: bool = True,
) -> PathBundle:
    """Euler paths of stock and wealth under the optimal feedback ``u*``.

    The ``psi`` grid of ``mv`` must refine the simulation grid by an integer
    factor. Wealth is stepped in discounted form, so ``u = 0`` compounds
    ``x0`` at the exact risk-free rate. ``u_override(n, V, X)`` replaces the
    feedback when given. The bundle stores the truncated variance ``V+``;
    the raw scheme state stays in ``variance``.
    """
    if variance is None:
        variance = simulate_variance(params, cfg)
    N = cfg.n_steps
    if mv.grid.N % N:
        raise DomainError(f"psi grid ({mv.grid.N} steps) must refine the simulation grid ({N} steps)")
    stride = mv.grid.N // N
    grid = UniformGrid(params.T, N)
    h = grid.h
    t = grid.t
    A = mv.A[::stride]
    rate = params.rate
    step_growth = np.exp(rate.integral(t[:-1], t[1:]))
    disc_to_T = np.exp(-rate.integral(t, params.T))
    r_left = rate(t[:-1])

    V = variance.V
    Vp = np.maximum(V, 0.0)
    sv = np.sqrt(Vp)
    dW1 = variance.increments.dW1
    P = V.shape[0]
    X = np.empty((P, N + 1))
    S = np.empty((P, N + 1))
    u = np.empty((P, N + 1))
    pi = np.empty((P, N + 1))
    X[:, 0] = params.x0
    S[:, 0] = cfg.S0
    for n in range(N + 1):
        gap = mv.zeta_star * disc_to_T[n] - X[:, n]
        if u_override is None:
            pi[:, n] = A[n] * gap
            u[:, n] = sv[:, n] * pi[:, n]
        else:
            u[:, n] = u_override(n, V[:, n], X[:, n])
            with np.errstate(divide="ignore", invalid="ignore"):
                pi[:, n] = np.where(sv[:, n] > 0, u[:, n] / sv[:, n], 0.0)
        if n == N:
            break
        X[:, n + 1] = step_growth[n] * (X[:, n] + params.theta * sv[:, n] * u[:, n] * h + u[:, n] * dW1[:, n])
        S[:, n + 1] = S[:, n] * np.exp((r_left[n] + params.theta * Vp[:, n] - 0.5 * Vp[:, n]) * h + sv[:, n] * dW1[:, n])

    M = None
    clipped_xi = 0
    if compute_M:
        M, clipped_xi = _simulate_M(params, mv, grid, stride, variance)
    return PathBundle(
        t, Vp, S, X, u, pi, M, dW1, variance.increments.dW2, variance.clipped_fraction, clipped_xi,
        variance.kernel_l2_error,
    )


def _simulate_M(params: ModelParams, mv: MVSolution, grid: UniformGrid, stride: int, variance: VariancePaths):
    """Pathwise ``M_{t_n}`` from the marched forward-variance curves; ``M_T = 2`` exactly."""
    N, h = grid.N, grid.h
    psi = mv.psi.values[::stride]
    q_rev = params.c2 * psi[::-1] ** 2 - params.theta**2  # q(T - s_m)
    G = _G(params, grid)
    xi = np.tile(xi0(params, grid).values, (variance.V.shape[0], 1))
    dB = _dB(params, variance.increments)
    sv = np.sqrt(np.maximum(variance.V, 0.0))
    rate_tail = params.rate.integral(grid.t, params.T)
    M = np.empty_like(variance.V)
    clipped = 0
    for n in range(N + 1):
        if n > 0:
            z = params.sigma * sv[:, n - 1] * (dB[:, n - 1] + 2.0 * params.theta * params.rho * sv[:, n - 1] * h)
            xi[:, n:] += z[:, None] * G[1 : N - n + 2]
        if n == N:
            M[:, n] = 2.0
            break
        seg = xi[:, n:]
        neg = seg < 0
        clipped += int(np.count_nonzero(neg))
        f = np.where(neg, 0.0, seg) * q_rev[n:]
        integral = h * (f.sum(axis=1) - 0.5 * (f[:, 0] + f[:, -1]))
        M[:, n] = 2.0 * np.exp(2.0 * rate_tail[n] + integral)
    return M, clipped


# -------------------------------------------------------------------- statistics


@dataclass(frozen=True)
class Bands:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    n_resamples: int


def _resample_counts(n_paths: int, n_resamples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return rng.multinomial(n_paths, np.full(n_paths, 1.0 / n_paths), size=n_resamples).astype(float)


def bootstrap_bands(paths, n_resamples: int = 1000, level: float = 0.95, seed: int = 0) -> Bands:
    """Percentile bootstrap bands for the mean path (rows are paths)."""
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 1:
        paths = paths[:, None]
    P = paths.shape[0]
    if P < 2:
        raise DomainError("bootstrap needs at least two paths")
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    counts = _resample_counts(P, n_resamples, seed)
    means = counts @ paths / P
    tail = 50.0 * (1.0 - level)
    lo, hi = np.percentile(means, [tail, 100.0 - tail], axis=0)
    mean = paths.mean(axis=0)
    # percentile bands need not bracket the sample mean at tiny spreads
    return Bands(mean, np.minimum(lo, mean), np.maximum(hi, mean), level, n_resamples)


@dataclass(frozen=True)
class TerminalStats:
    mean: float
    mean_se: float
    var: float
    var_se: float
    sq_dev: float
    sq_dev_se: float


@dataclass(frozen=True)
class McSummary:
    t: np.ndarray
    X: Bands
    u: Bands
    pi: Bands
    terminal: TerminalStats


def terminal_statistics(X_T, zeta: float, n_resamples: int = 1000, seed: int = 0) -> TerminalStats:
    """Mean, variance and ``mean((X_T - zeta)^2)`` with bootstrap standard errors."""
    X_T = np.asarray(X_T, dtype=float)
    P = X_T.size
    counts = _resample_counts(P, n_resamples, seed) / P
    sq = (X_T - zeta) ** 2
    m_b = counts @ X_T
    v_b = counts @ X_T**2 - m_b**2
    s_b = counts @ sq
    return TerminalStats(
        float(X_T.mean()), float(m_b.std(ddof=1)),
        float(X_T.var()), float(v_b.std(ddof=1)),
        float(sq.mean()), float(s_b.std(ddof=1)),
    )


def summarize(bundle: PathBundle, mv: MVSolution, n_resamples: int = 1000, level: float = 0.95, seed: int = 0) -> McSummary:
    return McSummary(
        bundle.t,
        bootstrap_bands(bundle.X, n_resamples, level, seed),
        bootstrap_bands(bundle.u, n_resamples, level, seed),
        bootstrap_bands(bundle.pi, n_resamples, level, seed),
        terminal_statistics(bundle.X[:, -1], mv.zeta_star, n_resamples, seed),
    )


def discrete_p_variation(paths, p: float) -> np.ndarray:
    """``sum_n |V_{n+1} - V_n|^p`` along each path on its own grid."""
    paths = np.asarray(paths, dtype=float)
    return np.sum(np.abs(np.diff(paths, axis=-1)) ** p, axis=-1)
