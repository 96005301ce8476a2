import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from helpers import fig1a, fig1b, fig2, fig4
from roughmv import oracle
from roughmv.errors import ConsistencyError, DomainError, ExplosionError
from roughmv.kernels import KernelSpec, UniformGrid
from roughmv.params import ModelParams, RateCurve
from roughmv.portfolio import (
    A_curve,
    ForwardVarianceCurve,
    M0,
    M_t,
    Verdict,
    admissibility_constant,
    check_assumption_V,
    dual_form_gap,
    efficient_frontier,
    exp_moment,
    identity_Uequivalent_check,
    optimal_pi,
    optimal_u,
    solve_mv,
    xi0,
)
from roughmv.volterra import solve_g, solve_psi

ALPHAS = (0.6, 0.7, 0.8, 0.9)


def _params_strategy(kernels):
    return st.builds(
        lambda V0, kappa, phi, sigma, rho, theta, r, T, kernel: ModelParams(
            V0=V0, kappa=kappa, phi=phi, sigma=sigma, rho=rho, theta=theta, rate=r, T=T, kernel=kernel
        ),
        V0=st.floats(0.0, 0.5),
        kappa=st.floats(0.1, 3.0),
        phi=st.floats(0.01, 0.5),
        sigma=st.floats(0.01, 0.6),
        rho=st.floats(-0.95, 0.95),
        theta=st.floats(-2.0, 2.0).filter(lambda x: abs(x) > 1e-3),
        r=st.floats(0.001, 0.08),
        T=st.floats(0.2, 2.0),
        kernel=kernels,
    )


ANY_KERNEL = st.one_of(
    st.just(KernelSpec.constant()),
    st.floats(0.55, 1.0).map(KernelSpec.fractional),
    st.floats(0.1, 3.0).map(lambda b: KernelSpec.exponential(1.0, b)),
)


def _psi_or_reject(p, N=200):
    try:
        return solve_psi(p, UniformGrid(p.T, N))
    except ExplosionError:
        assume(False)


# ------------------------------------------------------------------- parameters


def test_model_params_validation():
    for bad in (dict(V0=-0.1), dict(kappa=0.0), dict(phi=0.0), dict(sigma=0.0), dict(rho=1.2), dict(T=0.0), dict(x0=0.0)):
        with pytest.raises(DomainError):
            fig1a(**bad)
    with pytest.raises(DomainError):
        fig1a(theta=0.0)
    assert fig1a(theta=0.0, allow_degenerate=True).theta == 0.0


def test_target_below_risk_free_wealth_rejected():
    with pytest.raises(DomainError):
        fig1a(c=1.0)
    p = fig1a()
    assert p.c == pytest.approx(math.exp(0.03))


def test_rate_curve_validation_and_integral():
    with pytest.raises(DomainError):
        RateCurve((0.01, 0.02), (0.0,))
    with pytest.raises(DomainError):
        RateCurve((0.01, 0.02), (0.1, 0.5))
    with pytest.raises(DomainError):
        RateCurve((0.01, 0.02), (0.0, 0.0))
    with pytest.raises(DomainError):
        RateCurve((0.0,), (0.0,))
    r = RateCurve((0.01, 0.03), (0.0, 0.5))
    assert r.integral(0.0, 1.0) == pytest.approx(0.005 + 0.015, abs=1e-15)
    assert r.integral(0.25, 0.75) == pytest.approx(0.0025 + 0.0075, abs=1e-15)
    assert list(r([0.0, 0.49, 0.5, 7.0])) == [0.01, 0.01, 0.03, 0.03]


# --------------------------------------------------------------- forward variance


def test_xi0_starts_at_V0():
    for k in (KernelSpec.constant(), KernelSpec.fractional(0.6)):
        assert xi0(fig1a(k)).values[0] == pytest.approx(0.04, abs=1e-15)


def test_xi0_constant_kernel_closed_form():
    p = fig1a()
    curve = xi0(p, N=400)
    s, lam = curve.s, p.lam
    exact = np.exp(-lam * s) * p.V0 + p.kappa * p.phi / lam * (1.0 - np.exp(-lam * s))
    np.testing.assert_allclose(curve.values, exact, rtol=1e-12)


def test_xi0_flat_at_stationary_level():
    p = fig1b()
    p = p.replace(V0=p.kappa * p.phi / p.lam)
    np.testing.assert_allclose(xi0(p).values, p.V0, rtol=1e-12)


def test_forward_variance_shape_checked():
    with pytest.raises(DomainError):
        ForwardVarianceCurve(UniformGrid(1.0, 10), 3, np.ones(5))


@settings(max_examples=40)
@given(_params_strategy(ANY_KERNEL))
def test_forward_variance_tail_integral_positive(p):
    curve = xi0(p, N=100)
    h = curve.grid.h
    tails = [np.trapezoid(curve.values[n:], dx=h) for n in range(curve.grid.N)]
    assert min(tails) > 0


# -------------------------------------------------------------------------- M0


def test_M0_degenerate_theta():
    p = fig1a(theta=0.0, allow_degenerate=True)
    psi = solve_psi(p, UniformGrid(1.0, 100))
    assert M0(p, psi) == pytest.approx(2.0 * math.exp(0.06), rel=1e-15)


def test_M0_increasing_in_alpha_fig4():
    vals = [solve_mv(fig4(KernelSpec.fractional(a)), N=1000).M0 for a in (0.55, 0.6, 0.7, 0.8, 0.9, 1.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_M0_constant_kernel_matches_ode():
    p = fig1a()
    psi = solve_psi(p, UniformGrid(1.0, 2000))
    assert M0(p, psi) == pytest.approx(oracle.heston_M0(p), rel=1e-6)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_M0_dual_forms_agree(alpha):
    p = fig4(KernelSpec.fractional(alpha))
    psi = solve_psi(p, UniformGrid(1.0, 2000))
    assert dual_form_gap(p, psi) <= 1e-5


def test_M0_dual_form_disagreement_raises():
    p = fig4(KernelSpec.fractional(0.6))
    psi = solve_psi(p, UniformGrid(1.0, 200))
    from dataclasses import replace

    broken = replace(psi, rhs_values=psi.rhs_values + 1.0)
    with pytest.raises(ConsistencyError):
        M0(p, broken)
    assert math.isfinite(M0(p, broken, check=False))


@settings(max_examples=200)
@given(_params_strategy(ANY_KERNEL))
def test_M0_strictly_inside_bound(p):
    m0 = M0(p, _psi_or_reject(p), check=False)
    assert 0.0 < m0 < 2.0 * math.exp(2.0 * p.rate_integral)


# -------------------------------------------------------------------------- M_t


def test_M_t_terminal_value_is_two():
    p = fig4(KernelSpec.fractional(0.6))
    grid = UniformGrid(1.0, 100)
    psi = solve_psi(p, grid)
    assert M_t(p, psi, ForwardVarianceCurve(grid, grid.N, np.array([0.7]))) == 2.0


def test_M_t_at_zero_matches_M0():
    p = fig4(KernelSpec.fractional(0.7))
    grid = UniformGrid(1.0, 1000)
    psi = solve_psi(p, grid)
    assert M_t(p, psi, xi0(p, grid)) == pytest.approx(M0(p, psi), rel=1e-4)


def test_M_t_bounds_on_shifted_curves():
    p = fig4(KernelSpec.fractional(0.6))
    grid = UniformGrid(1.0, 200)
    psi = solve_psi(p, grid)
    base = xi0(p, grid).values
    for n in range(0, grid.N, 17):
        curve = ForwardVarianceCurve(grid, n, base[n:] * 1.5)
        upper = 2.0 * math.exp(2.0 * p.rate.integral(grid.t[n], 1.0))
        assert 0.0 < M_t(p, psi, curve) < upper


def test_M_t_rejects_negative_forward_variance():
    p = fig4()
    grid = UniformGrid(1.0, 50)
    psi = solve_psi(p, grid)
    vals = xi0(p, grid).values.copy()
    vals[10] = -1e-3
    with pytest.raises(DomainError):
        M_t(p, psi, ForwardVarianceCurve(grid, 0, vals))
    with pytest.raises(DomainError):
        M_t(p, psi, xi0(p, UniformGrid(1.0, 60)))


# ------------------------------------------------------------- exponential moment


def test_exp_moment_at_zero():
    assert exp_moment(0.0, fig1a(KernelSpec.fractional(0.6))) == 1.0


def test_exp_moment_constant_kernel_matches_ode():
    p = fig1b()
    assert exp_moment(0.5, p, N=2000) == pytest.approx(oracle.heston_exp_moment(0.5, p), rel=1e-6)


def test_exp_moment_small_noise_limit():
    a = 0.3
    p = fig4(KernelSpec.fractional(0.7), sigma=1e-5)
    grid = UniformGrid(1.0, 2000)
    V = oracle.deterministic_volterra(p, grid)
    expected = math.exp(a * np.trapezoid(V, dx=grid.h))
    assert exp_moment(a, p, grid) == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_exp_moment_dual_forms_agree(alpha):
    p = fig4(KernelSpec.fractional(alpha))
    g = solve_g(0.8, p, UniformGrid(1.0, 2000))
    assert dual_form_gap(p, g) <= 1e-5


def test_exp_moment_infinite_marker():
    p = fig1a(sigma=1.0, kappa=0.1, T=5.0)
    assert exp_moment(50.0, p) == math.inf


# ----------------------------------------------------------------- admissibility


def test_admissibility_constant_with_flat_A():
    p = fig1a(rho=0.0, theta=1.0)
    psi = solve_psi(p, UniformGrid(1.0, 100))
    np.testing.assert_allclose(A_curve(p, psi), 1.0)
    assert admissibility_constant(p, psi, 2.5) == pytest.approx(max(2 * 2.5, 8 * 2.5**2 - 2 * 2.5))


def test_admissibility_constant_monotone_in_p():
    p = fig2(0.04, KernelSpec.fractional(0.6))
    psi = solve_psi(p, UniformGrid(p.T, 300))
    vals = [admissibility_constant(p, psi, q) for q in (2.01, 2.2, 2.5, 3.0, 4.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        admissibility_constant(p, psi, 2.0)


def test_fig2_low_vol_admissibility_by_fractional_bound():
    p = fig2(0.04, KernelSpec.fractional(0.6))
    psi = solve_psi(p, UniformGrid(p.T, 500))
    a = admissibility_constant(p, psi)
    assert math.isfinite(a)
    assert check_assumption_V(p, a) is Verdict.SATISFIED_BY_FRACTIONAL_BOUND


def test_check_assumption_verdicts():
    p = fig2(3.0, KernelSpec.fractional(0.6))
    assert check_assumption_V(p, 0.0) is Verdict.SATISFIED
    assert check_assumption_V(p, 1e4) is Verdict.UNKNOWN
    assert check_assumption_V(fig2(3.0), 0.1) is Verdict.SATISFIED


# ------------------------------------------------------------------- MV solution


def test_solve_mv_at_risk_free_target():
    p = fig4(KernelSpec.fractional(0.6), c=math.exp(0.03))
    mv = solve_mv(p)
    assert mv.eta_star == pytest.approx(0.0, abs=1e-14)
    assert mv.zeta_star == pytest.approx(p.c, rel=1e-14)
    assert mv.variance_opt == pytest.approx(0.0, abs=1e-28)
    assert mv.mean_opt == p.c


def test_solve_mv_closed_form_consistency():
    p = fig4(KernelSpec.fractional(0.6))
    mv = solve_mv(p)
    R = p.rate_integral
    d = 2.0 - math.exp(-2 * R) * mv.M0
    assert d > 0
    assert mv.eta_star * d == pytest.approx(math.exp(-R) * mv.M0 * p.x0 - math.exp(-2 * R) * mv.M0 * p.c, rel=1e-12)
    assert mv.zeta_star == pytest.approx(p.c - mv.eta_star, rel=1e-15)


def test_solve_mv_warns_when_admissibility_unknown():
    with pytest.warns(RuntimeWarning, match="admissibility"):
        mv = solve_mv(fig2(3.0, KernelSpec.fractional(0.6)))
    assert mv.verdict is Verdict.UNKNOWN


def test_fig4_variance_smaller_for_rougher_kernel():
    c = np.exp(np.linspace(0.04, 0.53, 25))
    curves = [efficient_frontier(fig4(KernelSpec.fractional(a)), c, N=1000).variance for a in (0.55, 0.6, 0.7, 0.8, 0.9)]
    curves.append(efficient_frontier(fig4(), c, N=1000).variance)
    for lo, hi in zip(curves, curves[1:]):
        assert np.all(lo < hi)


@settings(max_examples=60)
@given(_params_strategy(ANY_KERNEL), st.floats(0.0, 0.5))
def test_wealth_gap_nonnegative_at_start(p, excess):
    p = p.replace(c=p.x0 * math.exp(p.rate_integral + excess))
    mv = solve_mv(p, N=100, check=False)
    assert mv.zeta_star * math.exp(-p.rate_integral) - p.x0 >= -1e-12


# ------------------------------------------------------------------------ u*


@pytest.fixture(scope="module")
def mv_fig4():
    return solve_mv(fig4(KernelSpec.fractional(0.6)), N=200)


def test_u_vanishes_on_target_wealth(mv_fig4):
    for t in (0.0, 0.5, 1.0):
        X = mv_fig4.zeta_star * math.exp(-0.03 * (1.0 - t))
        assert optimal_u(mv_fig4, t, 0.2, X) == pytest.approx(0.0, abs=1e-13)


def test_u_vanishes_without_variance(mv_fig4):
    assert optimal_u(mv_fig4, 0.25, 0.0, 0.3) == 0.0


def test_u_rejects_negative_variance(mv_fig4):
    with pytest.raises(DomainError):
        optimal_u(mv_fig4, 0.25, -0.01, 1.0)
    with pytest.raises(DomainError):
        optimal_pi(mv_fig4, 0.25, 0.0, 1.0)


def test_pi_is_u_over_volatility(mv_fig4):
    t = mv_fig4.grid.t
    u = optimal_u(mv_fig4, t, 0.09, 1.0)
    np.testing.assert_allclose(optimal_pi(mv_fig4, t, 0.09, 1.0), u / 0.3, rtol=1e-15)
    assert u.shape == t.shape


def _u_fig2(sigma, alpha, N=540):
    kernel = KernelSpec.constant() if alpha == 1.0 else KernelSpec.fractional(alpha)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mv = solve_mv(fig2(sigma, kernel), N=N)
    return mv.grid.t, optimal_u(mv, mv.grid.t, 0.5, 1.0)


def test_fig2_low_vol_u_increasing_in_alpha():
    us = [_u_fig2(0.04, a)[1] for a in (0.6, 0.7, 0.8, 0.9, 1.0)]
    for lo, hi in zip(us, us[1:]):
        assert np.all(lo < hi)


def test_fig2_high_vol_u_decreasing_in_alpha_late_in_horizon():
    t, _ = _u_fig2(3.0, 0.6)
    us = [_u_fig2(3.0, a)[1] for a in (0.6, 0.7, 0.8, 0.9, 1.0)]
    late = t >= 0.4 * t[-1]
    for rough, smooth in zip(us, us[1:]):
        assert np.all(rough[late] > smooth[late])


# ----------------------------------------------------------------------- frontier


def test_frontier_is_exactly_quadratic():
    p = fig4(KernelSpec.fractional(0.7))
    c = np.exp(0.03) * np.linspace(1.01, 1.6, 30)
    fr = efficient_frontier(p, c, N=300)
    ratio = fr.variance / (c * math.exp(-0.03) - 1.0) ** 2
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
    np.testing.assert_allclose(fr.std, np.sqrt(fr.variance))


def test_frontier_endpoint_and_infeasible_target():
    p = fig4(KernelSpec.fractional(0.7))
    fr = efficient_frontier(p, [math.exp(0.03), math.exp(0.1)], N=100)
    assert fr.variance[0] == pytest.approx(0.0, abs=1e-28)
    with pytest.raises(DomainError):
        efficient_frontier(p, [0.99, 1.1], N=100)


# ---------------------------------------------------------------- U-type identity


def test_identity_degenerate_theta():
    p = fig1a(theta=0.0, allow_degenerate=True)
    assert identity_Uequivalent_check(p, solve_psi(p, UniformGrid(1.0, 100))) == 0.0


def test_identity_constant_kernel():
    p = fig1a()
    assert identity_Uequivalent_check(p, solve_psi(p, UniformGrid(1.0, 1000))) <= 1e-5


def test_identity_fractional_kernel():
    p = fig4(KernelSpec.fractional(0.6))
    assert identity_Uequivalent_check(p, solve_psi(p, UniformGrid(1.0, 2000))) <= 1e-4


def test_identity_with_vanishing_lambda():
    # kappa + 2 theta rho sigma = 0 switches to R / lam = K
    p = fig1a()
    p = p.replace(kappa=-2 * p.theta * p.rho * p.sigma)
    assert p.lam == 0.0
    assert identity_Uequivalent_check(p, solve_psi(p, UniformGrid(1.0, 1000))) <= 1e-5


# -------------------------------------------------------------- Heston reduction


@settings(max_examples=10)
@given(_params_strategy(st.just(KernelSpec.constant())), st.floats(0.01, 0.3))
def test_heston_reduction(p, excess):
    p = p.replace(c=p.x0 * math.exp(p.rate_integral + excess))
    grid = UniformGrid(p.T, 2000)
    try:
        ode = oracle.heston_ode_solve(p, grid)
    except ExplosionError:
        assume(False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mv = solve_mv(p, grid, check=False)
    m0 = oracle.heston_M0(p)
    assert mv.M0 == pytest.approx(m0, rel=1e-6)
    R = p.rate_integral
    eta = (math.exp(-R) * m0 * p.x0 - math.exp(-2 * R) * m0 * p.c) / (2.0 - math.exp(-2 * R) * m0)
    assert mv.eta_star == pytest.approx(eta, rel=1e-6, abs=1e-12)
    A = p.theta + p.rho * p.sigma * ode.w[::-1]
    np.testing.assert_allclose(mv.A, A, rtol=1e-6, atol=1e-12)
