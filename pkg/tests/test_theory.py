import math

import numpy as np
import pytest

from commwatch.theory import (
    TauProfile,
    TheoryError,
    TheoryParams,
    TiltedExpectations,
    arl_lower_bound,
    arl_upper_bound,
    big_H,
    h_tau,
    h_tau_deriv,
    lb_term_profile,
    nu_approx,
    solve_theta,
    threshold_for_arl,
    ub_integrand_profile,
)

P0, P1, ALPHA = 0.3, 0.8, 0.2


def cache_for(tau, alpha=ALPHA):
    return TiltedExpectations(TauProfile(float(tau), P0, P1), alpha)


def test_profile_moments():
    c0 = math.log(P1 / P0)
    c1 = math.log((1 - P1) / (1 - P0))
    prof = TauProfile(5.0, P0, P1)
    assert prof.drift == pytest.approx(5 * (P0 * (c0 - c1) + c1), rel=1e-14)
    assert prof.scale == pytest.approx(
        math.sqrt(5 * (c0 - c1) ** 2 * P0 * (1 - P0)), rel=1e-14)
    with pytest.raises(ValueError):
        TauProfile(0.0, P0, P1)


def test_h_tau_derivative_matches_finite_differences():
    prof = TauProfile(4.0, P0, P1)
    eps = 1e-6
    for x in (-2.0, -0.5, 0.0, 0.7, 2.5):
        fd = (h_tau(x + eps, prof, ALPHA) - h_tau(x - eps, prof, ALPHA)) / (2 * eps)
        assert h_tau_deriv(x, prof, ALPHA) == pytest.approx(fd, abs=1e-6)


def test_psi_at_zero_is_zero_and_convex():
    for tau in (1, 3, 10, 50):
        p, pd, pdd = cache_for(tau).psi(0.0)
        assert p == 0.0
        assert pdd >= 0.0


def test_psi_derivatives_match_finite_differences():
    cache = cache_for(3)
    eps = 1e-5
    for theta in (0.1, 0.5, 1.0):
        p, pd, pdd = cache.psi(theta)
        fd1 = (cache.psi(theta + eps)[0] - cache.psi(theta - eps)[0]) / (2 * eps)
        fd2 = (cache.psi(theta + eps)[0] - 2 * p + cache.psi(theta - eps)[0]) / eps**2
        assert pd == pytest.approx(fd1, rel=1e-5)
        assert pdd == pytest.approx(fd2, rel=1e-4, abs=1e-7)


def test_alpha_one_closed_forms():
    # with no soft threshold the statistic is Gaussian:
    # psi = theta*mu + theta^2 sigma^2/2, gamma = theta^2 sigma^2/2,
    # and the tilt root is theta = (target - mu) / sigma^2
    prof = TauProfile(2.0, P0, P1)
    cache = TiltedExpectations(prof, alpha=1.0)
    mu, s2 = prof.drift, prof.scale**2
    for theta in (0.1, 0.3):
        p, pd, pdd = cache.psi(theta)
        assert p == pytest.approx(theta * mu + 0.5 * theta**2 * s2, abs=1e-8)
        assert pd == pytest.approx(mu + theta * s2, abs=1e-8)
        assert pdd == pytest.approx(s2, abs=1e-7)
        assert cache.gamma(theta) == pytest.approx(0.5 * theta**2 * s2, abs=1e-8)
    target = mu + 0.25 * s2
    assert solve_theta(cache, target) == pytest.approx(0.25, abs=1e-8)


def test_gamma_matches_dense_trapezoid_oracle():
    prof = TauProfile(3.0, P0, P1)
    cache = cache_for(3)
    theta = 0.6
    z = np.linspace(-8, 8, 400_001)
    g = z * prof.scale + prof.drift
    h = np.log1p(ALPHA * np.expm1(np.minimum(g, 600)))
    dh = prof.scale * ALPHA * np.exp(g - h)
    w = np.exp(-0.5 * z * z)
    w /= np.trapezoid(w, z)
    psi = math.log(np.trapezoid(np.exp(theta * h) * w, z))
    want = 0.5 * theta**2 * np.trapezoid(dh**2 * np.exp(theta * h - psi) * w, z)
    assert cache.gamma(theta) == pytest.approx(want, rel=1e-6)


def test_solve_theta_satisfies_its_equation():
    cache = cache_for(2)
    target = 0.49  # = 7.35 / 15
    theta = solve_theta(cache, target)
    assert cache.psi(theta)[1] == pytest.approx(target, rel=1e-8)


def test_solve_theta_reports_missing_roots():
    cache = cache_for(2)
    with pytest.raises(TheoryError):
        solve_theta(cache, cache.psi(0.0)[1] - 0.01)  # below psi'(0)
    with pytest.raises(TheoryError):
        solve_theta(cache, cache.psi_dot_sup + 1.0)   # above sup h


def test_big_h_matches_direct_evaluation():
    theta, triple, gam, n = 0.7, (0.02, 0.5, 1.3), 0.04, 15.0
    want = (theta * math.sqrt(2 * math.pi * triple[2]) / (gam**2 * math.sqrt(n))
            * math.exp(n * (theta * triple[1] - triple[0])))
    val, log_val = big_H(n, theta, triple, gam)
    assert val == pytest.approx(want, rel=1e-10)
    assert log_val == pytest.approx(math.log(want), abs=1e-10)


def test_nu_reference_values():
    assert nu_approx(0.0) == 1.0
    assert nu_approx(1e-9) == pytest.approx(1.0, abs=1e-6)
    # hand evaluation at x = 2 via Phi(1), phi(1)
    phi1 = math.exp(-0.5) / math.sqrt(2 * math.pi)
    cdf1 = 0.5 * (1 + math.erf(1 / math.sqrt(2)))
    want = (cdf1 - 0.5) / (cdf1 + phi1)
    assert nu_approx(2.0) == pytest.approx(want, rel=1e-12)
    xs = np.linspace(1e-6, 6, 200)
    vals = [nu_approx(x) for x in xs]
    assert all(a > b for a, b in zip(vals, vals[1:]))  # strictly decreasing
    with pytest.raises(ValueError):
        nu_approx(-0.1)


def params_at(b, m0=1, m1=200):
    return TheoryParams(P0, P1, ALPHA, b, 6, n_effective=15, m0=m0, m1=m1)


def test_bounds_are_monotone_in_threshold():
    lbs = [arl_lower_bound(params_at(b)) for b in (6.5, 7.37, 8.05)]
    ubs = [arl_upper_bound(params_at(b)) for b in (6.5, 7.37, 8.05)]
    assert lbs[0] < lbs[1] < lbs[2]
    assert ubs[0] < ubs[1] < ubs[2]
    assert all(lb < ub for lb, ub in zip(lbs, ubs))


def test_profiles_concentrate_at_small_lags():
    rows = lb_term_profile(params_at(7.3734, m1=200))
    terms = [r["term"] for r in rows]
    peak = max(range(len(terms)), key=terms.__getitem__)
    assert rows[peak]["tau"] <= 10
    assert terms[peak] / max(terms[-1], 1e-300) >= 1e3
    urows = ub_integrand_profile(params_at(7.3734, m1=60), n_samples=60)
    vals = [r["integrand"] for r in urows]
    upeak = max(range(len(vals)), key=vals.__getitem__)
    assert urows[upeak]["tau"] <= 10


def test_threshold_inversion_round_trips():
    b = threshold_for_arl(params_at(7.0, m1=60), 3000.0, "LB")
    assert arl_lower_bound(params_at(b, m1=60)) == pytest.approx(3000.0, rel=6e-3)


def test_quadrature_is_converged():
    loose = TiltedExpectations(TauProfile(3.0, P0, P1), ALPHA, quad_tol=1e-6)
    tight = TiltedExpectations(TauProfile(3.0, P0, P1), ALPHA, quad_tol=1e-10)
    assert loose.psi(0.8)[0] == pytest.approx(tight.psi(0.8)[0], rel=1e-6)


def test_no_overflow_far_above_working_thresholds():
    p = params_at(22.0, m1=40)  # roughly 3x the calibrated range
    rows = lb_term_profile(p)
    assert all(math.isfinite(r["term"]) for r in rows)


def test_params_validation():
    with pytest.raises(ValueError):
        TheoryParams(0.8, 0.3, ALPHA, 7.0, 6)
    with pytest.raises(ValueError):
        TheoryParams(P0, P1, 0.0, 7.0, 6)
    with pytest.raises(ValueError):
        TheoryParams(P0, P1, ALPHA, 7.0, 6, m0=0)
    assert TheoryParams(P0, P1, ALPHA, 7.0, 6).n_effective == 6.0
