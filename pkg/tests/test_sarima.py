import math

import numpy as np
import pytest

from gdpcast.sarima import (InfeasibleParamsError, SarimaFit, SarimaOrder, SarimaParams, aic_search,
                            css_objective, enumerate_orders, expand_polynomials, fit, forecast,
                            min_root_modulus, poly_from_map, roots_outside, selection_key)


def simulate_ar1(phi, n, seed, burn=200):
    e = np.random.default_rng(seed).standard_normal(n + burn)
    y = np.zeros(n + burn)
    for t in range(1, n + burn):
        y[t] = phi * y[t - 1] + e[t]
    return y[burn:]


def simulate_sar1(Phi, n, seed, s=4, burn=200):
    e = np.random.default_rng(seed).standard_normal(n + burn)
    y = np.zeros(n + burn)
    for t in range(s, n + burn):
        y[t] = Phi * y[t - s] + e[t]
    return y[burn:]


def naive_residuals(w, ar, ma, mu, m):
    """Direct transcription of the residual recursion."""
    u = np.asarray(w, dtype=float) - mu
    e = np.zeros(len(u))
    for t in range(m, len(u)):
        e[t] = u[t] - sum(c * u[t - j] for j, c in ar.items()) + sum(
            c * e[t - j] for j, c in ma.items() if t - j >= m)
    return e[m:]


def test_expand_seasonal_ar():
    ar, ma = expand_polynomials(SarimaOrder(p=1, P=1, s=4), SarimaParams(phi=(0.5,), Phi=(0.3,), mu=0.0))
    assert ar.keys() == {1, 4, 5}
    assert ar[1] == pytest.approx(0.5) and ar[4] == pytest.approx(0.3) and ar[5] == pytest.approx(-0.15)
    assert ma == {}


def test_expand_trivial_and_ma():
    assert expand_polynomials(SarimaOrder(), SarimaParams(mu=0.0)) == ({}, {})
    _, ma = expand_polynomials(SarimaOrder(q=2, d=1), SarimaParams(theta=(0.4, 0.1)))
    assert ma == {1: pytest.approx(0.4), 2: pytest.approx(0.1)}


def test_expand_dimension_mismatch():
    with pytest.raises(ValueError):
        expand_polynomials(SarimaOrder(p=2), SarimaParams(phi=(0.1,), mu=0.0))


def test_expanded_polynomial_equals_product_of_factors():
    rng = np.random.default_rng(0)
    order = SarimaOrder(p=2, q=2, P=1, Q=1, d=1, s=4)
    params = SarimaParams(phi=(0.3, -0.2), theta=(0.5, 0.1), Phi=(0.4,), Theta=(-0.3,))
    ar, ma = expand_polynomials(order, params)
    for _ in range(10):
        z = complex(*rng.normal(size=2))
        lhs_ar = np.polyval(poly_from_map(ar)[::-1], z)
        rhs_ar = (1 - 0.3 * z + 0.2 * z**2) * (1 - 0.4 * z**4)
        lhs_ma = np.polyval(poly_from_map(ma)[::-1], z)
        rhs_ma = (1 - 0.5 * z - 0.1 * z**2) * (1 + 0.3 * z**4)
        assert abs(lhs_ar - rhs_ar) < 1e-12 * max(1, abs(rhs_ar))
        assert abs(lhs_ma - rhs_ma) < 1e-12 * max(1, abs(rhs_ma))


def test_schur_cohn_agrees_with_roots():
    rng = np.random.default_rng(1)
    for _ in range(3000):
        c = np.r_[1.0, rng.normal(0, 0.7, rng.integers(1, 9))]
        assert roots_outside(c) == (min_root_modulus(c) > 1 + 1e-6)


def test_css_white_noise():
    w = np.random.default_rng(2).normal(3.0, 2.0, size=50)
    resid, sigma2, _ = css_objective(w, SarimaOrder(), SarimaParams(mu=float(w.mean())))
    np.testing.assert_allclose(resid, w - w.mean(), rtol=1e-13)
    assert sigma2 == pytest.approx(np.var(w), rel=1e-12)


def test_css_loglik_closed_form():
    # 100 residuals with sum of squares exactly 100
    w = np.array([1.0, -1.0] * 50)
    _, sigma2, loglik = css_objective(w, SarimaOrder(), SarimaParams(mu=0.0))
    assert sigma2 == 1.0
    assert loglik == pytest.approx(-50 * (math.log(2 * math.pi) + 1), abs=1e-10)
    assert loglik == pytest.approx(-141.8939, abs=1e-4)


def test_css_nonstationary_signaled():
    with pytest.raises(InfeasibleParamsError):
        css_objective(np.ones(20), SarimaOrder(p=1), SarimaParams(phi=(1.05,), mu=0.0))
    with pytest.raises(InfeasibleParamsError):
        css_objective(np.ones(20), SarimaOrder(q=1, d=1), SarimaParams(theta=(1.0,)))


def test_css_matches_naive_recursion():
    rng = np.random.default_rng(3)
    order = SarimaOrder(p=2, q=2, P=1, Q=1, s=4)
    params = SarimaParams(phi=(0.3, 0.2), theta=(0.4, -0.2), Phi=(0.5,), Theta=(0.3,), mu=1.5)
    w = rng.normal(size=80) + 1.5
    resid, _, _ = css_objective(w, order, params)
    ar, ma = expand_polynomials(order, params)
    np.testing.assert_allclose(resid, naive_residuals(w, ar, ma, 1.5, order.max_ar_lag), rtol=1e-12, atol=1e-12)


def test_loglik_decreases_with_sse():
    order = SarimaOrder()
    lls = [css_objective(np.full(40, a) * np.r_[1, -1] .repeat(20), order, SarimaParams(mu=0.0))[2]
           for a in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(lls, lls[1:]))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fit_recovers_ar1(seed):
    f = fit(simulate_ar1(0.7, 500, seed), SarimaOrder(p=1))
    assert 0.6 <= f.params.phi[0] <= 0.8
    assert f.converged


@pytest.mark.parametrize("seed", [0, 1])
def test_fit_recovers_seasonal_ar(seed):
    f = fit(simulate_sar1(0.6, 400, seed), SarimaOrder(P=1))
    assert 0.5 <= f.params.Phi[0] <= 0.7


def test_fit_without_free_coefficients():
    y = np.cumsum(np.random.default_rng(4).normal(size=60))
    f = fit(y, SarimaOrder(d=1))
    w = np.diff(y)
    assert f.n_effective == 59
    assert f.params.sigma2 == pytest.approx(np.mean(w * w), rel=1e-12)
    assert f.loglik == pytest.approx(-59 / 2 * (math.log(2 * math.pi * np.mean(w * w)) + 1), rel=1e-12)


def test_fit_is_deterministic():
    y = simulate_ar1(0.5, 120, 9) + np.tile([0, 1, 0, -1], 30)
    order = SarimaOrder(1, 0, 1, 1, 0, 1)
    assert fit(y, order) == fit(y, order)


def test_fit_aic_and_k():
    f = fit(simulate_ar1(0.4, 100, 5), SarimaOrder(p=1, q=1))
    assert f.k == 4
    assert f.aic == 2 * f.k - 2 * f.loglik


def test_fit_too_short():
    with pytest.raises(ValueError):
        fit(np.arange(15.0), SarimaOrder(p=1, d=1, P=1, D=1))


def test_forecast_random_walk_is_flat():
    y = np.cumsum(np.random.default_rng(6).normal(size=50))
    f = fit(y, SarimaOrder(d=1))
    np.testing.assert_array_equal(forecast(f, y, 5), [y[-1]] * 5)


def test_forecast_white_noise_reverts_to_mean():
    f = SarimaFit(SarimaOrder(), SarimaParams(mu=3.25, sigma2=1.0), 0.0, 0.0, 10, True)
    np.testing.assert_array_equal(forecast(f, np.random.default_rng(0).normal(size=20), 3), [3.25] * 3)


def test_forecast_seasonal_trend_continuation():
    f = SarimaFit(SarimaOrder(d=1, D=1), SarimaParams(sigma2=1.0), 0.0, 0.0, 3, True)
    y = [1, 2, 3, 4, 2, 3, 4, 5]
    np.testing.assert_allclose(forecast(f, y, 1), [3.0])


def test_forecast_horizon_check():
    f = SarimaFit(SarimaOrder(), SarimaParams(mu=0.0), 0.0, 0.0, 10, True)
    with pytest.raises(ValueError):
        forecast(f, np.zeros(10), 0)


def test_stationary_forecast_converges_to_mean():
    y = simulate_ar1(0.8, 300, 12) + 10.0
    f = fit(y, SarimaOrder(p=1, P=1))
    fc = forecast(f, y, 60)
    gaps = np.abs(fc - f.params.mu)
    lag = f.order.max_ar_lag
    assert np.all(np.diff(gaps[lag:]) <= 1e-12)
    assert gaps[-1] < 1e-2 * gaps[lag]


def test_forecast_matches_manual_ar_recursion():
    y = simulate_ar1(0.6, 200, 13) + 5.0
    f = fit(y, SarimaOrder(p=1))
    mu, phi = f.params.mu, f.params.phi[0]
    expected, prev = [], y[-1]
    for _ in range(4):
        prev = mu + phi * (prev - mu)
        expected.append(prev)
    np.testing.assert_allclose(forecast(f, y, 4), expected, rtol=1e-12)


def test_enumerate_default_has_216():
    orders = enumerate_orders()
    assert len(orders) == 216 and all(o.s == 4 for o in orders)


def test_aic_search_single_candidate():
    y = simulate_ar1(0.5, 80, 1)
    best, table = aic_search(y, {"p": [1], "d": [0], "q": [0], "P": [0], "D": [0], "Q": [0]})
    assert best.order == SarimaOrder(p=1) and len(table) == 1


def test_aic_search_table_identity_and_selection():
    y = simulate_ar1(0.6, 120, 2) + np.tile([0.0, 2.0, 1.0, 3.0], 30)
    best, table = aic_search(y, {"p": [0, 1], "d": [0, 1], "q": [0, 1], "P": [0, 1], "D": [0], "Q": [0]})
    assert best == min(table, key=selection_key)
    for f in table:
        assert f.aic == 2 * f.k - 2 * f.loglik


def test_aic_search_tie_break():
    a = SarimaFit(SarimaOrder(p=1, q=0), SarimaParams(phi=(0.1,), mu=0.0), -10.0, 24.0, 10, True)
    b = SarimaFit(SarimaOrder(p=0, q=1), SarimaParams(theta=(0.1,), mu=0.0), -10.0, 24.0, 10, True)
    c = SarimaFit(SarimaOrder(p=1, q=1), SarimaParams(phi=(0.1,), theta=(0.1,), mu=0.0), -9.0, 24.0, 10, True)
    assert min([a, b, c], key=selection_key) is b


def test_aic_search_parallel_equals_sequential():
    y = simulate_ar1(0.5, 100, 3)
    r = {"p": [0, 1], "d": [0], "q": [0, 1], "P": [0], "D": [0], "Q": [0]}
    b1, t1 = aic_search(y, r)
    b2, t2 = aic_search(y, r, workers=2)
    assert b1 == b2 and t1 == t2


def test_aic_search_all_fail():
    with pytest.raises(RuntimeError):
        aic_search(np.arange(12.0), {"p": [2], "d": [2], "q": [0], "P": [1], "D": [1], "Q": [0]})


@pytest.mark.slow
def test_white_noise_selects_small_orders():
    small = 0
    for seed in range(100):
        y = np.random.default_rng(seed).standard_normal(400)
        best, _ = aic_search(y)
        small += sum(best.order.as_tuple()) <= 2
    assert small >= 80


def test_aic_search_scores_common_sample():
    y = simulate_ar1(0.5, 100, 4) + np.tile([0.0, 1.0, 2.0, 0.5], 25)
    _, table = aic_search(y, {"p": [0, 2], "d": [0, 1], "q": [0], "P": [0, 1], "D": [0, 1], "Q": [0]})
    # the largest burn-in in this grid is d + D*s + p + P*s = 1 + 4 + 2 + 4
    assert {f.n_effective for f in table} == {100 - 11}


def test_burn_in_only_drops_scored_residuals():
    w = np.random.default_rng(5).normal(size=60)
    order, params = SarimaOrder(p=1, q=1), SarimaParams(phi=(0.4,), theta=(0.3,), mu=0.0)
    full, _, _ = css_objective(w, order, params)
    late, _, _ = css_objective(w, order, params, burn_in=7)
    np.testing.assert_array_equal(late, full[6:])
    with pytest.raises(ValueError):
        css_objective(w, SarimaOrder(p=2), SarimaParams(phi=(0.1, 0.1), mu=0.0), burn_in=1)
    with pytest.raises(ValueError):
        fit(w, order, condition=0)
