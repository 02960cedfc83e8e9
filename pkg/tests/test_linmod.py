import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from attestcast.errors import ConfigError, RankDeficiencyError, SeriesTooShortError
from attestcast.linmod import (
    ModelSpec,
    PanelFit,
    UnitFit,
    bic,
    build_lag_matrix,
    coef_names,
    confidence_interval,
    fit_panel,
    fit_unit,
    ols,
    select_lag,
)
from attestcast.simulate import simulate_arx

# t_{0.975, 10}, solved from the regularized incomplete beta in mpmath at 40 digits
T975_DF10 = 2.2281388519862747


def normal_equations_oracle(design, response, dps=40):
    with mpmath.workdps(dps):
        X = mpmath.matrix(design.tolist())
        y = mpmath.matrix(response.tolist())
        beta = mpmath.lu_solve(X.T * X, X.T * y)
        return np.array([float(b) for b in beta])


def ar_series(seed, n=200, gamma=0.5, beta=1.0, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = np.zeros(n)
    e = rng.standard_normal(n) * noise
    for t in range(1, n):
        y[t] = gamma * y[t - 1] + beta * x[t - 1] + e[t]
    return y, x


# --- design -------------------------------------------------------------------

def test_design_shapes():
    resp, design = build_lag_matrix(np.arange(10.0), np.arange(10.0) ** 2, 1)
    assert design.shape == (9, 3) and resp.shape == (9,)
    resp, design = build_lag_matrix(np.ones(217), np.ones(217), 7)
    assert design.shape == (210, 15)


@given(st.integers(1, 6), st.integers(0, 1000))
def test_design_shift(K, seed):
    rng = np.random.default_rng(seed)
    y, x = rng.standard_normal(40), rng.standard_normal(40)
    resp, design = build_lag_matrix(y, x, K)
    assert np.array_equal(resp, y[K:])
    assert np.all(design[:, 0] == 1.0)
    for k in range(1, K + 1):
        assert np.array_equal(design[:, k], y[K - k: 40 - k])
        assert np.array_equal(design[:, K + k], x[K - k: 40 - k])


def test_design_too_short():
    with pytest.raises(SeriesTooShortError):
        build_lag_matrix(np.ones(6), np.ones(6), 2)


def test_coef_names():
    assert coef_names(2) == ["alpha", "gamma1", "gamma2", "beta1", "beta2"]


# --- ols ----------------------------------------------------------------------

def test_ols_exact_interpolation():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 4))
    c = np.array([1.0, -2.0, 0.5, 3.0])
    res = ols(X @ c, X)
    np.testing.assert_allclose(res.coeffs, c, atol=1e-10)
    assert res.rss < 1e-20


def test_ols_intercept_only_is_mean():
    y = np.array([1.0, 4.0, 2.0, 9.0])
    res = ols(y, np.ones((4, 1)))
    assert res.coeffs[0] == pytest.approx(4.0, abs=1e-14)
    assert res.sigma2 == pytest.approx(np.var(y, ddof=1))


def test_ols_matches_extended_precision_normal_equations():
    rng = np.random.default_rng(42)
    X = rng.standard_normal((50, 5))
    y = X @ rng.standard_normal(5) + rng.standard_normal(50)
    res = ols(y, X)
    oracle = normal_equations_oracle(X, y)
    np.testing.assert_allclose(res.coeffs, oracle, rtol=1e-8)


def test_ols_covariance():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 3))
    y = rng.standard_normal(60)
    res = ols(y, X)
    np.testing.assert_allclose(res.cov, res.sigma2 * np.linalg.inv(X.T @ X), rtol=1e-10)
    assert np.allclose(res.cov, res.cov.T)
    assert np.all(np.linalg.eigvalsh(res.cov) >= 0)


@given(st.integers(0, 10_000))
def test_residuals_orthogonal(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((80, 6)) * rng.uniform(0.1, 10, 6)
    y = rng.standard_normal(80) * 5
    res = ols(y, X)
    scale = np.linalg.norm(X) * np.linalg.norm(y)
    assert np.max(np.abs(X.T @ (y - X @ res.coeffs))) < 1e-8 * scale


def test_rank_deficiency_names_column():
    X = np.column_stack([np.ones(20), np.arange(20.0), 2 * np.arange(20.0)])
    with pytest.raises(RankDeficiencyError) as info:
        ols(np.arange(20.0), X, names=["a", "b", "c"])
    assert info.value.column == 2 and "c" in str(info.value)


def test_constant_indicator_is_rank_deficient():
    y, _ = ar_series(0, n=60)
    with pytest.raises(RankDeficiencyError) as info:
        fit_unit(y, np.zeros(60), ModelSpec(K=2), unit_id="H9")
    assert info.value.unit_id == "H9"
    assert info.value.name == "beta1"
    assert "H9" in str(info.value) and "exclude the unit" in str(info.value)


# --- fit_unit -----------------------------------------------------------------

def test_fit_unit_recovers_truth():
    y, x = ar_series(3, n=400, noise=0.01)
    fit = fit_unit(y, x, ModelSpec(K=1))
    assert abs(fit.beta[0] - 1.0) <= 3 * fit.se[fit.index_of("beta1")]
    assert abs(fit.gamma[0] - 0.5) <= 3 * fit.se[fit.index_of("gamma1")]


def test_null_wald_below_extreme_quantile():
    y, _ = ar_series(4, n=500, beta=0.0)
    x = np.random.default_rng(99).standard_normal(500)
    fit = fit_unit(y, x, ModelSpec(K=2))
    d = fit.T_eff - 5
    assert fit.wald < 2 * stats.f.ppf(0.999, 2, d)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_nesting(seed, K):
    rng = np.random.default_rng(seed)
    fit = fit_unit(rng.standard_normal(50), rng.standard_normal(50), ModelSpec(K=K))
    assert fit.rss_r >= fit.rss_u >= 0
    assert fit.wald >= 0


def test_wald_matches_restricted_refit_and_quadratic_form():
    y, x = ar_series(5, n=150, beta=0.2)
    K = 3
    fit = fit_unit(y, x, ModelSpec(K=K))
    resp, design = build_lag_matrix(y, x, K)
    restricted = ols(resp, design[:, : 1 + K])
    assert fit.rss_r == pytest.approx(restricted.rss, rel=1e-10)
    d = fit.T_eff - (2 * K + 1)
    assert fit.wald == pytest.approx((restricted.rss - fit.rss_u) / (fit.rss_u / d), rel=1e-9)
    b = fit.beta
    V = fit.cov[1 + K:, 1 + K:]
    assert fit.wald == pytest.approx(float(b @ np.linalg.solve(V, b)), rel=1e-8)


@given(st.integers(0, 1000), st.floats(1e-3, 1e3))
def test_wald_scale_invariance(seed, c):
    y, x = ar_series(seed, n=80, beta=0.3)
    a = fit_unit(y, x, ModelSpec(K=2)).wald
    b = fit_unit(y, c * x, ModelSpec(K=2)).wald
    assert b == pytest.approx(a, rel=1e-8, abs=1e-10)


def test_fit_is_deterministic():
    y, x = ar_series(6)
    a, b = fit_unit(y, x, ModelSpec(K=3)), fit_unit(y, x, ModelSpec(K=3))
    assert np.array_equal(a.coeffs, b.coeffs) and np.array_equal(a.cov, b.cov) and a.wald == b.wald


def test_null_mean_of_wald_matches_f_moments():
    reps, K, T_eff = 1000, 2, 200
    walds = np.empty(reps)
    for r in range(reps):
        panel = simulate_arx(1, T_eff + K, gamma=(0.5,), seed=77, keys=(r,))
        walds[r] = fit_unit(panel.y[0], panel.x[0], ModelSpec(K=K)).wald
    d = T_eff - 2 * K - 1
    mean = K * d / (d - 2)
    mc_se = np.std(walds, ddof=1) / math.sqrt(reps)
    assert abs(walds.mean() - mean) < 3 * mc_se


# --- intervals ----------------------------------------------------------------

def _fit_with(coeffs, cov, T_eff=13, K=1):
    coeffs = np.asarray(coeffs, float)
    return UnitFit("u", K, True, coeffs, np.asarray(cov, float), 1.0, 1.0, 1.0, T_eff, 0.0)


def test_ci_zero_variance_is_degenerate():
    fit = _fit_with([1.0, 0.5, 0.2], np.zeros((3, 3)))
    assert confidence_interval(fit, 2) == (0.2, 0.2)


def test_ci_matches_table_quantile():
    # T_eff 13 with 3 coefficients leaves 10 residual degrees of freedom
    cov = np.diag([0.04, 0.09, 0.25])
    fit = _fit_with([1.0, 0.5, 0.2], cov)
    lo, hi = confidence_interval(fit, "beta1", 0.95)
    assert lo == pytest.approx(0.2 - T975_DF10 * 0.5, abs=1e-6)
    assert hi == pytest.approx(0.2 + T975_DF10 * 0.5, abs=1e-6)


def test_ci_widens_with_level():
    y, x = ar_series(7)
    fit = fit_unit(y, x, ModelSpec(K=2))
    for j in range(fit.n_params):
        lo95, hi95 = confidence_interval(fit, j, 0.95)
        lo99, hi99 = confidence_interval(fit, j, 0.99)
        assert lo99 < lo95 and hi99 > hi95


def test_ci_bad_index():
    fit = _fit_with([1.0, 0.5, 0.2], np.eye(3))
    with pytest.raises(IndexError):
        confidence_interval(fit, 5)
    with pytest.raises(IndexError):
        confidence_interval(fit, "beta9")


# --- BIC and lag selection ------------------------------------------------------

def test_bic_penalizes_parameters():
    small = _fit_with([0.0] * 3, np.eye(3), T_eff=100, K=1)
    big = UnitFit("u", 2, True, np.zeros(5), np.eye(5), 1.0, 1.0, 1.0, 100, 0.0)
    spec1, spec2 = ModelSpec(K=1), ModelSpec(K=2)
    a = bic(PanelFit(spec1, (small,), 0.0, 0.0, 100))
    b = bic(PanelFit(spec2, (big,), 0.0, 0.0, 100))
    assert a < b
    assert a == pytest.approx(100 * math.log(1.0 / 100) + 3 * math.log(100))


def test_bic_total_matches_formula():
    panel = simulate_arx(3, 120, beta=(0.3,), seed=8)
    pf = fit_panel(panel, ModelSpec(K=2))
    n_obs = sum(f.T_eff for f in pf.fits)
    expected = sum(f.T_eff * math.log(f.rss_u / f.T_eff) for f in pf.fits) + 3 * 5 * math.log(n_obs)
    assert pf.bic_total == pytest.approx(expected, rel=1e-12)
    assert pf.n_obs_total == n_obs == 3 * 118


def test_select_lag_curve_and_common_rows():
    panel = simulate_arx(3, 150, gamma=(0.5,), beta=(0.0, 0.0, 0.4), seed=9)
    K, curve = select_lag(panel, 6)
    assert [k for k, _ in curve] == list(range(1, 7))
    assert K == 3
    # every candidate is scored on the rows available at k_max
    pf = fit_panel(panel, ModelSpec(K=2), start=6)
    assert curve[1][1] == pf.bic_total
    assert all(f.T_eff == 144 for f in pf.fits)


def test_select_lag_truncated_below_true_order():
    panel = simulate_arx(5, 300, gamma=(0.2, 0.2, 0.2, 0.2), beta=(0.5, 0.5, 0.5, 0.5), seed=10)
    K, curve = select_lag(panel, 3)
    assert K == 3
    values = [b for _, b in curve]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_select_lag_white_noise_prefers_one():
    picks = []
    for r in range(200):
        panel = simulate_arx(3, 120, gamma=(), beta=(), x_ar=0.0, seed=11, keys=(r,))
        picks.append(select_lag(panel, 4)[0])
    assert np.mean(np.array(picks) == 1) > 0.5


def test_select_lag_too_short_names_unit():
    panel = simulate_arx(2, 20, seed=12)
    with pytest.raises(SeriesTooShortError, match="unit1"):
        select_lag(panel, 10)


def test_fit_panel_parallel_matches_serial():
    panel = simulate_arx(6, 100, beta=(0.2,), seed=13)
    a = fit_panel(panel, ModelSpec(K=2))
    b = fit_panel(panel, ModelSpec(K=2), jobs=4)
    assert a.units == b.units
    assert all(np.array_equal(f.coeffs, g.coeffs) for f, g in zip(a.fits, b.fits))
    assert a.bic_total == b.bic_total


def test_model_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec(K=0)
    with pytest.raises(ConfigError):
        ModelSpec(K=1, ci_level=1.0)
