"""ADF regression and test: oracle checks, invariances, reference comparison."""

from __future__ import annotations

import numpy as np
import pytest

from flowbreaks.unitroot import (AdfSpec, Deterministic, LagSelection,
                                 SingularDesignError, adf_regression, adf_test,
                                 default_max_lag, mackinnon_crit, mackinnon_pvalue)


def ar1(phi, T, seed, c=0.0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(T)
    y = np.empty(T)
    y[0] = e[0]
    for t in range(1, T):
        y[t] = c + phi * y[t - 1] + e[t]
    return y


def normal_equations_oracle(y, det, lag):
    """Independent design-and-solve: build the ADF regressors by hand and
    solve the normal equations directly."""
    dy = np.diff(y)
    rows = []
    dep = []
    for t in range(lag, dy.size):
        row = [y[t]]
        row += [dy[t - j] for j in range(1, lag + 1)]
        if det in ("c", "ct"):
            row.append(1.0)
        if det == "ct":
            row.append(t - lag + 1.0)
        rows.append(row)
        dep.append(dy[t])
    X = np.asarray(rows)
    b = np.asarray(dep)
    return np.linalg.solve(X.T @ X, X.T @ b)


class TestAdfRegression:
    def test_alternating_series_rho_minus_two(self):
        y = np.array([1.0, -1.0] * 40)
        reg = adf_regression(y, AdfSpec(Deterministic.CONSTANT), lag=0)
        assert reg.rho == pytest.approx(-2.0, abs=1e-12)
        assert reg.ssr == pytest.approx(0.0, abs=1e-20)

    def test_linear_trend_design_is_singular(self):
        y = np.arange(100.0)
        with pytest.raises(SingularDesignError):
            adf_regression(y, AdfSpec(Deterministic.CONSTANT_TREND), lag=0)

    def test_constant_series_singular(self):
        with pytest.raises(SingularDesignError):
            adf_regression(np.full(60, 3.0), AdfSpec(Deterministic.CONSTANT), lag=0)

    @pytest.mark.parametrize("det,lag", [("c", 0), ("c", 3), ("ct", 2), ("n", 1)])
    def test_coefficients_match_normal_equations_oracle(self, det, lag):
        y = ar1(0.5, 500, seed=42)
        spec = AdfSpec(Deterministic(det))
        reg = adf_regression(y, spec, lag=lag)
        want = normal_equations_oracle(y, det, lag)
        np.testing.assert_allclose(reg.params, want, atol=1e-8)


class TestAdfTest:
    def test_needs_thirty_obs(self):
        with pytest.raises(ValueError, match="at least 30"):
            adf_test(np.random.default_rng(0).standard_normal(20))

    def test_default_max_lag_rule(self):
        assert default_max_lag(100) == 12
        assert default_max_lag(500) == int(np.floor(12 * 5 ** 0.25))

    def test_scale_invariance(self):
        y = ar1(0.7, 300, seed=1)
        a = adf_test(y, AdfSpec())
        b = adf_test(1e6 * y, AdfSpec())
        assert a.t_stat == pytest.approx(b.t_stat, abs=1e-10)
        assert a.chosen_lag == b.chosen_lag

    def test_location_invariance_with_constant(self):
        y = ar1(0.7, 300, seed=2)
        a = adf_test(y, AdfSpec())
        b = adf_test(y + 100.0, AdfSpec())
        assert a.t_stat == pytest.approx(b.t_stat, abs=1e-10)

    def test_stationary_flag_consistency(self):
        y = ar1(0.3, 400, seed=3)
        res = adf_test(y, AdfSpec())
        assert res.stationary_at_5pct == (res.t_stat < res.crit_5)
        assert 0 < res.p_value <= 1

    def test_fixed_lag_selection(self):
        y = ar1(0.5, 200, seed=4)
        res = adf_test(y, AdfSpec(max_lag=5, lag_selection=LagSelection.FIXED))
        assert res.chosen_lag == 5

    def test_pvalue_clamped_flag(self):
        y = np.random.default_rng(5).standard_normal(600)
        res = adf_test(y, AdfSpec())
        assert res.p_value == pytest.approx(1e-4)
        assert res.p_clamped


class TestAgainstStatsmodels:
    """The installed statsmodels is an independent reference for the whole
    chain: regression, AIC lag selection, MacKinnon p-values and critical
    values."""

    @pytest.mark.parametrize("det,sm_reg", [(Deterministic.CONSTANT, "c"),
                                            (Deterministic.CONSTANT_TREND, "ct"),
                                            (Deterministic.NONE, "n")])
    @pytest.mark.parametrize("seed,phi", [(10, 1.0), (11, 0.6), (12, 0.95)])
    def test_full_agreement(self, det, sm_reg, seed, phi):
        from statsmodels.tsa.stattools import adfuller

        if phi == 1.0:
            y = np.cumsum(np.random.default_rng(seed).standard_normal(400))
        else:
            y = ar1(phi, 400, seed=seed)
        maxlag = 8
        stat, pval, lag, nobs, crit, _ = adfuller(y, maxlag=maxlag,
                                                  regression=sm_reg, autolag="AIC")
        mine = adf_test(y, AdfSpec(det, max_lag=maxlag))
        assert mine.t_stat == pytest.approx(stat, abs=1e-8)
        assert mine.chosen_lag == lag
        assert mine.nobs == nobs
        assert mine.p_value == pytest.approx(np.clip(pval, 1e-4, 0.9999), abs=1e-8)
        assert mine.crit_1 == pytest.approx(crit["1%"], abs=1e-10)
        assert mine.crit_5 == pytest.approx(crit["5%"], abs=1e-10)
        assert mine.crit_10 == pytest.approx(crit["10%"], abs=1e-10)

    def test_mackinnon_surfaces_match(self):
        from statsmodels.tsa.adfvalues import mackinnoncrit, mackinnonp

        for det, reg in [(Deterministic.CONSTANT, "c"),
                         (Deterministic.CONSTANT_TREND, "ct"),
                         (Deterministic.NONE, "n")]:
            for stat in (-25.0, -5.0, -2.8, -1.0, 0.5, 3.0):
                assert mackinnon_pvalue(stat, det) == pytest.approx(
                    mackinnonp(stat, regression=reg), abs=1e-12)
            for nobs in (50, 365, 1000):
                assert mackinnon_crit(det, nobs) == pytest.approx(
                    mackinnoncrit(regression=reg, nobs=nobs), abs=1e-12)


class TestMonteCarloSmoke:
    """Small-sample sanity versions; the full calibration runs in acceptance."""

    def test_size_on_random_walks(self):
        rejections = 0
        n = 200
        for seed in range(n):
            y = np.cumsum(np.random.default_rng((21, seed)).standard_normal(300))
            res = adf_test(y, AdfSpec(max_lag=4))
            rejections += res.t_stat < res.crit_5
        assert 0.01 <= rejections / n <= 0.10

    def test_power_on_white_noise(self):
        rejections = 0
        n = 100
        for seed in range(n):
            y = np.random.default_rng((22, seed)).standard_normal(300)
            res = adf_test(y, AdfSpec(max_lag=4))
            rejections += res.t_stat < res.crit_5
        assert rejections / n >= 0.95
