import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cucgarch.diagnostics import (
    cross_product_Q,
    cross_product_series,
    cross_product_table,
    ljung_box,
    q_pvalue_bootstrap,
    sample_autocorrelation,
    significance_flag,
    standardized_units,
)
from cucgarch.errors import DataError
from cucgarch.reconstruction import reconstruct_H


def brute_acf(x, K):
    n = len(x)
    m = sum(x) / n
    c0 = sum((v - m) ** 2 for v in x)
    return [sum((x[t] - m) * (x[t - k] - m) for t in range(k, n)) / c0 for k in range(1, K + 1)]


def ar1(phi, n, seed):
    r = np.random.default_rng(seed)
    e = r.standard_normal(n + 200)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, e.size):
        x[t] = phi * x[t - 1] + e[t]
    return x[200:]


class TestAutocorrelation:
    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        x = np.random.default_rng(seed).standard_normal(60)
        np.testing.assert_allclose(sample_autocorrelation(x, 7), brute_acf(x.tolist(), 7), atol=1e-12)

    def test_statsmodels_acf(self):
        from statsmodels.tsa.stattools import acf

        x = ar1(0.4, 500, 3)
        np.testing.assert_allclose(sample_autocorrelation(x, 12), acf(x, nlags=12, fft=False)[1:], atol=1e-12)

    def test_errors(self):
        with pytest.raises(DataError):
            sample_autocorrelation(np.ones(20), 3)
        with pytest.raises(DataError):
            sample_autocorrelation(np.arange(5.0), 5)


class TestLjungBox:
    def test_statsmodels_oracle(self):
        from statsmodels.stats.diagnostic import acorr_ljungbox

        for seed in range(4):
            x = ar1(0.2 * seed, 400, seed)
            ref = float(acorr_ljungbox(x, lags=[10])["lb_stat"].iloc[0])
            assert ljung_box(x, 10) == pytest.approx(ref, rel=1e-10)

    def test_strong_dependence(self):
        assert ljung_box(ar1(0.9, 1000, 0), 10) > 100

    def test_null_calibration(self):
        # under i.i.d. noise Q(10) is close to chi2_10: the 5% tail is hit about 5% of the time
        r = np.random.default_rng(7)
        qs = np.array([ljung_box(r.standard_normal(1000), 10) for _ in range(1000)])
        rate = np.mean(qs > stats.chi2.ppf(0.95, 10))
        assert 0.03 <= rate <= 0.07
        assert qs.mean() == pytest.approx(10, abs=0.5)

    @given(st.floats(1e-3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_affine_invariance(self, a, b, seed):
        x = np.random.default_rng(seed).standard_normal(200)
        assert ljung_box(a * x + b, 5) == pytest.approx(ljung_box(x, 5), rel=1e-7)


class TestQBootstrap:
    def test_pvalue_grid_and_determinism(self):
        x = np.random.default_rng(0).standard_normal(300)
        a = q_pvalue_bootstrap(x, K=5, B=39, seed=3)
        b = q_pvalue_bootstrap(x, K=5, B=39, seed=3)
        assert a.p_value == b.p_value and np.array_equal(a.Q_star, b.Q_star)
        assert a.p_value * 39 == pytest.approx(round(a.p_value * 39))
        assert a.Q == pytest.approx(ljung_box(x, 5))
        assert a.p_value == np.count_nonzero(a.Q_star > a.Q) / 39

    def test_detects_dependence(self):
        res = q_pvalue_bootstrap(ar1(0.8, 500, 1), K=10, B=39, seed=0)
        assert res.p_value == 0.0

    def test_small_b(self):
        with pytest.raises(DataError):
            q_pvalue_bootstrap(np.arange(50.0), B=10)


class TestCrossProducts:
    def test_units_and_series(self, rng):
        W = rng.standard_normal((3, 3))
        var = rng.uniform(0.5, 2, (30, 3))
        H = reconstruct_H(W, var).H
        Y = rng.standard_normal((30, 3))
        u = standardized_units(Y, H)
        np.testing.assert_allclose(u[:, 1], Y[:, 1] / np.sqrt(H[:, 1, 1]))
        C = cross_product_series(Y, H, 0, 2)
        rho = H[:, 0, 2] / np.sqrt(H[:, 0, 0] * H[:, 2, 2])
        np.testing.assert_allclose(C, u[:, 0] * u[:, 2] - rho)
        np.testing.assert_allclose(cross_product_series(Y, H, 1, 1), u[:, 1] ** 2 - 1)

    def test_q_formula(self, rng):
        H = np.broadcast_to(np.eye(2), (200, 2, 2)).copy()
        Y = rng.standard_normal((200, 2))
        C = Y[:, 0] * Y[:, 1]
        expect = 200 * sum(r**2 for r in brute_acf(C.tolist(), 4))
        assert cross_product_Q(Y, H, 0, 1, 4) == pytest.approx(expect, rel=1e-12)

    def test_table_keys_and_pvalues(self, fitted, reference_sim):
        panel = reference_sim[0]
        H = reconstruct_H(fitted.model, fitted.cuc_var).H
        tab = cross_product_table(panel.values - panel.values.mean(0), H, M=10)
        assert set(tab.Q) == {(1, 1, 10), (1, 2, 10), (1, 3, 10), (2, 2, 10), (2, 3, 10), (3, 3, 10)}
        for k, q in tab.Q.items():
            assert tab.p_values[k] == pytest.approx(stats.chi2.sf(q, 10))
            assert tab.flags[k] == significance_flag(tab.p_values[k])

    def test_bad_inputs(self, rng):
        H = np.broadcast_to(np.eye(2), (10, 2, 2)).copy()
        with pytest.raises(DataError):
            cross_product_series(rng.standard_normal((10, 2)), H, 0, 2)
        with pytest.raises(DataError):
            standardized_units(np.ones((10, 3)), H)
        with pytest.raises(DataError):
            cross_product_Q(rng.standard_normal((10, 2)), H, 0, 1, 0)


@pytest.mark.parametrize("p,flag", [(0.001, "***"), (0.0099, "***"), (0.01, "**"), (0.049, "**"), (0.05, "*"), (0.0999, "*"), (0.1, ""), (0.7, "")])
def test_flags(p, flag):
    assert significance_flag(p) == flag
