import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import cucgarch.bootstrap as bs
from conftest import random_orthogonal
from cucgarch.bootstrap import (
    BootConfig,
    BootstrapDraws,
    confidence_set_A,
    draw_bootstrap_sample,
    existence_test,
    in_confidence_set,
    kth_largest,
    param_intervals,
    rank_index,
    residual_pools,
    run_bootstrap,
)
from cucgarch.cuc import CucConfig, d_distance
from cucgarch.errors import ConvergenceError, CucError, DataError
from cucgarch.garch import ExtGarchParams


class _Stub:
    def __init__(self, A, components):
        self.A_hat = A
        self.components = components


def _iid_model(A):
    d = A.shape[0]
    return _Stub(A, [ExtGarchParams.standard(j, d, 0.0, 0.0) for j in range(d)])


def _fast(B=20, **kw):
    return BootConfig(B=B, cuc=CucConfig(restarts=2), **kw)


class TestResample:
    def test_pools_standardized(self, fitted):
        pools = residual_pools(fitted.model, fitted.Z)
        for e in pools:
            assert e.size == fitted.Z.shape[0] - fitted.model.nu
            assert abs(e.mean()) < 1e-12 and e.std() == pytest.approx(1.0)

    def test_degenerate_model_moments(self, rng):
        # alpha = beta = 0 turns the bootstrap into plain i.i.d. resampling of the pools
        A = random_orthogonal(rng, 3)
        pools = [(lambda e: (e - e.mean()) / e.std())(rng.standard_normal(500)) for _ in range(3)]
        Xs, Zs = draw_bootstrap_sample(_iid_model(A), pools, 100_000, seed=1)
        assert Xs.shape == (100_000, 3)
        np.testing.assert_allclose(Zs.mean(0), 0, atol=0.015)
        np.testing.assert_allclose(np.cov(Zs, rowvar=False), np.eye(3), atol=0.015)
        np.testing.assert_allclose(np.cov(Xs, rowvar=False), A @ A.T, atol=0.015)
        np.testing.assert_allclose(Xs, Zs @ A.T, atol=1e-14)
        for j in range(3):
            assert set(np.unique(Zs[:, j])) <= set(pools[j])

    def test_unit_long_run_variance(self, fitted):
        pools = residual_pools(fitted.model, fitted.Z)
        _, Zs = draw_bootstrap_sample(fitted.model, pools, 800, burn_in=300, seed=4)
        # the conditional variance of each bootstrap CUC is the model recursion
        for j, p in enumerate(fitted.model.components):
            assert Zs[:, j].var() == pytest.approx(1.0, abs=0.35)

    def test_deterministic(self, fitted):
        pools = residual_pools(fitted.model, fitted.Z)
        a = draw_bootstrap_sample(fitted.model, pools, 200, seed=9)[0]
        b = draw_bootstrap_sample(fitted.model, pools, 200, seed=9)[0]
        c = draw_bootstrap_sample(fitted.model, pools, 200, seed=10)[0]
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_preconditions(self, fitted):
        pools = residual_pools(fitted.model, fitted.Z)
        with pytest.raises(DataError):
            draw_bootstrap_sample(fitted.model, pools, 100, burn_in=-1)
        with pytest.raises(DataError):
            draw_bootstrap_sample(fitted.model, pools, 0)
        with pytest.raises(DataError):
            draw_bootstrap_sample(fitted.model, pools[:2], 100)


class TestRanks:
    @pytest.mark.parametrize("B,alpha,k", [(99, 0.05, 4), (99, 0.10, 9), (99, 0.01, 1), (199, 0.05, 9), (100, 0.05, 5)])
    def test_rank_index(self, B, alpha, k):
        assert rank_index(B, alpha) == k

    def test_kth_largest(self):
        assert kth_largest(np.array([3.0, 1.0, 2.0, 5.0]), 2) == 3.0

    def test_percentile_oracle(self):
        v = np.random.default_rng(0).permutation(np.arange(1.0, 101.0))
        assert param_intervals({"x": v}, 0.10)["x"] == (5.0, 95.0)

    def test_identical_draws(self):
        assert param_intervals({"b": np.full(50, 0.7)}, 0.10)["b"] == (0.7, 0.7)

    def test_interval_b_too_small(self):
        with pytest.raises(DataError):
            param_intervals({"x": np.arange(19.0)}, 0.10)
        with pytest.raises(DataError):
            confidence_set_A(np.arange(9.0), 0.10)

    @given(st.integers(20, 400), st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_nesting(self, B, seed):
        D = np.random.default_rng(seed).uniform(0, 0.5, B)
        c01, c05, c10 = (confidence_set_A(D, a) if B >= round(1 / a) else np.inf for a in (0.01, 0.05, 0.10))
        assert c01 >= c05 >= c10
        lo10, hi10 = param_intervals({"x": D}, 0.10)["x"]
        lo05, hi05 = param_intervals({"x": D}, 0.05)["x"] if B >= 40 else (-np.inf, np.inf)
        assert lo05 <= lo10 <= hi10 <= hi05


class TestConfidenceSet:
    def test_membership(self, rng):
        A = random_orthogonal(rng, 3)
        assert in_confidence_set(A, A, 0.0)
        P = np.eye(3)[[2, 0, 1]] * np.array([1, -1, -1])
        assert in_confidence_set(A, A @ P, 0.0)
        B = random_orthogonal(rng, 3)
        assert in_confidence_set(A, B, 0.05) == (d_distance(A, B) <= 0.05)


class TestRunBootstrap:
    def test_deterministic_and_shapes(self, fitted):
        pools = residual_pools(fitted.model, fitted.Z)
        cfg = _fast(B=5, refit_garch=True)
        X = fitted.X[:400]
        a = run_bootstrap(X, fitted.model, pools, cfg)
        b = run_bootstrap(X, fitted.model, pools, cfg)
        np.testing.assert_array_equal(a.psi_star, b.psi_star)
        np.testing.assert_array_equal(a.D_star, b.D_star)
        assert a.psi_star.shape == (5,) and a.failures == 0
        assert {"gamma1", "alpha1", "beta1", "beta3"} <= set(a.theta)
        for k, v in a.theta.items():
            np.testing.assert_array_equal(v, b.theta[k])
        assert np.all((a.D_star >= 0) & (a.D_star <= 1))

    def test_b_validation(self, fitted):
        pools = residual_pools(fitted.model, fitted.Z)
        with pytest.raises(DataError):
            run_bootstrap(fitted.X, fitted.model, pools, BootConfig(B=0))
        with pytest.raises(DataError):
            existence_test(fitted.X, fitted.model, pools, BootConfig(B=18))

    def test_retry_then_abort(self, fitted, monkeypatch):
        pools = residual_pools(fitted.model, fitted.Z)
        real = bs.estimate_cuc
        calls = {"n": 0}

        def flaky(X, balls, config):
            calls["n"] += 1
            if calls["n"] % 2 == 1:
                raise CucError("boom")
            return real(X, balls, config)

        monkeypatch.setattr(bs, "estimate_cuc", flaky)
        out = run_bootstrap(fitted.X[:300], fitted.model, pools, _fast(B=4))
        assert out.failures == 0 and out.psi_star.size == 4

        def broken(X, balls, config):
            raise CucError("always")

        monkeypatch.setattr(bs, "estimate_cuc", broken)
        with pytest.raises(ConvergenceError):
            run_bootstrap(fitted.X[:300], fitted.model, pools, _fast(B=4))

    def test_existence_test_from_draws(self, fitted):
        stats = np.linspace(0.01, 0.2, 20)
        draws = BootstrapDraws(stats, np.zeros(20), {}, 0, 20, 0)
        res = existence_test(fitted.X, fitted.model, [], _fast(B=20), draws=draws, balls=fitted.balls)
        obs = res.observed
        assert obs == pytest.approx(fitted.model.objective, rel=1e-9, abs=1e-12)
        assert res.p_value == np.count_nonzero(stats >= obs) / 20
        assert res.c_alpha[0.05] == kth_largest(stats, 1)
        assert res.c_alpha[0.10] == kth_largest(stats, 2)
        assert res.reject[0.10] == (obs > res.c_alpha[0.10])


def test_degenerate_model_matches_iid_reconstructions(rng):
    # with alpha = beta = 0 the bootstrap panels are i.i.d. reconstructions A Z with
    # Z resampled from the pools, so Psi* should look like Psi on fresh i.i.d. panels
    from cucgarch.cuc import build_ball_family, estimate_cuc
    from cucgarch.data_io import ReturnPanel, whiten

    A = random_orthogonal(rng, 3)
    model = _iid_model(A)
    pools = [(lambda e: (e - e.mean()) / e.std())(rng.standard_normal(300)) for _ in range(3)]
    draws = run_bootstrap(np.zeros((300, 3)), model, pools, _fast(B=40))
    ref = []
    for s in range(40):
        Xp, _ = whiten(ReturnPanel(np.random.default_rng(s).standard_normal((300, 3)) @ A.T))
        X = Xp.values
        ref.append(estimate_cuc(X, build_ball_family(X), CucConfig(restarts=2, seed=s)).value)
    lo, hi = np.percentile(ref, [5, 95])
    assert lo <= np.median(draws.psi_star) <= hi
