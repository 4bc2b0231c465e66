import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dasmc import numerics
from dasmc.errors import SingularCovarianceError


class TestCholesky:
    def test_factorizes_spd(self, rng):
        a = rng.standard_normal((4, 4))
        spd = a @ a.T + 4 * np.eye(4)
        low = numerics.cholesky_spd(spd)
        assert np.allclose(low @ low.T, spd, atol=1e-12)

    def test_rejects_rank_deficient(self):
        v = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularCovarianceError):
            numerics.cholesky_spd(v)

    def test_solve_roundtrip(self, rng):
        a = rng.standard_normal((5, 5))
        spd = a @ a.T + 5 * np.eye(5)
        x = rng.standard_normal(5)
        low = numerics.cholesky_spd(spd)
        assert np.allclose(numerics.solve_cholesky(low, spd @ x), x, atol=1e-9)


class TestGammaCcdf:
    def test_at_zero(self):
        assert numerics.gamma_ccdf(0.0, 2.5, 1.3) == 1.0

    def test_exponential_tail(self):
        assert numerics.gamma_ccdf(3.0, 1.0, 1.0) == pytest.approx(math.exp(-3.0), abs=1e-12)

    def test_integer_shape_poisson_sum(self):
        # oracle: P(Gamma(4,1) > 3) = exp(-3) sum_{k<4} 3^k/k! = 13 exp(-3)
        oracle = math.exp(-3.0) * (1 + 3 + 4.5 + 4.5)
        assert numerics.gamma_ccdf(3.0, 4.0, 1.0) == pytest.approx(oracle, abs=1e-10)

    def test_against_quadrature(self):
        # midpoint quadrature of the density, fine grid
        a, b, x = 2.7, 1.9, 1.3
        m = 2_000_000
        t = (np.arange(m) + 0.5) * (x / m)
        pdf = b**a * t ** (a - 1) * np.exp(-b * t) / math.gamma(a)
        lower = float(np.sum(pdf) * (x / m))
        assert numerics.gamma_ccdf(x, a, b) == pytest.approx(1 - lower, abs=1e-8)

    def test_monte_carlo(self, rng):
        a, b, x = 4.0, 1.0, 3.0
        draws = rng.gamma(a, 1.0 / b, size=10_000_000)
        est = float(np.mean(draws >= x))
        se = math.sqrt(est * (1 - est) / draws.size)
        assert abs(numerics.gamma_ccdf(x, a, b) - est) < 4 * se

    def test_recurrence(self):
        # Q(a+1, x) = Q(a, x) + x^a e^-x / Gamma(a+1), at unit rate
        for a in (0.4, 1.7, 6.2):
            for x in (0.3, 2.0, 9.5):
                lhs = numerics.gamma_ccdf(x, a + 1.0, 1.0)
                rhs = numerics.gamma_ccdf(x, a, 1.0) + math.exp(
                    a * math.log(x) - x - math.lgamma(a + 1.0)
                )
                assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_strictly_decreasing_in_x(self):
        xs = np.linspace(0.01, 20.0, 50)
        vals = [numerics.gamma_ccdf(x, 3.0, 0.7) for x in xs]
        assert np.all(np.diff(vals) < 0)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            numerics.gamma_ccdf(-1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            numerics.gamma_ccdf(1.0, 0.0, 1.0)


class TestChiSquareQuantile:
    def test_paper_threshold(self):
        d = numerics.chi_square_upper_quantile(0.8, 5)
        assert 2.33 <= d <= 2.35

    def test_exponential_median(self):
        # chi-square(2) is Exponential(1/2): upper-median at 2 ln 2
        d = numerics.chi_square_upper_quantile(0.5, 2)
        assert d == pytest.approx(2 * math.log(2), abs=1e-8)

    def test_normal_two_sided(self):
        # dof=1: P(Z^2 > z*^2) = 0.05 at z* = 1.959963985...
        d = numerics.chi_square_upper_quantile(0.05, 1)
        assert d == pytest.approx(1.959963985 ** 2, abs=1e-6)


class TestGammaMle:
    def test_recovers_parameters(self, rng):
        draws = rng.gamma(3.0, 1.0 / 2.0, size=200_000)
        shape, rate = numerics.gamma_mle(draws)
        assert shape == pytest.approx(3.0, rel=0.02)
        assert rate == pytest.approx(2.0, rel=0.02)

    def test_matches_profile_stationarity(self, rng):
        draws = rng.gamma(1.4, 2.0, size=5_000)
        shape, rate = numerics.gamma_mle(draws)
        target = math.log(float(np.mean(draws))) - float(np.mean(np.log(draws)))
        assert math.log(shape) - numerics.digamma(shape) == pytest.approx(target, abs=1e-8)
        assert rate == pytest.approx(shape / float(np.mean(draws)), rel=1e-10)


def test_digamma_trigamma_known_values():
    euler = 0.5772156649015329
    assert numerics.digamma(1.0) == pytest.approx(-euler, abs=1e-10)
    assert numerics.digamma(0.5) == pytest.approx(-euler - 2 * math.log(2), abs=1e-10)
    assert numerics.trigamma(1.0) == pytest.approx(math.pi**2 / 6, abs=1e-10)
    # finite difference of digamma
    h = 1e-6
    fd = (numerics.digamma(2.3 + h) - numerics.digamma(2.3 - h)) / (2 * h)
    assert numerics.trigamma(2.3) == pytest.approx(fd, abs=1e-6)


class TestOls:
    def test_exact_recovery(self, rng):
        x = rng.standard_normal((40, 3))
        beta = np.array([1.0, -2.0, 0.5])
        assert np.allclose(numerics.ols(x, x @ beta), beta, atol=1e-10)

    def test_rank_deficient_fallback(self, rng):
        x = rng.standard_normal((20, 2))
        x = np.column_stack([x, x[:, 0]])
        beta = numerics.ols(x, x[:, 0])
        assert np.allclose(x @ beta, x[:, 0], atol=1e-8)


class TestLasso:
    def test_zero_penalty_matches_ols(self, rng):
        x = rng.standard_normal((60, 4))
        y = x @ np.array([1.0, 0.0, -0.7, 2.0]) + 0.01 * rng.standard_normal(60)
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        beta = numerics.lasso_path(x, y, np.array([1e-10]))[0]
        assert np.allclose(beta, numerics.ols(xc, yc), atol=1e-6)

    def test_full_shrinkage_at_lambda_max(self, rng):
        x = rng.standard_normal((50, 6))
        y = x @ rng.standard_normal(6) + 0.1 * rng.standard_normal(50)
        lam_max = numerics.lasso_lambda_max(x, y)
        beta = numerics.lasso_path(x, y, np.array([lam_max * (1 + 1e-12)]))[0]
        assert np.all(beta == 0.0)

    def test_penalized_objective_beats_zero(self, rng):
        x = rng.standard_normal((80, 5))
        y = x @ np.array([2.0, 0, 0, -1.0, 0]) + 0.05 * rng.standard_normal(80)
        lam = 5.0
        beta = numerics.lasso_path(x, y, np.array([lam]))[0]
        xc, yc = x - x.mean(axis=0), y - y.mean()
        sd = xc.std(axis=0)

        def objective(b):
            return float(np.sum((yc - xc @ b) ** 2) + lam * np.sum(np.abs(b * sd)))

        assert objective(beta) <= objective(np.zeros(5)) + 1e-9

    def test_cv_recovers_sparse_signal(self, rng):
        x = rng.standard_normal((120, 10))
        truth = np.zeros(10)
        truth[[1, 6]] = (1.5, -2.0)
        y = x @ truth + 0.05 * rng.standard_normal(120)
        coef, intercept, lam = numerics.lasso_cv(x, y, folds=5, rng=rng)
        assert np.allclose(coef, truth, atol=0.1)
        assert lam > 0


class TestSimplex:
    def test_quadratic_minimum(self):
        res = numerics.simplex_minimize(
            lambda v: float((v[0] - 1.0) ** 2 + 2 * (v[1] + 0.5) ** 2),
            np.zeros(2), scale=0.5, max_evals=600,
        )
        assert np.allclose(res.x, [1.0, -0.5], atol=1e-4)
        assert res.converged

    def test_never_worse_than_start(self):
        f = lambda v: float(np.sum(np.abs(v)) + 1.0)
        res = numerics.simplex_minimize(f, np.zeros(3), max_evals=50)
        assert res.fx <= f(np.zeros(3))

    def test_respects_budget(self):
        calls = []
        f = lambda v: (calls.append(1), float(np.sum(v**2)))[1]
        numerics.simplex_minimize(f, np.ones(4), max_evals=100, ftol=0.0, xtol=0.0)
        assert len(calls) <= 100 + 5


class TestDft:
    def test_constant_series(self):
        out = numerics.dft(np.ones(8))
        assert out[0] == pytest.approx(8.0)
        assert np.allclose(out[1:], 0.0, atol=1e-12)

    def test_unit_impulse_flat(self):
        x = np.zeros(16)
        x[0] = 1.0
        assert np.allclose(np.abs(numerics.dft(x)), 1.0, atol=1e-12)

    @pytest.mark.parametrize("n", [8, 13, 100, 1000])
    def test_matches_direct_summation(self, rng, n):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        k = np.arange(n)
        direct = np.exp(-2j * np.pi * np.outer(k, k) / n) @ x
        assert np.max(np.abs(numerics.dft(x) - direct)) < 1e-8

    @pytest.mark.parametrize("n", [4, 12, 37, 256])
    def test_inverse_roundtrip(self, rng, n):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        back = numerics.idft(numerics.dft(x))
        assert np.max(np.abs(back - x)) < 1e-9 * max(1.0, np.max(np.abs(x)))


class TestKmeans:
    def test_single_blob_stays_one_cluster(self, rng):
        x = rng.standard_normal((300, 2))
        model = numerics.kmeans_ch(x, k_max=5, rng=rng)
        assert model.k == 1

    def test_two_planted_blobs(self, rng):
        x = np.vstack([
            np.array([10.0, 0.0]) + 0.1 * rng.standard_normal((150, 2)),
            np.array([-10.0, 0.0]) + 0.1 * rng.standard_normal((150, 2)),
        ])
        model = numerics.kmeans_ch(x, k_max=5, rng=rng)
        assert model.k == 2
        centers = model.centers[np.argsort(model.centers[:, 0])]
        assert np.allclose(centers[0], [-10.0, 0.0], atol=0.05)
        assert np.allclose(centers[1], [10.0, 0.0], atol=0.05)

    def test_three_blobs_ch_selects_three(self):
        hits = 0
        for seed in range(100):
            r = np.random.default_rng(seed)
            x = np.vstack([
                c + 0.2 * r.standard_normal((60, 2))
                for c in ([0.0, 0.0], [8.0, 8.0], [-8.0, 8.0])
            ])
            model = numerics.kmeans_ch(x, k_max=6, rng=r)
            hits += model.k == 3
        assert hits >= 95

    def test_assignments_nearest_center(self, rng):
        x = rng.standard_normal((100, 3))
        model = numerics.kmeans_ch(x, k_max=4, rng=rng)
        d2 = np.sum((x[:, None, :] - model.centers[None]) ** 2, axis=2)
        assert np.array_equal(model.assignments, np.argmin(d2, axis=1))


class TestModeDemeanedCovariance:
    def test_unimodal_matches_plain(self, rng):
        x = rng.standard_normal((400, 3))
        w = np.full(400, 1 / 400)
        plain = numerics.weighted_covariance_checked(x, w)
        demeaned = numerics.mode_demeaned_covariance(x, w, rng)
        assert np.array_equal(plain, demeaned)

    def test_two_modes_not_inflated(self, rng):
        a = np.diag([0.5, 0.1])
        half = rng.multivariate_normal([0, 0], a, size=2000)
        x = np.vstack([half[:1000] + [20, 0], half[1000:] - [20, 0]])
        w = np.full(2000, 1 / 2000)
        cov = numerics.mode_demeaned_covariance(x, w, rng)
        se = 3 * np.sqrt(2.0 / 1000) * np.max(a)
        assert abs(cov[0, 0] - a[0, 0]) < 5 * se
        assert cov[0, 0] < 10  # between-mode spread (~400) must not leak in

    def test_degenerate_within_mode_raises(self, rng):
        x = np.vstack([
            np.column_stack([np.full(50, -5.0), np.zeros(50)]),
            np.column_stack([np.full(50, 5.0), np.zeros(50)]),
        ])
        x[:, 0] += 0.01 * rng.standard_normal(100)
        w = np.full(100, 0.01)
        with pytest.raises(SingularCovarianceError):
            numerics.mode_demeaned_covariance(x, w, rng)


@given(st.lists(st.floats(0.1, 50.0), min_size=2, max_size=30))
def test_gamma_ccdf_monotone_in_shape_mean_scaled(xs):
    # increasing the shape at fixed rate increases the mean, so the CCDF
    # at a fixed point never decreases
    xs = sorted(xs)
    vals = [numerics.gamma_ccdf(2.0, a, 1.0) for a in xs]
    assert np.all(np.diff(vals) >= -1e-12)
