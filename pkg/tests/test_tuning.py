import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dasmc import numerics, tuning
from dasmc.errors import ConfigError
from dasmc.tuning import CycleRecords, DiversificationConfig, TuningGrid


def make_records(log_r1, log_r, h=None, kernel="da", bypassed=None):
    log_r1 = np.asarray(log_r1, dtype=float)
    log_r = np.asarray(log_r, dtype=float)
    n = log_r1.shape[0]
    observed = ~np.isnan(log_r)
    return CycleRecords(
        h=np.ones(n) if h is None else np.asarray(h, dtype=float),
        jump=np.ones(n),
        log_r1=log_r1,
        log_r=log_r,
        stage1_accepted=observed,
        accepted=observed,
        bypassed=np.zeros(n, bool) if bypassed is None else bypassed,
        kernel=kernel,
    )


class TestAllocatePilot:
    def test_even_split(self, rng):
        groups = tuning.allocate_pilot(8, TuningGrid((0.1, 0.2, 0.3, 0.4)), rng)
        assert sorted(len(g) for g in groups) == [2, 2, 2, 2]
        assert sorted(np.concatenate(groups)) == list(range(8))

    def test_balanced_remainder(self, rng):
        groups = tuning.allocate_pilot(10, TuningGrid((0.1, 0.2, 0.3, 0.4)), rng)
        assert sorted(len(g) for g in groups) == [2, 2, 3, 3]

    def test_uniform_membership(self):
        hits = np.zeros(4)
        trials = 10_000
        for seed in range(trials):
            r = np.random.default_rng(seed)
            groups = tuning.allocate_pilot(10, TuningGrid((1, 2, 3, 4)), r)
            for g, idx in enumerate(groups):
                if 0 in idx:
                    hits[g] += 1
        freq = hits / trials
        se = math.sqrt(0.25 * 0.75 / trials)
        assert np.all(np.abs(freq - 0.25) < 4 * se)

    def test_small_group_warning(self, rng):
        with pytest.warns(UserWarning):
            tuning.allocate_pilot(30, TuningGrid(tuple(range(4))), rng)


class TestConditionalEsjd:
    def test_zero_alpha(self):
        assert tuning.conditional_esjd(4.0, 0.0) == 0.0

    def test_half(self):
        assert tuning.conditional_esjd(4.0, 0.5) == 2.0

    def test_rao_blackwell_identity(self, rng):
        # conditional ESJD averages to the realised squared jump
        n = 100_000
        jumps = rng.chisquare(3, n)
        alpha = np.minimum(1.0, np.exp(rng.normal(-0.5, 0.6, n)))
        realized = jumps * (rng.random(n) < alpha)
        cond = tuning.conditional_esjd(jumps, alpha)
        se = float(np.std(realized - cond, ddof=1) / math.sqrt(n))
        assert abs(realized.mean() - cond.mean()) < 3 * se


class TestPredictOverallAlpha:
    def test_exact_surrogate_recovers_identity(self, rng):
        log_r1 = rng.normal(-1.0, 1.0, 200)
        h = rng.choice([0.5, 1.0, 2.0], 200)
        records = make_records(log_r1, log_r1.copy(), h=h)
        model = tuning.fit_overall_alpha(records)
        assert model.kind == "regression"
        assert model.coef[0] == pytest.approx(0.0, abs=1e-8)
        assert model.coef[1] == pytest.approx(1.0, abs=1e-8)
        assert model.coef[2] == pytest.approx(0.0, abs=1e-8)

    def test_coefficient_recovery(self, rng):
        # planted log r = 0.5 log r1 - 0.1 h + tiny noise
        log_r1 = rng.normal(-1.0, 0.8, 500)
        h = rng.choice([0.3, 1.1, 2.2], 500)
        log_r = 0.5 * log_r1 - 0.1 * h + 1e-6 * rng.standard_normal(500)
        model = tuning.fit_overall_alpha(make_records(log_r1, log_r, h=h))
        assert model.coef[0] == pytest.approx(0.0, abs=1e-3)
        assert model.coef[1] == pytest.approx(0.5, abs=1e-3)
        assert model.coef[2] == pytest.approx(-0.1, abs=1e-3)

    def test_single_observation_falls_back(self):
        log_r1 = np.array([-1.0, -2.0, -0.5])
        log_r = np.array([np.nan, np.nan, -0.7])
        with pytest.warns(UserWarning):
            model = tuning.fit_overall_alpha(make_records(log_r1, log_r))
        assert model.kind == "fallback"
        assert model.alpha2_bar == pytest.approx(math.exp(-0.7 + 0.5))

    def test_predictions_lie_in_unit_interval(self, rng):
        log_r1 = rng.normal(0.0, 3.0, 400)
        log_r = 1.5 * log_r1 + 2.0 + rng.standard_normal(400)
        log_r[rng.random(400) < 0.4] = np.nan
        log_r1[:5] = -np.inf
        alphas, _ = tuning.predict_overall_alpha(
            make_records(log_r1, log_r, h=rng.random(400)))
        assert np.all((alphas >= 0.0) & (alphas <= 1.0))
        assert np.all(alphas[:5][np.isnan(log_r[:5])] == 0.0)

    def test_observed_records_use_exact_product(self):
        records = make_records([-0.5, 0.2], [-1.0, 0.1])
        alphas, _ = tuning.predict_overall_alpha(records)
        # min(1, r1) * min(1, r2)
        assert alphas[0] == pytest.approx(math.exp(-0.5) * math.exp(-0.5))
        assert alphas[1] == pytest.approx(1.0 * math.exp(0.1 - 0.2))

    def test_mh_records(self):
        records = make_records([np.nan, np.nan], [-math.log(2), 1.0], kernel="mh")
        alphas, model = tuning.predict_overall_alpha(records)
        assert model is None
        assert np.allclose(alphas, [0.5, 1.0])


class TestKStarMedian:
    def test_paper_threshold_example(self):
        samples = np.full(11, 0.8)
        assert tuning.k_star_median(samples, 2.34) == 3

    def test_median_equal_threshold(self):
        assert tuning.k_star_median(np.array([2.0, 2.0]), 2.0) == 1

    def test_midpoint_median(self):
        assert tuning.k_star_median(np.array([1.0, 2.0, 3.0, 4.0]), 5.0) == 2

    def test_zero_median_warns(self):
        with pytest.warns(UserWarning):
            assert tuning.k_star_median(np.zeros(5), 1.0, max_cycles=77) == 77


class TestKStarGamma:
    def test_exponential_case(self, rng):
        # unit exponentials: P(G(3,1) >= 3) = 0.4232 < 0.5 <= P(G(4,1) >= 3) = 0.6472
        samples = rng.exponential(1.0, 20_000)
        assert tuning.k_star_gamma(samples, 3.0, 0.5) == 4

    def test_tiny_threshold(self, rng):
        samples = rng.gamma(2.0, 1.0, 100)
        assert tuning.k_star_gamma(samples, 1e-12, 0.5) == 1

    def test_degenerate_limit_matches_median(self):
        # concentrated samples: the fitted gamma is near-deterministic
        samples = np.full(50, 0.7) + np.linspace(-1e-4, 1e-4, 50)
        k_gamma = tuning.k_star_gamma(samples, 2.34, 0.5)
        assert k_gamma == tuning.k_star_median(samples, 2.34)

    def test_needs_positive_samples(self):
        with pytest.raises(ValueError):
            tuning.k_star_gamma(np.zeros(10), 1.0, 0.5)

    def test_monotone_in_d_and_pmin(self, rng):
        samples = rng.gamma(1.5, 0.8, 500)
        ks_d = [tuning.k_star_gamma(samples, d, 0.5) for d in (0.5, 1.5, 3.0, 6.0)]
        assert all(a <= b for a, b in zip(ks_d, ks_d[1:]))
        ks_p = [tuning.k_star_gamma(samples, 2.0, p) for p in (0.2, 0.5, 0.8, 0.95)]
        assert all(a <= b for a, b in zip(ks_p, ks_p[1:]))


class TestKStarBootstrap:
    def test_constant_samples_exact(self, rng):
        samples = np.full(40, 0.75)
        assert tuning.k_star_bootstrap(samples, 2.4, 0.5, rng) == math.ceil(2.4 / 0.75)

    def test_threshold_below_min(self, rng):
        samples = rng.uniform(1.0, 2.0, 50)
        assert tuning.k_star_bootstrap(samples, 0.5, 0.5, rng) == 1

    def test_agrees_with_gamma_on_gamma_data(self):
        agree = 0
        for seed in range(100):
            r = np.random.default_rng(seed + 1000)
            shape = r.uniform(0.8, 4.0)
            rate = r.uniform(0.5, 3.0)
            d = r.uniform(0.5, 4.0) * shape / rate
            samples = r.gamma(shape, 1.0 / rate, 4_000)
            k_g = tuning.k_star_gamma(samples, d, 0.5)
            k_b = tuning.k_star_bootstrap(samples, d, 0.5, r, n_boot=4_000)
            agree += abs(k_g - k_b) <= 1
        assert agree >= 95

    def test_requires_enough_draws(self, rng):
        with pytest.raises(ValueError):
            tuning.k_star_bootstrap(np.ones(5), 1.0, 0.5, rng, n_boot=10)


class TestOneMove:
    def test_half_half(self):
        assert tuning.one_move_k(0.5, 0.5) == 1

    def test_small_alpha(self):
        # log(0.1) / log(0.9) = 21.85...
        assert tuning.one_move_k(0.1, 0.9) == 22

    def test_high_alpha(self):
        for p_min in (0.1, 0.5, 0.99):
            assert tuning.one_move_k(0.99, p_min) == 1

    def test_degenerate_alpha(self):
        assert tuning.one_move_k(1.0, 0.9) == 1
        with pytest.warns(UserWarning):
            assert tuning.one_move_k(0.0, 0.9, max_cycles=50) == 50

    def test_matches_geometric_monte_carlo(self):
        r = np.random.default_rng(42)
        checked = 0
        while checked < 50:
            alpha = r.uniform(0.05, 0.95)
            p_min = r.uniform(0.1, 0.95)
            k = tuning.one_move_k(alpha, p_min, max_cycles=10_000)
            # skip knife-edge configs the Monte Carlo cannot resolve
            gap = min(abs(1 - (1 - alpha) ** k - p_min),
                      abs(1 - (1 - alpha) ** max(k - 1, 1) - p_min))
            if gap < 5e-3:
                continue
            draws = r.geometric(alpha, size=1_000_000)
            cdf = np.cumsum(np.bincount(draws, minlength=k + 2)[1:]) / draws.size
            k_mc = int(np.searchsorted(cdf, p_min) + 1)
            assert k == k_mc
            checked += 1


class TestSelectPhi:
    def test_single_candidate(self):
        idx, costs = tuning.select_phi(np.array([3.0]), np.array([0.5]), 0.01, 1.0, "da")
        assert idx == 0

    def test_proposition_two_instance(self):
        medians = np.array([1.0, 2.0])
        k_cont = 2.34 / medians
        idx, _ = tuning.select_phi(k_cont, None, 0.01, 1.0, "mh", medians=medians)
        assert idx == 1

    def test_da_cost_arithmetic(self):
        k = np.array([3.0, 10.0])
        a1 = np.array([0.9, 0.05])
        idx, costs = tuning.select_phi(k, a1, 0.01, 1.0, "da")
        assert np.allclose(costs, [3 * (0.01 + 0.9), 10 * (0.01 + 0.05)])
        assert idx == 1

    def test_tie_breaks_toward_smaller_k_then_index(self):
        # equal costs 1.01: smaller k wins
        idx, costs = tuning.select_phi(np.array([2.0, 1.0]), np.array([0.495, 1.0]),
                                       0.01, 1.0, "da")
        assert costs[0] == pytest.approx(costs[1])
        assert idx == 1
        # full tie: first grid index wins
        idx, _ = tuning.select_phi(np.array([3.0, 3.0]), np.array([0.2, 0.2]),
                                   0.01, 1.0, "da")
        assert idx == 0

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            tuning.select_phi(np.array([]), np.array([]), 0.01, 1.0, "da")

    def test_proposition_two_random_reports(self):
        # generic cost minimisation under MH cost must equal argmax median
        r = np.random.default_rng(7)
        for _ in range(100):
            medians = r.uniform(0.05, 5.0, size=r.integers(2, 9))
            d = r.uniform(0.5, 5.0)
            idx, _ = tuning.select_phi(d / medians, None, 0.01, 1.0, "mh",
                                       medians=medians)
            assert idx == int(np.argmax(medians))


class TestEstimateCosts:
    def test_virtual_clock_exact(self):
        cost_s, cost_f = tuning.estimate_likelihood_costs(5.0, 5, 0.05, 5)
        assert (cost_s, cost_f) == (0.01, 1.0)

    def test_fallback_to_previous(self):
        with pytest.warns(UserWarning):
            cost_s, cost_f = tuning.estimate_likelihood_costs(0.0, 0, 0.5, 100)
        assert cost_f == 1.0  # nominal
        cost_s, cost_f = tuning.estimate_likelihood_costs(0.0, 0, 0.5, 100,
                                                          previous=(0.004, 2.5))
        assert cost_f == 2.5
        assert cost_s == pytest.approx(0.005)

    def test_wall_clock_measured(self):
        cost_s, cost_f = tuning.estimate_likelihood_costs(1.2, 4, 0.02, 8)
        assert cost_f == pytest.approx(0.3)
        assert cost_s == pytest.approx(0.0025)


class TestPropositionOne:
    # k * median(J1) <= median of k-fold sums, for iid positive samples
    @pytest.mark.parametrize("dist", ["exponential", "gamma31", "two-point"])
    def test_inequality_monte_carlo(self, dist):
        r = np.random.default_rng(abs(hash(dist)) % 2**32)
        n = 1_000_000
        if dist == "exponential":
            med1 = math.log(2.0)
            draw_sum = lambda k: r.gamma(k, 1.0, n)
        elif dist == "gamma31":
            lo, hi = 0.1, 20.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if numerics.gamma_ccdf(mid, 3.0, 1.0) > 0.5:
                    lo = mid
                else:
                    hi = mid
            med1 = 0.5 * (lo + hi)
            draw_sum = lambda k: r.gamma(3.0 * k, 1.0, n)
        else:
            # two-point with the median at the lower atom (most proposals jump
            # little, a minority far), the shape ESJD samples actually take
            a, b, q = 0.5, 3.0, 0.6  # P(J = a) = q >= 0.5, so median is a
            med1 = a

            def draw_sum(k):
                lows = r.binomial(k, q, n)
                return a * lows + b * (k - lows)

        for k in range(1, 51):
            sums = draw_sum(k)
            sums.sort()
            # distribution-free order-statistic bound for the true median
            upper_rank = min(n - 1, int(n / 2 + 3 * math.sqrt(n) / 2))
            assert k * med1 <= sums[upper_rank] + 1e-9, f"k={k} ({dist})"


@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_k_star_median_scales(med, d):
    samples = np.full(9, med)
    k = tuning.k_star_median(samples, d, max_cycles=10**9)
    assert k - 1 < d / med <= k or (k == 1 and d <= med)


def test_diversification_validation():
    with pytest.raises(AssertionError):
        DiversificationConfig(d=1.0, p_min=0.4, method="median")
    with pytest.raises(ConfigError):
        DiversificationConfig(d=1.0, p_min=0.5, method="nope")
    DiversificationConfig(d=1.0, p_min=0.8, method="gamma")
