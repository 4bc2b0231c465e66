import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dasmc import paths
from dasmc.errors import CacheMissError


class TestTempering:
    def test_reduces_to_power_likelihood(self):
        path = paths.tempering()
        lp, lf = -1.3, -7.0
        for g in (0.0, 0.3, 1.0):
            assert path.log_target(g, lp, lf, None) == pytest.approx(lp + g * lf)

    def test_requires_full_when_positive(self):
        path = paths.tempering()
        with pytest.raises(CacheMissError):
            path.log_target(0.5, 0.0, None, None)
        assert path.log_target(0.0, -2.0, None, None) == pytest.approx(-2.0)

    def test_required_caches(self):
        path = paths.tempering()
        assert path.required_caches(0.3) == {"prior", "full"}
        assert path.required_caches(1.0) == {"full"}
        assert path.required_caches(0.0) == {"prior"}

    def test_gamma_out_of_range(self):
        with pytest.raises(ValueError):
            paths.tempering().log_target(1.5, 0.0, 0.0, None)


class TestSurrogateFirst:
    def test_table_of_representative_temperatures(self):
        lam = 0.3
        path = paths.surrogate_first(lam)
        lp, lf, ls = -0.7, -11.0, -5.0
        # gamma 0: initial distribution only
        assert path.log_target(0.0, lp, lf, ls) == pytest.approx(lp)
        # gamma 0.5: p0^0.5 * surrogate-posterior^(0.5 lam)
        assert path.log_target(0.5, lp, lf, ls) == pytest.approx(
            0.5 * lp + 0.5 * lam * (ls + lp)
        )
        # gamma 1: surrogate posterior to the lam
        assert path.log_target(1.0, lp, lf, ls) == pytest.approx(lam * (ls + lp))
        # gamma 1.5: surrogate^(0.5 lam) * full-posterior^0.5
        assert path.log_target(1.5, lp, lf, ls) == pytest.approx(
            0.5 * lam * (ls + lp) + 0.5 * (lf + lp)
        )
        # gamma 2: full posterior
        assert path.log_target(2.0, lp, lf, ls) == pytest.approx(lf + lp)

    def test_required_caches(self):
        path = paths.surrogate_first(0.1)
        assert path.required_caches(0.5) == {"prior", "surrogate"}
        assert path.required_caches(2.0) == {"full"}
        assert path.required_caches(1.5) == {"surrogate", "full"}

    def test_no_full_needed_in_phase_one(self):
        path = paths.surrogate_first(0.1)
        for g in (0.0, 0.25, 0.5, 0.99, 1.0):
            assert path.coefficients(g)[2] == 0.0
            path.log_target(g, -1.0, None, -3.0)

    def test_phase_boundary(self):
        path = paths.surrogate_first(0.1)
        assert path.next_phase_end(0.0) == 1.0
        assert path.next_phase_end(0.7) == 1.0
        assert path.next_phase_end(1.0) == 2.0

    def test_lambda_warning(self):
        with pytest.warns(UserWarning):
            paths.surrogate_first(0.9)
        with pytest.raises(ValueError):
            paths.surrogate_first(0.0)

    @given(st.floats(0.0, 2.0), st.floats(0.01, 0.5))
    def test_continuous_in_gamma(self, g, lam):
        path = paths.surrogate_first(lam)
        lp, lf, ls = -0.7, -11.0, -5.0
        eps = 1e-7
        lo = max(0.0, g - eps)
        hi = min(2.0, g + eps)
        a = path.log_target(lo, lp, lf, ls)
        b = path.log_target(hi, lp, lf, ls)
        assert abs(b - a) < 1e-5


class TestSurrogateTempering:
    def test_never_requires_full(self):
        path = paths.surrogate_tempering(1.0)
        for g in (0.0, 0.4, 1.0):
            assert "full" not in path.required_caches(g)
            path.log_target(g, -1.0, None, -3.0)

    def test_early_terminal_keeps_prior_mass(self):
        # annealed to 0.01: the target is prior * surrogate^0.01
        path = paths.surrogate_tempering(0.01)
        lp, ls = -2.0, -9.0
        assert path.log_target(0.01, lp, None, ls) == pytest.approx(lp + 0.01 * ls)


class TestTemperedSurrogateInitial:
    def test_handoff_initial_distribution(self):
        # run seeded from a surrogate-only run annealed to 0.01
        path = paths.surrogate_first(0.01, init_surrogate_power=0.01)
        lp, ls = -2.0, -9.0
        assert path.log_target(0.0, lp, None, ls) == pytest.approx(lp + 0.01 * ls)
        assert "surrogate" not in path.required_caches(0.0)  # via p0, not the p~ factor
        assert path.coefficients(0.0)[1] == pytest.approx(0.01)

    def test_vectorized_over_particles(self):
        path = paths.tempering()
        lp = np.array([-1.0, -2.0])
        lf = np.array([-3.0, -4.0])
        out = path.log_target(0.5, lp, lf, None)
        assert np.allclose(out, lp + 0.5 * lf)
