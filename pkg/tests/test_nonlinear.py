"""Nonlinear sums: tilted marginals, both couplers, exact moments."""

import numpy as np
import pytest
from scipy import stats as sps

import oracles
from steinlab import nonlinear as nl
from steinlab.errors import (InfeasibleAdjustment, NotPositiveDefinite,
                             ZeroMass)
from steinlab.harness import StreamConfig
from steinlab.sizebias import DiscreteDistribution, verify_characterization
from steinlab.testfuncs import SmoothTestFunction


class TestTiltedSampler:
    def test_flat_psi_recovers_base(self):
        """psi = 1: the tilted law is the base law (KS test vs normal)."""
        flat = nl.PsiFunction("indicator", 1.0)
        tilt = nl.tilted_marginal_sampler(lambda u: np.ones_like(u))
        draws = tilt.sample(StreamConfig(1).stream(0), 100_000)
        stat, pvalue = sps.kstest(draws, "norm")
        assert pvalue > 1e-4

    def test_square_tilt_moments(self):
        """u^2-tilted normal has mean 0 and variance E Z^4 / E Z^2 = 3."""
        tilt = nl.tilted_marginal_sampler(nl.parse_psi("square"))
        assert abs(tilt.mean) < 1e-9
        np.testing.assert_allclose(tilt.moment2, 3.0, atol=1e-7)
        draws = tilt.sample(StreamConfig(2).stream(0), 200_000)
        assert abs(draws.mean()) <= 4 * np.sqrt(3.0 / 200_000)
        assert abs(draws.var() - 3.0) <= 4 * np.sqrt(12.0 / 200_000) + 1e-3

    def test_indicator_tilt_is_half_normal(self):
        tilt = nl.tilted_marginal_sampler(nl.parse_psi("indicator"))
        np.testing.assert_allclose(tilt.mass, 1.0, atol=1e-8)
        np.testing.assert_allclose(tilt.mean, np.sqrt(2.0 / np.pi),
                                   atol=1e-7)
        draws = tilt.sample(StreamConfig(3).stream(0), 50_000)
        assert np.all(draws >= 0)

    def test_exp_tilt_is_shifted_normal(self):
        """e^u-tilting a standard normal shifts it to N(1, 1)."""
        tilt = nl.tilted_marginal_sampler(nl.parse_psi("exp"))
        np.testing.assert_allclose(tilt.mean, 1.0, atol=1e-8)
        np.testing.assert_allclose(tilt.moment2 - tilt.mean**2, 1.0,
                                   atol=1e-7)
        np.testing.assert_allclose(tilt.mgf(0.5), np.exp(0.5 + 0.125),
                                   atol=1e-6)

    def test_zero_mass_rejected(self):
        with pytest.raises(ZeroMass):
            nl.tilted_marginal_sampler(lambda u: np.zeros_like(u))

    def test_discrete_tilt_is_exact_size_bias(self):
        base = DiscreteDistribution([0.0, 1.0, 3.0], [0.2, 0.5, 0.3])
        tilt = nl.TiltedSampler(lambda u: u, base)
        expected = oracles.size_biased_law(oracles.discrete_law(base))
        got = oracles.discrete_law(tilt.discrete)
        assert oracles.laws_close(got, expected)
        np.testing.assert_allclose(tilt.mass, base.mean, rtol=1e-14)

    def test_survival_consistent_with_draws(self):
        tilt = nl.tilted_marginal_sampler(nl.parse_psi("square"))
        draws = tilt.sample(StreamConfig(4).stream(0), 200_000)
        for t in (-2.0, 0.0, 1.5):
            emp = float(np.mean(draws > t))
            assert abs(emp - tilt.survival(t)) <= 4 * np.sqrt(0.25 / 200_000)


class TestGaussianCoupler:
    def test_identity_correlation_leaves_others(self):
        cfg = nl.GaussianSumConfig(5, nl.parse_psi("square"), rho=0.0)
        coupler = nl.couple_gaussian_sum(cfg)
        rng = StreamConfig(5).stream(0)
        u = coupler.draw_u(rng, 100)
        idx = rng.integers(5, size=100)
        y = coupler.tilted.sample(rng, 100)
        adjusted = coupler.adjust(u, idx, y)
        rows = np.arange(100)
        mask = np.ones_like(u, dtype=bool)
        mask[rows, idx] = False
        np.testing.assert_array_equal(adjusted[mask], u[mask])
        np.testing.assert_array_equal(adjusted[rows, idx], y)

    def test_conditional_law_two_dims(self):
        """rho = 0.5: given the resampled value y, the other coordinate is
        N(0.5 y, 0.75)."""
        cfg = nl.GaussianSumConfig(2, nl.parse_psi("square"), rho=0.5)
        coupler = nl.couple_gaussian_sum(cfg)
        rng = StreamConfig(6).stream(0)
        m = 200_000
        u = coupler.draw_u(rng, m)
        y_val = 1.3
        adjusted = coupler.adjust(u, np.zeros(m, dtype=int),
                                  np.full(m, y_val))
        other = adjusted[:, 1]
        assert abs(other.mean() - 0.5 * y_val) <= 4 * np.sqrt(0.75 / m)
        assert abs(other.var() - 0.75) <= 4 * np.sqrt(2 * 0.75**2 / m)

    def test_conditional_moments_general_matrix(self):
        """Given I and y, the unpicked block has mean corr[-I, I] y and
        covariance corr[-I,-I] - corr[-I,I] corr[I,-I]."""
        rng0 = np.random.default_rng(0)
        corr = np.array([[1.0, 0.3, -0.2],
                         [0.3, 1.0, 0.4],
                         [-0.2, 0.4, 1.0]])
        cfg = nl.GaussianSumConfig(3, nl.parse_psi("square"), corr=corr)
        coupler = nl.couple_gaussian_sum(cfg)
        m = 300_000
        u = coupler.draw_u(StreamConfig(7).stream(0), m)
        y_val = -0.8
        idx = np.full(m, 1)
        adjusted = coupler.adjust(u, idx, np.full(m, y_val))
        others = adjusted[:, [0, 2]]
        mean_expected = corr[[0, 2], 1] * y_val
        cov_expected = (corr[np.ix_([0, 2], [0, 2])]
                        - np.outer(corr[[0, 2], 1], corr[1, [0, 2]]))
        se_mean = np.sqrt(np.diag(cov_expected) / m)
        assert np.all(np.abs(others.mean(axis=0) - mean_expected)
                      <= 4 * se_mean)
        emp_cov = np.cov(others.T)
        assert np.all(np.abs(emp_cov - cov_expected) <= 4 * 2.0 / np.sqrt(m))

    def test_not_pd_rejected(self):
        corr = np.array([[1.0, 0.9], [0.9, 1.0]])
        bad = corr.copy()
        bad[0, 1] = bad[1, 0] = 1.5
        with pytest.raises(NotPositiveDefinite):
            nl.couple_gaussian_sum(
                nl.GaussianSumConfig(2, nl.parse_psi("square"), corr=bad))

    @pytest.mark.parametrize("name", ["square", "exp", "indicator"])
    def test_cond_exp_matches_nested_mc(self, name):
        """The closed-form conditional mean agrees with brute-force inner
        Monte Carlo on a handful of fixed configurations."""
        cfg = nl.GaussianSumConfig(4, nl.parse_psi(name), rho=0.25)
        coupler = nl.couple_gaussian_sum(cfg)
        rng = StreamConfig(8).stream(0)
        u = coupler.draw_u(rng, 6)
        exact = coupler.cond_exp_given_u(u)
        inner = 400_000
        for row in range(6):
            tiled = np.repeat(u[row:row + 1], inner, axis=0)
            idx = rng.integers(4, size=inner)
            y = coupler.tilted.sample(rng, inner)
            adjusted = coupler.adjust(tiled, idx, y)
            delta = coupler.psi(adjusted).sum(axis=1) - coupler.psi(tiled).sum(axis=1)
            se = delta.std() / np.sqrt(inner)
            assert abs(delta.mean() - exact[row]) <= 5 * se + 1e-8

    def test_mean_identity(self):
        """E W* = E W^2 / lambda for the coupled pair."""
        cfg = nl.GaussianSumConfig(6, nl.parse_psi("square"), rho=0.2)
        coupler = nl.couple_gaussian_sum(cfg)
        lam, var = nl.gaussian_moments(cfg)
        m = 400_000
        w, ws = coupler.draw_batch(0, m, StreamConfig(9).stream(0))
        expected = (var + lam**2) / lam
        se = ws.std() / np.sqrt(m)
        assert abs(ws.mean() - expected) <= 5 * se


class TestGaussianMoments:
    @pytest.mark.parametrize("name", ["square", "exp", "indicator"])
    def test_against_monte_carlo(self, name):
        cfg = nl.GaussianSumConfig(5, nl.parse_psi(name), rho=0.3)
        lam, var = nl.gaussian_moments(cfg)
        coupler = nl.couple_gaussian_sum(cfg)
        m = 400_000
        w = coupler.psi(coupler.draw_u(StreamConfig(10).stream(0), m)).sum(axis=1)
        assert abs(w.mean() - lam) <= 5 * w.std() / np.sqrt(m)
        assert abs(w.var() - var) <= 5 * np.sqrt(np.mean((w - w.mean())**4) / m)

    def test_config_properties(self):
        cfg = nl.GaussianSumConfig(4, nl.parse_psi("square"), rho=0.1)
        assert cfg.max_offdiag == pytest.approx(0.1)
        assert cfg.max_row_sum == pytest.approx(1.3)


class TestMultinomialCoupler:
    def test_ball_conservation(self):
        cfg = nl.MultinomialSumConfig(5, 3, nl.parse_psi("square",
                                                         normalize=False))
        coupler = nl.couple_multinomial_sum(cfg)
        rng = StreamConfig(11).stream(0)
        counts = coupler.draw_counts(rng, 5000)
        moved = coupler.couple_counts(counts, rng)
        np.testing.assert_array_equal(moved.sum(axis=1), counts.sum(axis=1))
        assert np.all(moved >= 0)

    def test_two_cells_one_ball_each_degenerate(self):
        """2 balls in 2 cells with identity psi: W and W* are exactly 2."""
        class Identity:
            name = "identity"
            scale = 1.0

            def __call__(self, u):
                return np.asarray(u, dtype=float)

        cfg = nl.MultinomialSumConfig(2, 1, nl.parse_psi("square",
                                                         normalize=False))
        coupler = nl.couple_multinomial_sum(cfg)
        coupler.psi = Identity()
        coupler.tilted = nl.TiltedSampler(coupler.psi, cfg.cell_marginal())
        coupler.mean_vector = np.array([2 * coupler.tilted.mass])
        w, ws = coupler.draw_batch(0, 4000, StreamConfig(12).stream(0))
        np.testing.assert_array_equal(w, 2.0)
        np.testing.assert_array_equal(ws, 2.0)

    def test_wstar_law_matches_size_biased_enumeration(self):
        """Empirical W* frequencies match w P(W = w) / E W exactly computed
        from the occupancy law (3 balls in 3 cells)."""
        psi = nl.parse_psi("square", normalize=False)
        cfg = nl.MultinomialSumConfig(3, 1, psi)
        coupler = nl.couple_multinomial_sum(cfg)
        w_law = oracles.multinomial_w_law(3, 3, psi)
        target = oracles.size_biased_law(w_law)
        m = 300_000
        _, ws = coupler.draw_batch(0, m, StreamConfig(13).stream(0))
        for value, prob in target.items():
            freq = float(np.mean(np.isclose(ws[:, 0], value)))
            assert abs(freq - prob) <= 4 * np.sqrt(prob * (1 - prob) / m), value

    def test_exact_moments_against_occupancy_law(self):
        psi = nl.parse_psi("square", normalize=False)
        cfg = nl.MultinomialSumConfig(3, 2, psi)
        lam, var = nl.multinomial_moments(cfg)
        law = oracles.multinomial_w_law(3, 6, psi)
        mean = sum(v * p for v, p in law.items())
        second = sum(v * v * p for v, p in law.items())
        np.testing.assert_allclose(lam, mean, rtol=1e-10)
        np.testing.assert_allclose(var, second - mean**2, rtol=1e-9)

    def test_infeasible_adjustment_raises(self):
        counts = np.array([[2, 1, 1]])
        with pytest.raises(InfeasibleAdjustment):
            nl._move_balls(counts, np.array([0]), np.array([10]),
                           StreamConfig(0).stream(0))


class TestCharacterization:
    @pytest.mark.parametrize("name", ["square", "exp", "indicator"])
    def test_gaussian_couplers(self, name):
        cfg = nl.GaussianSumConfig(8, nl.parse_psi(name), rho=0.2)
        res = verify_characterization(nl.couple_gaussian_sum(cfg),
                                      samples=150_000, seed=14)
        assert res.max_abs_z <= 4.0, (name, res.max_abs_z)

    @pytest.mark.parametrize("name", ["square", "exp"])
    def test_multinomial_couplers(self, name):
        cfg = nl.MultinomialSumConfig(6, 2, nl.parse_psi(name,
                                                         normalize=False))
        res = verify_characterization(nl.couple_multinomial_sum(cfg),
                                      samples=150_000, seed=15)
        assert res.max_abs_z <= 4.0, (name, res.max_abs_z)


class TestExperiment:
    def test_iid_square_rate_shape(self):
        """Independent arguments, quadratic psi: bound scales like
        n^{-1/2}, so quadrupling n halves the bound."""
        h = SmoothTestFunction("cosine", p=1, a=(1.0,))
        totals = {}
        for n in (100, 400):
            cfg = nl.GaussianSumConfig(n, nl.parse_psi("square"), rho=0.0)
            rep = nl.run_nonlinear_experiment(cfg, h, samples=20_000, seed=16)
            assert rep.passed
            totals[n] = rep.bound.total
        assert 1.6 <= totals[100] / totals[400] <= 2.4

    def test_multinomial_experiment_passes(self):
        cfg = nl.MultinomialSumConfig(30, 2, nl.parse_psi("square",
                                                          normalize=False))
        h = SmoothTestFunction("cosine", p=1, a=(1.0,))
        rep = nl.run_nonlinear_experiment(cfg, h, samples=8000, seed=17,
                                          inner=16)
        assert rep.passed
        assert rep.config["inner_draws"] == 16

    def test_report_echoes_correlation_summary(self):
        cfg = nl.GaussianSumConfig(12, nl.parse_psi("exp"), rho=0.1)
        h = SmoothTestFunction("cosine", p=1, a=(0.5,))
        rep = nl.run_nonlinear_experiment(cfg, h, samples=4000, seed=18)
        assert rep.config["max_offdiag"] == pytest.approx(0.1)
        assert rep.config["offdiag_below_third"] is True
        assert rep.passed
