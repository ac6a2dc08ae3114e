import math

import numpy as np
import pytest

from dpmf.errors import DimensionMismatchError, InvalidParameterError
from dpmf.likelihood import (
    GameObservation,
    LikelihoodParams,
    loglik_obs,
    loglik_pair,
    loglik_total,
    sample_pair,
)


def obs(score_mn, score_nm, week=0.0):
    return GameObservation(row_member=0, col_member=1, side_info=[week],
                           score_mn=score_mn, score_nm=score_nm)


class TestLoglikPair:
    def test_at_mean_uncorrelated(self):
        p = LikelihoodParams(sigma=10.0, rho=0.0)
        got = loglik_pair(100.0, 95.0, 100.0, 95.0, p)
        assert got == pytest.approx(-math.log(2.0 * math.pi * 100.0), abs=1e-12)

    def test_at_mean_correlated(self):
        p = LikelihoodParams(sigma=10.0, rho=0.4)
        got = loglik_pair(0.0, 0.0, 0.0, 0.0, p)
        expected = -math.log(2.0 * math.pi * 100.0 * math.sqrt(1.0 - 0.16))
        assert got == pytest.approx(expected, abs=1e-12)

    def test_swap_symmetry(self):
        p = LikelihoodParams(sigma=7.0, rho=0.3)
        rng = np.random.default_rng(5)
        for _ in range(20):
            y1, y2, s1, s2 = rng.normal(scale=20.0, size=4)
            assert loglik_pair(y1, y2, s1, s2, p) == pytest.approx(
                loglik_pair(y2, y1, s2, s1, p), abs=1e-12
            )

    def test_invalid_params(self):
        with pytest.raises(InvalidParameterError):
            LikelihoodParams(sigma=-1.0, rho=0.0)
        with pytest.raises(InvalidParameterError):
            LikelihoodParams(sigma=1.0, rho=1.0)
        bad = LikelihoodParams(sigma=1.0, rho=0.0)
        bad.rho = 1.5
        with pytest.raises(InvalidParameterError):
            loglik_pair(0.0, 0.0, 0.0, 0.0, bad)

    def test_rho_zero_equals_independent_gaussians(self):
        p = LikelihoodParams(sigma=4.0, rho=0.0)
        rng = np.random.default_rng(9)
        for _ in range(20):
            y1, y2, s1, s2 = rng.normal(scale=10.0, size=4)
            uni = sum(
                -0.5 * math.log(2.0 * math.pi) - math.log(4.0) - 0.5 * ((s - y) / 4.0) ** 2
                for y, s in ((y1, s1), (y2, s2))
            )
            assert loglik_pair(y1, y2, s1, s2, p) == pytest.approx(uni, abs=1e-12)

    def test_density_integrates_to_one(self):
        # trapezoid quadrature over a 6 sigma grid around the mean
        p = LikelihoodParams(sigma=10.0, rho=0.4)
        y1, y2 = 100.0, 95.0
        grid1 = np.linspace(y1 - 60.0, y1 + 60.0, 200)
        grid2 = np.linspace(y2 - 60.0, y2 + 60.0, 200)
        g1, g2 = np.meshgrid(grid1, grid2, indexing="ij")
        dens = np.exp(loglik_pair(y1, y2, g1, g2, p))
        total = np.trapezoid(np.trapezoid(dens, grid2, axis=1), grid1)
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_maximized_at_mean(self):
        p = LikelihoodParams(sigma=5.0, rho=0.2)
        center = loglik_pair(10.0, 20.0, 10.0, 20.0, p)
        for d1 in (-2.0, -0.5, 0.5, 2.0):
            for d2 in (-2.0, -0.5, 0.5, 2.0):
                assert loglik_pair(10.0, 20.0, 10.0 + d1, 20.0 + d2, p) < center

    def test_observation_wrapper(self):
        p = LikelihoodParams(sigma=10.0, rho=0.0)
        o = obs(100.0, 95.0)
        assert loglik_obs(100.0, 95.0, o, p) == loglik_pair(100.0, 95.0, 100.0, 95.0, p)


class TestSamplePair:
    def test_vanishing_noise_returns_mean(self):
        p = LikelihoodParams(sigma=1e-9, rho=0.0)
        rng = np.random.default_rng(0)
        a, b = sample_pair(50.0, 60.0, p, rng)
        assert a == pytest.approx(50.0, abs=1e-6)
        assert b == pytest.approx(60.0, abs=1e-6)

    def test_seed_determinism(self):
        p = LikelihoodParams(sigma=3.0, rho=0.5)
        a1 = sample_pair(0.0, 0.0, p, np.random.default_rng(42))
        a2 = sample_pair(0.0, 0.0, p, np.random.default_rng(42))
        assert a1 == a2

    def test_moments_match(self):
        p = LikelihoodParams(sigma=10.0, rho=0.4)
        rng = np.random.default_rng(123)
        n = 100_000
        draws = sample_pair(np.zeros(n), np.zeros(n), p, rng)
        # four standard error tolerances on mean, variance and correlation
        se_mean = p.sigma / math.sqrt(n)
        assert abs(draws[:, 0].mean()) < 4 * se_mean
        assert abs(draws[:, 1].mean()) < 4 * se_mean
        se_var = p.sigma**2 * math.sqrt(2.0 / n)
        assert abs(draws[:, 0].var() - 100.0) < 4 * se_var
        corr = np.corrcoef(draws.T)[0, 1]
        se_corr = (1.0 - p.rho**2) / math.sqrt(n)
        assert abs(corr - 0.4) < 4 * se_corr
        assert abs(corr - 0.4) < 0.015

    def test_sample_against_loglik_histogram(self):
        # coarse 2-d histogram of draws matches quadrature cell masses
        p = LikelihoodParams(sigma=1.0, rho=-0.3)
        rng = np.random.default_rng(77)
        n = 200_000
        draws = sample_pair(np.zeros(n), np.zeros(n), p, rng)
        edges = np.linspace(-2.0, 2.0, 5)
        hist, _, _ = np.histogram2d(draws[:, 0], draws[:, 1], bins=[edges, edges])
        for i in range(4):
            for j in range(4):
                sub1 = np.linspace(edges[i], edges[i + 1], 41)
                sub2 = np.linspace(edges[j], edges[j + 1], 41)
                g1, g2 = np.meshgrid(sub1, sub2, indexing="ij")
                dens = np.exp(loglik_pair(0.0, 0.0, g1, g2, p))
                expect = np.trapezoid(np.trapezoid(dens, sub2, axis=1), sub1)
                got = hist[i, j] / n
                se = math.sqrt(expect * (1 - expect) / n)
                assert abs(got - expect) < 4 * se + 1e-4


class TestLoglikTotal:
    def test_empty_is_zero(self):
        p = LikelihoodParams(sigma=10.0, rho=0.0)
        assert loglik_total(np.zeros((0, 2)), np.zeros((0, 2)), p) == 0.0

    def test_single_equals_pair(self):
        p = LikelihoodParams(sigma=10.0, rho=0.2)
        got = loglik_total([[100.0, 95.0]], [[103.0, 92.0]], p)
        assert got == pytest.approx(loglik_pair(100.0, 95.0, 103.0, 92.0, p), abs=1e-12)

    def test_matches_bruteforce_sum(self):
        p = LikelihoodParams(sigma=8.0, rho=0.3)
        rng = np.random.default_rng(4)
        y = rng.normal(scale=10.0, size=(7, 2))
        s = rng.normal(scale=10.0, size=(7, 2))
        brute = sum(loglik_pair(y[g, 0], y[g, 1], s[g, 0], s[g, 1], p) for g in range(7))
        assert loglik_total(y, s, p) == pytest.approx(brute, abs=1e-10)

    def test_count_mismatch(self):
        p = LikelihoodParams(sigma=1.0, rho=0.0)
        with pytest.raises(DimensionMismatchError):
            loglik_total(np.zeros((3, 2)), np.zeros((2, 2)), p)
