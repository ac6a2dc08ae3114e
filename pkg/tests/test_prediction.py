import math

import numpy as np
import pytest
from scipy import stats

from helpers import tiny_model_data, tiny_priors
from dpmf.errors import InvalidParameterError
from dpmf.kernels import ARD, KernelHyperparams, factor_cov
from dpmf.likelihood import LikelihoodParams, loglik_pair
from dpmf.prediction import (
    ExpertLine,
    PredictiveMixture,
    density_grid,
    expert_scores,
    game_component,
    gp_conditional,
    gp_conditional_moments,
    metrics,
    predict_game,
    rao_blackwell_logprob,
    take_snapshot,
    winner_prob,
)
from dpmf.samplers import draw_state_from_prior, gibbs_sweep, resample_scores


def ard(ls):
    return KernelHyperparams(variant=ARD, length_scales=np.asarray(ls, dtype=float))


class TestGpConditional:
    def test_one_point_closed_form(self):
        mean, cov = gp_conditional_moments([[0.0]], [1.0], [[1.0]], ard([1.0]))
        assert mean[0] == pytest.approx(math.exp(-0.5), abs=1e-10)
        assert cov[0, 0] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-10)

    def test_interpolation_at_training_point(self):
        pts = np.array([[0.0], [2.0], [5.0]])
        f = np.array([0.3, -1.0, 0.7])
        chol = factor_cov(pts, ard([1.5]))
        assert chol.jitter_used == 0.0
        mean, cov = gp_conditional_moments(pts, f, [[2.0]], ard([1.5]), chol=chol)
        assert mean[0] == pytest.approx(-1.0, abs=1e-8)
        assert cov[0, 0] < 1e-10

    def test_no_training_is_prior(self):
        mean, cov = gp_conditional_moments(np.zeros((0, 1)), np.zeros(0), [[1.0], [2.0]], ard([1.0]))
        assert np.array_equal(mean, np.zeros(2))
        assert cov[0, 0] == 1.0
        assert cov[0, 1] == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_draw_deterministic(self):
        pts = np.array([[0.0], [3.0]])
        f = np.array([1.0, -1.0])
        d1 = gp_conditional(pts, f, [[1.0]], ard([1.0]), np.random.default_rng(3))
        d2 = gp_conditional(pts, f, [[1.0]], ard([1.0]), np.random.default_rng(3))
        assert np.array_equal(d1, d2)

    def test_draw_moments_match(self):
        pts = np.array([[0.0]])
        f = np.array([1.0])
        rng = np.random.default_rng(11)
        n = 40_000
        draws = np.array([
            gp_conditional(pts, f, [[1.0]], ard([1.0]), rng)[0] for _ in range(n)
        ])
        m = math.exp(-0.5)
        v = 1.0 - math.exp(-1.0)
        assert abs(draws.mean() - m) < 4 * math.sqrt(v / n)
        assert abs(draws.var() - v) < 4 * v * math.sqrt(2.0 / n)


def mixture(means, sigmas, rhos):
    return PredictiveMixture(means=np.asarray(means, dtype=float),
                             sigmas=np.asarray(sigmas, dtype=float),
                             rhos=np.asarray(rhos, dtype=float))


class TestRaoBlackwell:
    def test_single_component_equals_pair_loglik(self):
        mix = mixture([[100.0, 95.0]], [10.0], [0.4])
        p = LikelihoodParams(sigma=10.0, rho=0.4)
        got = rao_blackwell_logprob(mix, 103.0, 97.0)
        assert got == pytest.approx(loglik_pair(100.0, 95.0, 103.0, 97.0, p), abs=1e-12)

    def test_duplicated_components_no_change(self):
        single = mixture([[10.0, 8.0]], [2.0], [0.1])
        triple = mixture([[10.0, 8.0]] * 3, [2.0] * 3, [0.1] * 3)
        assert rao_blackwell_logprob(triple, 9.0, 9.0) == pytest.approx(
            rao_blackwell_logprob(single, 9.0, 9.0), abs=1e-12
        )

    def test_permutation_invariance(self):
        a = mixture([[10.0, 8.0], [12.0, 9.0]], [2.0, 3.0], [0.1, -0.2])
        b = mixture([[12.0, 9.0], [10.0, 8.0]], [3.0, 2.0], [-0.2, 0.1])
        assert rao_blackwell_logprob(a, 11.0, 8.5) == pytest.approx(
            rao_blackwell_logprob(b, 11.0, 8.5), abs=1e-12
        )

    def test_two_components_bruteforce(self):
        mix = mixture([[10.0, 8.0], [14.0, 9.0]], [2.0, 3.0], [0.0, 0.5])
        brute = 0.5 * (
            math.exp(loglik_pair(10.0, 8.0, 11.0, 9.0, LikelihoodParams(2.0, 0.0)))
            + math.exp(loglik_pair(14.0, 9.0, 11.0, 9.0, LikelihoodParams(3.0, 0.5)))
        )
        assert rao_blackwell_logprob(mix, 11.0, 9.0) == pytest.approx(math.log(brute), abs=1e-10)

    def test_density_integrates_to_one(self):
        # quadrature over a wide grid for a 10 component mixture
        rng = np.random.default_rng(5)
        mix = mixture(
            rng.normal(loc=100.0, scale=3.0, size=(10, 2)),
            rng.uniform(5.0, 10.0, size=10),
            rng.uniform(-0.5, 0.5, size=10),
        )
        grid1 = np.linspace(100.0 - 65.0, 100.0 + 65.0, 260)
        grid2 = grid1.copy()
        g1, g2 = np.meshgrid(grid1, grid2, indexing="ij")
        dens = np.zeros_like(g1)
        for i in range(g1.shape[0]):
            for j in range(g1.shape[1]):
                dens[i, j] = math.exp(rao_blackwell_logprob(mix, g1[i, j], g2[i, j]))
        total = np.trapezoid(np.trapezoid(dens, grid2, axis=1), grid1)
        assert total == pytest.approx(1.0, abs=1e-3)


class TestWinnerProb:
    def test_symmetric_mixture_is_half(self):
        mix = mixture([[100.0, 100.0], [95.0, 95.0]], [10.0, 8.0], [0.2, 0.0])
        assert winner_prob(mix) == pytest.approx(0.5, abs=1e-12)

    def test_one_sd_difference(self):
        sigma, rho = 10.0, 0.4
        d = math.sqrt(2.0 * sigma**2 * (1.0 - rho))
        mix = mixture([[100.0 + d, 100.0]], [sigma], [rho])
        assert winner_prob(mix) == pytest.approx(stats.norm.cdf(1.0), abs=1e-9)

    def test_mixture_linearity(self):
        sigma, rho = 10.0, 0.4
        d = math.sqrt(2.0 * sigma**2 * (1.0 - rho))
        both = mixture([[100.0, 100.0], [100.0 + d, 100.0]], [sigma, sigma], [rho, rho])
        expected = 0.5 * (0.5 + stats.norm.cdf(1.0))
        assert winner_prob(both) == pytest.approx(expected, abs=1e-9)

    def test_role_swap_sums_to_one(self):
        rng = np.random.default_rng(8)
        means = rng.normal(loc=100.0, scale=5.0, size=(6, 2))
        sig = rng.uniform(5.0, 12.0, size=6)
        rho = rng.uniform(-0.8, 0.8, size=6)
        forward = winner_prob(mixture(means, sig, rho))
        backward = winner_prob(mixture(means[:, ::-1], sig, rho))
        assert forward + backward == pytest.approx(1.0, abs=1e-12)

    def test_monte_carlo_agreement(self):
        from dpmf.likelihood import sample_pair

        mix = mixture([[103.0, 99.0]], [7.0], [0.3])
        rng = np.random.default_rng(13)
        n = 200_000
        draws = sample_pair(np.full(n, 103.0), np.full(n, 99.0),
                            LikelihoodParams(7.0, 0.3), rng)
        mc = np.mean(draws[:, 0] > draws[:, 1])
        p = winner_prob(mix)
        assert abs(mc - p) < 4 * math.sqrt(p * (1 - p) / n)


class TestExpertScores:
    def test_published_example(self):
        away, home = expert_scores(ExpertLine(over_under=210.5, home_spread=-4.5))
        assert away == 103.0
        assert home == 107.5

    def test_zero_spread(self):
        away, home = expert_scores(ExpertLine(over_under=200.0, home_spread=0.0))
        assert away == home == 100.0

    def test_round_trip(self):
        line = ExpertLine(over_under=195.5, home_spread=3.5)
        away, home = expert_scores(line)
        assert away + home == pytest.approx(line.over_under, abs=1e-12)
        assert away - home == pytest.approx(line.home_spread, abs=1e-12)

    def test_invalid_line(self):
        with pytest.raises(InvalidParameterError):
            ExpertLine(over_under=-1.0, home_spread=0.0)


class TestMetrics:
    def test_perfect_point_predictions(self):
        mixes = [mixture([[100.0, 95.0]], [5.0], [0.0]),
                 mixture([[90.0, 98.0]], [5.0], [0.0])]
        truths = [[100.0, 95.0], [90.0, 98.0]]
        got = metrics(mixes, truths)
        assert got.rmse == 0.0
        assert got.winner_error_pct == 0.0

    def test_hand_rmse(self):
        mixes = [mixture([[100.0, 95.0]], [5.0], [0.0])]
        truths = [[103.0, 99.0]]
        got = metrics(mixes, truths)
        assert got.rmse == pytest.approx(math.sqrt(12.5), abs=1e-12)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(21)
        mixes = []
        truths = []
        for _ in range(3):
            j = int(rng.integers(1, 4))
            mixes.append(mixture(
                rng.normal(loc=100.0, scale=4.0, size=(j, 2)),
                rng.uniform(4.0, 9.0, size=j),
                rng.uniform(-0.5, 0.5, size=j),
            ))
            truths.append(rng.normal(loc=100.0, scale=8.0, size=2))
        got = metrics(mixes, truths)
        logs, errs, sqs = [], [], []
        for mix, truth in zip(mixes, truths):
            dens = np.mean([
                math.exp(loglik_pair(mix.means[j, 0], mix.means[j, 1], truth[0], truth[1],
                                     LikelihoodParams(float(mix.sigmas[j]), float(mix.rhos[j]))))
                for j in range(mix.n_components)
            ])
            logs.append(math.log(dens))
            p = winner_prob(mix)
            errs.append(((p > 0.5) != (truth[0] > truth[1])) or p == 0.5)
            point = mix.means.mean(axis=0)
            sqs.extend(((point - truth) ** 2).tolist())
        assert got.mean_logprob == pytest.approx(np.mean(logs), abs=1e-10)
        assert got.winner_error_pct == pytest.approx(100.0 * np.mean(errs), abs=1e-10)
        assert got.rmse == pytest.approx(math.sqrt(np.mean(sqs)), abs=1e-10)

    def test_empty_rejected(self):
        with pytest.raises(InvalidParameterError):
            metrics([], np.zeros((0, 2)))

    def test_exact_tie_probability_counts_as_error(self):
        mixes = [mixture([[100.0, 100.0]], [5.0], [0.0])]
        got = metrics(mixes, [[90.0, 95.0]])
        assert got.winner_error_pct == 100.0


class TestPredictGame:
    def make_state(self, seed=0):
        data = tiny_model_data()
        priors = tiny_priors()
        state = draw_state_from_prior(data, 2, priors, np.random.default_rng(seed))
        resample_scores(state, data)
        for _ in range(3):
            gibbs_sweep(state, data, priors)
        return state, data

    def test_single_sample_single_component(self):
        state, data = self.make_state()
        snap = take_snapshot(state)
        mix = predict_game([snap], data, 0, 1, 2.0, np.random.default_rng(1))
        assert mix.n_components == 1
        assert mix.sigmas[0] == state.lik.sigma
        assert mix.rhos[0] == state.lik.rho
        p = LikelihoodParams(state.lik.sigma, state.lik.rho)
        direct = loglik_pair(mix.means[0, 0], mix.means[0, 1], 90.0, 80.0, p)
        assert rao_blackwell_logprob(mix, 90.0, 80.0) == pytest.approx(direct, abs=1e-12)

    def test_component_count_matches_samples(self):
        state, data = self.make_state()
        snaps = [take_snapshot(state) for _ in range(7)]
        mix = predict_game(snaps, data, 1, 2, 3.0, np.random.default_rng(2))
        assert mix.n_components == 7

    def test_unknown_member_rejected(self):
        state, data = self.make_state()
        with pytest.raises(InvalidParameterError):
            predict_game([take_snapshot(state)], data, 0, 9, 2.0, np.random.default_rng(0))

    def test_empty_samples_rejected(self):
        _, data = self.make_state()
        with pytest.raises(InvalidParameterError):
            predict_game([], data, 0, 1, 2.0, np.random.default_rng(0))

    def test_component_at_observed_input_tracks_training_y(self):
        # y at an observed input reproduces the state's own latent mean when
        # the conditional interpolates (jitter free factors, tiny noise draw)
        from dpmf.samplers import chain_y

        state, data = self.make_state(seed=4)
        y = chain_y(state, data)
        obs = data.observations[0]
        comps = [
            game_component(state, data, obs.row_member, obs.col_member,
                           float(obs.side_info[0]), np.random.default_rng(j),
                           chol_u=state.chol_u, chol_v=state.chol_v)
            for j in range(64)
        ]
        means = np.array([c[0] for c in comps])
        jitters = [
            cov.jitter_used
            for cache in (state.chol_u, state.chol_v)
            for row in cache for cov in row if cov is not None
        ]
        tol = 1e-3 if max(jitters) == 0.0 else 0.5
        assert abs(np.median(means[:, 0]) - y[0, 0]) < max(
            tol, 6.0 * abs(y[0, 0]) * 1e-3
        )

    def test_live_state_and_snapshot_agree(self):
        state, data = self.make_state(seed=6)
        snap = take_snapshot(state)
        c1 = game_component(state, data, 0, 1, 2.5, np.random.default_rng(9),
                            chol_u=state.chol_u, chol_v=state.chol_v)
        c2 = game_component(snap, data, 0, 1, 2.5, np.random.default_rng(9))
        assert c1[0] == pytest.approx(c2[0], abs=1e-8)


class TestDensityGrid:
    def test_grid_mass_near_one(self):
        mix = mixture([[100.0, 95.0], [104.0, 97.0]], [6.0, 7.0], [0.3, 0.1])
        grid_mn, grid_nm, dens = density_grid(mix, size=160, span_sigmas=6.0)
        total = np.trapezoid(np.trapezoid(dens, grid_nm, axis=1), grid_mn)
        assert total == pytest.approx(1.0, abs=2e-3)

    def test_peak_near_component_mean(self):
        mix = mixture([[100.0, 95.0]], [5.0], [0.0])
        grid_mn, grid_nm, dens = density_grid(mix, size=101)
        i, j = np.unravel_index(np.argmax(dens), dens.shape)
        assert abs(grid_mn[i] - 100.0) < 1.5
        assert abs(grid_nm[j] - 95.0) < 1.5
