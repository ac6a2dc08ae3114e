"""Posterior-predictive machinery and the evaluation metrics.

Predictions for an unseen game are Gaussian mixtures: each stored posterior
sample extends the relevant latent functions to the game's side information
by a process-conditional draw, assembles the latent mean pair, and pairs it
with that sample's noise parameters.  Densities of held-out scores are then
averaged exactly over components instead of binning sampled outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp, ndtr

from . import kernels
from . import latent as lat
from .errors import DimensionMismatchError, InvalidParameterError
from .likelihood import LikelihoodParams, loglik_pair


@dataclass
class PredictiveMixture:
    """Equal-weight bivariate Gaussian mixture over one game's score pair."""

    means: np.ndarray
    sigmas: np.ndarray
    rhos: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.sigmas = np.atleast_1d(np.asarray(self.sigmas, dtype=float))
        self.rhos = np.atleast_1d(np.asarray(self.rhos, dtype=float))
        if self.means.shape[0] == 0:
            raise InvalidParameterError("a predictive mixture needs at least one component")
        if self.means.shape[1] != 2:
            raise InvalidParameterError(f"component means must be pairs, got {self.means.shape}")
        if not (self.sigmas.shape[0] == self.rhos.shape[0] == self.means.shape[0]):
            raise DimensionMismatchError(
                f"{self.means.shape[0]} means vs {self.sigmas.shape[0]} sigmas "
                f"and {self.rhos.shape[0]} rhos"
            )
        if np.any(self.sigmas <= 0) or np.any(np.abs(self.rhos) >= 1):
            raise InvalidParameterError("every component needs sigma > 0 and |rho| < 1")

    @property
    def n_components(self) -> int:
        return int(self.means.shape[0])

    @classmethod
    def from_components(cls, components) -> "PredictiveMixture":
        """Build from an iterable of ((y_mn, y_nm), LikelihoodParams) pairs."""
        comps = list(components)
        means = np.array([[c[0][0], c[0][1]] for c in comps])
        sigmas = np.array([c[1].sigma for c in comps])
        rhos = np.array([c[1].rho for c in comps])
        return cls(means=means, sigmas=sigmas, rhos=rhos)

    def mean(self) -> np.ndarray:
        """Mixture mean of the score pair (the point prediction)."""
        return self.means.mean(axis=0)


def gp_conditional_moments(train_inputs, train_f, test_inputs, h: kernels.KernelHyperparams,
                           season_calendar=None, chol: kernels.CovMatrix | None = None):
    """Mean and covariance of test values given training values under one GP."""
    test = np.atleast_2d(np.asarray(test_inputs, dtype=float))
    prior = kernels.build_cov_matrix(test, h, season_calendar=season_calendar).values
    train_f = np.atleast_1d(np.asarray(train_f, dtype=float))
    if train_f.shape[0] == 0:
        return np.zeros(test.shape[0]), prior
    train = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    if train.shape[0] != train_f.shape[0]:
        raise DimensionMismatchError(
            f"{train.shape[0]} training inputs vs {train_f.shape[0]} values"
        )
    cov = chol if chol is not None and chol.chol is not None else kernels.factor_cov(
        train, h, season_calendar=season_calendar
    )
    kstar = kernels.cross_corr_matrix(train, test, h, season_calendar=season_calendar)
    a = solve_triangular(cov.chol, kstar, lower=True, check_finite=False)
    alpha = solve_triangular(cov.chol, train_f, lower=True, check_finite=False)
    mean = a.T @ alpha
    post = prior - a.T @ a
    return mean, 0.5 * (post + post.T)


def gp_conditional(train_inputs, train_f, test_inputs, h: kernels.KernelHyperparams,
                   rng: np.random.Generator, season_calendar=None,
                   chol: kernels.CovMatrix | None = None) -> np.ndarray:
    """One joint posterior draw of the process at the test inputs."""
    mean, cov = gp_conditional_moments(train_inputs, train_f, test_inputs, h,
                                       season_calendar=season_calendar, chol=chol)
    factor, _ = kernels._chol_jitter(cov)
    return mean + factor @ rng.standard_normal(mean.shape[0])


@dataclass
class PredictiveSnapshot:
    """The slice of a chain state needed to extend predictions later."""

    latent: lat.LatentState
    hypers_u: list[kernels.KernelHyperparams]
    hypers_v: list[kernels.KernelHyperparams]
    cc_u: lat.CrossCov
    cc_v: lat.CrossCov
    mean_u: np.ndarray
    mean_v: np.ndarray
    lik: LikelihoodParams


def take_snapshot(state) -> PredictiveSnapshot:
    return PredictiveSnapshot(
        latent=state.latent.copy(),
        hypers_u=[h.copy() for h in state.hypers_u],
        hypers_v=[h.copy() for h in state.hypers_v],
        cc_u=state.cc_u.copy(),
        cc_v=state.cc_v.copy(),
        mean_u=np.array(state.mean_u, dtype=float),
        mean_v=np.array(state.mean_v, dtype=float),
        lik=LikelihoodParams(sigma=state.lik.sigma, rho=state.lik.rho),
    )


def _extend_raw(f_rows: np.ndarray, pts: np.ndarray, hypers, season_calendar,
                point: np.ndarray, rng: np.random.Generator, chol_list=None) -> np.ndarray:
    """Conditional draw of each feature's function at one new point."""
    k = f_rows.shape[0]
    out = np.empty(k)
    n = pts.shape[0]
    for ki in range(k):
        if n == 0:
            out[ki] = rng.standard_normal()
            continue
        cov = chol_list[ki] if chol_list is not None else kernels.factor_cov(
            pts, hypers[ki], season_calendar=season_calendar,
            min_jitter=kernels.CHAIN_JITTER,
        )
        kstar = kernels.cross_corr_matrix(pts, point[None, :], hypers[ki],
                                          season_calendar=season_calendar)[:, 0]
        a = solve_triangular(cov.chol, kstar, lower=True, check_finite=False)
        alpha = solve_triangular(cov.chol, f_rows[ki], lower=True, check_finite=False)
        mean = float(a @ alpha)
        var = max(1.0 - float(a @ a), 0.0)
        out[ki] = mean + math.sqrt(var) * rng.standard_normal()
    return out


def game_component(source, data: lat.ModelData, row_member: int, col_member: int,
                   week: float, rng: np.random.Generator,
                   chol_u=None, chol_v=None):
    """One mixture component for a matchup from one posterior state.

    ``source`` may be a live chain state or a stored snapshot; the optional
    ``chol_u``/``chol_v`` caches are lists [k][member] of factored training
    covariances valid for the source's hyperparameters.
    """
    if not (0 <= row_member < data.n_members and 0 <= col_member < data.n_members):
        raise InvalidParameterError(
            f"unknown member pair ({row_member}, {col_member}) for {data.n_members} members"
        )
    p_row, p_col = lat.role_points(week, data.variant)
    cal = data.season_calendar

    def member_chols(cache, member):
        if cache is None:
            return None
        return [cache[ki][member] for ki in range(len(cache))]

    def raw_at(side_f, hypers, cache, member, point):
        sl = data.member_slice(member)
        return _extend_raw(side_f[:, sl], data.inputs[sl], hypers, cal, point, rng,
                           chol_list=member_chols(cache, member))

    u_row = lat.assemble_feature(
        raw_at(source.latent.f_u, source.hypers_u, chol_u, row_member, p_row),
        source.cc_u, source.mean_u)
    u_col = lat.assemble_feature(
        raw_at(source.latent.f_u, source.hypers_u, chol_u, col_member, p_col),
        source.cc_u, source.mean_u)
    v_row = lat.assemble_feature(
        raw_at(source.latent.f_v, source.hypers_v, chol_v, row_member, p_row),
        source.cc_v, source.mean_v)
    v_col = lat.assemble_feature(
        raw_at(source.latent.f_v, source.hypers_v, chol_v, col_member, p_col),
        source.cc_v, source.mean_v)
    y_mn = float(np.dot(u_row, lat.softplus(v_col)))
    y_nm = float(np.dot(u_col, lat.softplus(v_row)))
    return (y_mn, y_nm), LikelihoodParams(sigma=source.lik.sigma, rho=source.lik.rho)


def predict_game(samples, data: lat.ModelData, row_member: int, col_member: int,
                 week: float, rng: np.random.Generator, shared_chols=None) -> PredictiveMixture:
    """Mixture over stored posterior samples for one matchup.

    ``shared_chols`` is an optional (chol_u, chol_v) cache pair, valid only
    when the samples share kernel hyperparameters (frozen mode).
    """
    samples = list(samples)
    if not samples:
        raise InvalidParameterError("need at least one stored posterior sample")
    chol_u, chol_v = shared_chols if shared_chols is not None else (None, None)
    comps = [
        game_component(s, data, row_member, col_member, week, rng,
                       chol_u=chol_u, chol_v=chol_v)
        for s in samples
    ]
    return PredictiveMixture.from_components(comps)


def component_logliks(mix: PredictiveMixture, score_mn: float, score_nm: float) -> np.ndarray:
    out = np.empty(mix.n_components)
    for j in range(mix.n_components):
        out[j] = loglik_pair(mix.means[j, 0], mix.means[j, 1], score_mn, score_nm,
                             LikelihoodParams(sigma=float(mix.sigmas[j]), rho=float(mix.rhos[j])))
    return out


def rao_blackwell_logprob(mix: PredictiveMixture, score_mn: float, score_nm: float) -> float:
    """Log of the equal-weight mixture density at one observed score pair."""
    lls = component_logliks(mix, score_mn, score_nm)
    return float(logsumexp(lls) - math.log(mix.n_components))


def winner_prob(mix: PredictiveMixture) -> float:
    """Probability that the row member outscores the column member.

    Per component the score difference is Gaussian with variance
    2 sigma^2 (1 - rho), so the probability is exact.
    """
    denom = np.sqrt(2.0 * mix.sigmas**2 * (1.0 - mix.rhos))
    z = (mix.means[:, 0] - mix.means[:, 1]) / denom
    return float(np.mean(ndtr(z)))


@dataclass
class ExpertLine:
    """Bookmaker line: total points and the home side's spread."""

    over_under: float
    home_spread: float

    def __post_init__(self):
        if not np.isfinite(self.over_under) or self.over_under <= 0:
            raise InvalidParameterError(f"over/under must be positive, got {self.over_under}")
        if not np.isfinite(self.home_spread):
            raise InvalidParameterError("home spread must be finite")


def expert_scores(line: ExpertLine) -> tuple[float, float]:
    """Implied (away, home) score prediction from a bookmaker line."""
    away = (line.over_under + line.home_spread) / 2.0
    home = (line.over_under - line.home_spread) / 2.0
    return away, home


@dataclass
class MetricsResult:
    mean_logprob: float
    winner_error_pct: float
    rmse: float


def metrics(mixtures, truths) -> MetricsResult:
    """Mean predictive log probability, winner error rate, and score RMSE.

    ``truths`` holds one (score_mn, score_nm) pair per mixture.  A predicted
    win probability of exactly one half counts as an error.  The RMSE runs
    over both score components of every game, with the mixture mean as the
    point prediction.
    """
    mixtures = list(mixtures)
    truths = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(mixtures) == 0 or truths.shape[0] != len(mixtures):
        raise InvalidParameterError(
            f"need equally many mixtures and truths, got {len(mixtures)} and {truths.shape[0]}"
        )
    logprobs = np.empty(len(mixtures))
    errors = np.empty(len(mixtures), dtype=bool)
    sq = np.empty((len(mixtures), 2))
    for i, mix in enumerate(mixtures):
        logprobs[i] = rao_blackwell_logprob(mix, truths[i, 0], truths[i, 1])
        p = winner_prob(mix)
        pred_row_win = p > 0.5
        true_row_win = truths[i, 0] > truths[i, 1]
        errors[i] = (pred_row_win != true_row_win) or (p == 0.5)
        sq[i] = (mix.mean() - truths[i]) ** 2
    return MetricsResult(
        mean_logprob=float(np.mean(logprobs)),
        winner_error_pct=float(100.0 * np.mean(errors)),
        rmse=float(np.sqrt(np.mean(sq))),
    )


def density_grid(mix: PredictiveMixture, size: int = 200, span_sigmas: float = 6.0):
    """Predictive density evaluated on a square grid around the mixture.

    Returns (grid_mn, grid_nm, density) where the grids are 1-d axes and the
    density is (size, size), row index varying over the row member's score.
    """
    if size < 2:
        raise InvalidParameterError("grid size must be at least 2")
    smax = float(np.max(mix.sigmas))
    lo = mix.means.min(axis=0) - span_sigmas * smax
    hi = mix.means.max(axis=0) + span_sigmas * smax
    grid_mn = np.linspace(lo[0], hi[0], size)
    grid_nm = np.linspace(lo[1], hi[1], size)
    gm, gn = np.meshgrid(grid_mn, grid_nm, indexing="ij")
    logs = np.full((mix.n_components, size, size), -np.inf)
    for j in range(mix.n_components):
        p = LikelihoodParams(sigma=float(mix.sigmas[j]), rho=float(mix.rhos[j]))
        logs[j] = loglik_pair(mix.means[j, 0], mix.means[j, 1], gm, gn, p)
    dens = np.exp(logsumexp(logs, axis=0) - math.log(mix.n_components))
    return grid_mn, grid_nm, dens
