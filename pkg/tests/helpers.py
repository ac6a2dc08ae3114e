"""Shared test utilities: tiny models and the joint-distribution sampler check.

The joint check compares two ways of sampling from p(state, data): exact
ancestral draws (prior then data) versus alternating data refreshes with the
posterior transition operator.  If the operator is correct both simulators
share every moment; z-scores of the differences should look standard normal.
"""

from __future__ import annotations

import math

import numpy as np

from dpmf.latent import DPMF_T, build_model_data
from dpmf.likelihood import GameObservation
from dpmf.samplers import (
    ChainState,
    Priors,
    chain_y,
    draw_state_from_prior,
    gibbs_sweep,
    resample_scores,
)

TINY_CALENDAR = [(0.0, 4.0), (32.0, 36.0)]
TINY_GAMES = [
    (0, 1, 1.0),
    (1, 2, 3.0),
    (2, 0, 2.0),
    (0, 1, 33.0),
    (2, 1, 35.0),
]


def tiny_model_data(n_members: int = 3, variant: str = DPMF_T):
    obs = [
        GameObservation(row_member=r, col_member=c, side_info=[w],
                        score_mn=0.0, score_nm=0.0)
        for r, c, w in TINY_GAMES
    ]
    return build_model_data(obs, n_members, variant, season_calendar=TINY_CALENDAR)


def tiny_priors() -> Priors:
    # tighter than the defaults so moments settle with moderate sample sizes
    return Priors(
        log_ls_lo=math.log(0.5),
        log_ls_hi=math.log(50.0),
        gap_lo=0.5,
        gap_hi=20.0,
        mean_sd=3.0,
        cross_diag_sd=0.5,
        cross_off_sd=0.5,
        log_sigma_mean=math.log(5.0),
        log_sigma_sd=0.5,
    )


def state_stats(state: ChainState, data) -> np.ndarray:
    """Tracked quantities: every latent mean pair, noise params, all kernel
    hyperparameters (length scales and season gaps on both sides)."""
    y = chain_y(state, data).ravel()
    extras = [state.lik.sigma, state.lik.rho]
    for hypers in (state.hypers_u, state.hypers_v):
        for h in hypers:
            extras.extend(float(v) for v in h.length_scales)
            extras.append(float(h.season_gap))
    return np.concatenate([y, np.asarray(extras)])


def stat_names(data, k: int) -> list[str]:
    names = []
    for g in range(data.n_games):
        names += [f"y{g}_mn", f"y{g}_nm"]
    names += ["sigma", "rho"]
    for side in ("u", "v"):
        for ki in range(k):
            names += [f"ls_{side}{ki}", f"gap_{side}{ki}"]
    return names


def marginal_conditional_stats(data, k, priors, n_draws, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_draws):
        state = draw_state_from_prior(data, k, priors, rng)
        out.append(state_stats(state, data))
    return np.asarray(out)


def successive_conditional_stats(data, k, priors, n_sweeps, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    state = draw_state_from_prior(data, k, priors, rng)
    out = []
    for _ in range(n_sweeps):
        resample_scores(state, data)
        gibbs_sweep(state, data, priors)
        out.append(state_stats(state, data))
    return np.asarray(out)


def batch_means_se(series: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of an autocorrelated chain mean via batch means."""
    n = series.shape[0]
    size = n // n_batches
    trimmed = series[: size * n_batches].reshape(n_batches, size)
    means = trimmed.mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def geweke_z_scores(mc: np.ndarray, sc: np.ndarray) -> dict[str, np.ndarray]:
    """z-scores for first and second moments, marginal vs successive."""
    out = {}
    for label, transform in (("mean", lambda x: x), ("second_moment", lambda x: x * x)):
        a, b = transform(mc), transform(sc)
        se_a = a.std(axis=0, ddof=1) / math.sqrt(a.shape[0])
        se_b = np.array([batch_means_se(b[:, j]) for j in range(b.shape[1])])
        out[label] = (a.mean(axis=0) - b.mean(axis=0)) / np.sqrt(se_a**2 + se_b**2)
    return out
