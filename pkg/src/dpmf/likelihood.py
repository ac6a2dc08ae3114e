"""Conditional model of paired scores given their latent means.

Each game is one observation of two matrix entries: the points scored by each
side against the other.  The pair is modeled as a correlated bivariate
Gaussian with a single scale for both scores and a correlation between them.
Setting the correlation to zero recovers two independent Gaussian entries,
the generic matrix-completion case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass
class LikelihoodParams:
    """Scale and within-game correlation of the score noise."""

    sigma: float
    rho: float

    def __post_init__(self):
        validate_params(self.sigma, self.rho)


def validate_params(sigma: float, rho: float) -> None:
    if not np.isfinite(sigma) or sigma <= 0:
        raise InvalidParameterError(f"sigma must be positive and finite, got {sigma}")
    if not np.isfinite(rho) or abs(rho) >= 1:
        raise InvalidParameterError(f"rho must lie strictly inside (-1, 1), got {rho}")


@dataclass
class GameObservation:
    """One dyadic observation: the pair, its side information, both scores.

    ``score_mn`` is the row member's points against the column member,
    ``score_nm`` the reverse.  ``side_info`` carries the game covariates
    (time in weeks); the home indicator is positional, the row member is
    the home side.
    """

    row_member: int
    col_member: int
    side_info: np.ndarray
    score_mn: float
    score_nm: float

    def __post_init__(self):
        self.side_info = np.atleast_1d(np.asarray(self.side_info, dtype=float))
        if not np.all(np.isfinite(self.side_info)):
            raise InvalidParameterError("side information must be finite")
        if not (np.isfinite(self.score_mn) and np.isfinite(self.score_nm)):
            raise InvalidParameterError("scores must be finite")


def loglik_pair(y_mn, y_nm, score_mn, score_nm, p: LikelihoodParams):
    """Log density of an observed score pair around latent means.

    Accepts scalars or equally shaped arrays and broadcasts elementwise.
    """
    validate_params(p.sigma, p.rho)
    a = (np.asarray(score_mn, dtype=float) - y_mn) / p.sigma
    b = (np.asarray(score_nm, dtype=float) - y_nm) / p.sigma
    omr2 = 1.0 - p.rho * p.rho
    quad = (a * a - 2.0 * p.rho * a * b + b * b) / omr2
    out = -LOG_TWO_PI - 2.0 * math.log(p.sigma) - 0.5 * math.log(omr2) - 0.5 * quad
    if np.ndim(out) == 0:
        return float(out)
    return out


def loglik_obs(y_mn: float, y_nm: float, obs: GameObservation, p: LikelihoodParams) -> float:
    """`loglik_pair` evaluated at one observation's recorded scores."""
    return loglik_pair(y_mn, y_nm, obs.score_mn, obs.score_nm, p)


def pair_chol(p: LikelihoodParams) -> np.ndarray:
    """Lower Cholesky factor of the 2x2 score covariance."""
    validate_params(p.sigma, p.rho)
    return p.sigma * np.array([[1.0, 0.0], [p.rho, math.sqrt(1.0 - p.rho * p.rho)]])

def sample_pair(y_mn, y_nm, p: LikelihoodParams, rng: np.random.Generator):
    """Exact draw of a score pair; vectorizes over equally shaped mean arrays."""
    chol = pair_chol(p)
    means = np.stack([np.asarray(y_mn, dtype=float), np.asarray(y_nm, dtype=float)], axis=-1)
    z = rng.standard_normal(means.shape)
    draw = means + z @ chol.T
    if means.ndim == 1:
        return float(draw[0]), float(draw[1])
    return draw


def loglik_total(y_pairs, scores, p: LikelihoodParams) -> float:
    """Sum of pairwise log likelihoods, each game counted once.

    ``y_pairs`` and ``scores`` are (G, 2) arrays aligned row for row.
    """
    y = np.asarray(y_pairs, dtype=float).reshape(-1, 2)
    s = np.asarray(scores, dtype=float).reshape(-1, 2)
    if y.shape != s.shape:
        raise DimensionMismatchError(
            f"{y.shape[0]} latent pairs vs {s.shape[0]} observed pairs",
            expected=s.shape,
            got=y.shape,
        )
    if y.shape[0] == 0:
        return 0.0
    return float(np.sum(loglik_pair(y[:, 0], y[:, 1], s[:, 0], s[:, 1], p)))
