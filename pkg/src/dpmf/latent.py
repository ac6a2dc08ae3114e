"""Latent structure: per-member feature functions and their assembly.

Every member owns K raw Gaussian-process function values at the side
information points of its own games.  Raw values are mixed across features by
the Cholesky factor of an inter-feature covariance, shifted by a constant
mean, and the column side is pushed through a softplus so the product
Y = U * softplus(V)^T has no sign-flip ambiguity.  Raw states stay jointly
Gaussian; the softplus is applied only when assembling Y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .errors import DimensionMismatchError, InvalidParameterError
from .likelihood import GameObservation, LikelihoodParams, sample_pair

# Model variants: which side information the latent functions see.
PMF = "pmf"
DPMF_T = "dpmf_t"
DPMF_H = "dpmf_h"
DPMF_TH = "dpmf_th"

MODEL_VARIANTS = (PMF, DPMF_T, DPMF_H, DPMF_TH)

_VARIANT_DIM = {PMF: 1, DPMF_T: 1, DPMF_H: 1, DPMF_TH: 2}


def variant_dim(variant: str) -> int:
    """Input dimension of the latent functions under a model variant."""
    if variant not in _VARIANT_DIM:
        raise InvalidParameterError(f"unknown model variant {variant!r}")
    return _VARIANT_DIM[variant]


def kernel_variant_for(variant: str) -> str:
    """Kernel family used by a model variant (time-aware ones get the warp)."""
    if variant in (DPMF_T, DPMF_TH):
        return kernels.ARD_WARP
    return kernels.ARD


def role_points(week: float, variant: str):
    """Evaluation points of the two sides of one game.

    The home (row) member sees indicator 1, the away (column) member 0; the
    constant variant collapses every game to a single shared point.
    """
    if variant == PMF:
        p = np.array([0.0])
        return p, p
    if variant == DPMF_T:
        p = np.array([float(week)])
        return p, p
    if variant == DPMF_H:
        return np.array([1.0]), np.array([0.0])
    if variant == DPMF_TH:
        return np.array([float(week), 1.0]), np.array([float(week), 0.0])
    raise InvalidParameterError(f"unknown model variant {variant!r}")


@dataclass
class ModelShape:
    """Problem dimensions: members per side, features, input dimension."""

    M: int
    N: int
    K: int
    D: int

    def __post_init__(self):
        for name in ("M", "N", "K", "D"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1, got {getattr(self, name)}")


class CrossCov:
    """Inter-feature covariance held through its lower Cholesky factor."""

    def __init__(self, chol: np.ndarray):
        chol = np.asarray(chol, dtype=float)
        if chol.ndim != 2 or chol.shape[0] != chol.shape[1]:
            raise InvalidParameterError(f"factor must be square, got shape {chol.shape}")
        if not np.allclose(chol, np.tril(chol)):
            raise InvalidParameterError("factor must be lower triangular")
        if np.any(np.diag(chol) <= 0):
            raise InvalidParameterError("factor diagonal must be strictly positive")
        self.chol = chol

    @property
    def sigma(self) -> np.ndarray:
        return self.chol @ self.chol.T

    @property
    def k(self) -> int:
        return self.chol.shape[0]

    @classmethod
    def from_sigma(cls, sigma) -> "CrossCov":
        sigma = np.asarray(sigma, dtype=float)
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise InvalidParameterError("cross covariance is not positive definite") from exc
        return cls(chol)

    @classmethod
    def identity(cls, k: int) -> "CrossCov":
        return cls(np.eye(k))

    def copy(self) -> "CrossCov":
        return CrossCov(self.chol.copy())


def softplus(r):
    """ln(1 + e^r), computed without overflow; strictly increasing."""
    return np.logaddexp(0.0, r)


def assemble_feature(f_stack, cc: CrossCov, mean) -> np.ndarray:
    """Mix one input's K raw values across features and add the mean."""
    f_stack = np.asarray(f_stack, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if f_stack.shape[0] != cc.k or mean.shape[0] != cc.k:
        raise DimensionMismatchError(
            f"stack of {f_stack.shape[0]} and mean of {mean.shape[0]} vs "
            f"{cc.k} features",
            expected=cc.k,
            got=f_stack.shape[0],
        )
    return cc.chol @ f_stack + mean


def latent_y(u, v_raw) -> float:
    """Inner product of a row feature vector with the positive column side.

    The softplus is applied to ``v_raw`` here so stored states stay Gaussian.
    """
    u = np.asarray(u, dtype=float)
    v_raw = np.asarray(v_raw, dtype=float)
    if u.shape != v_raw.shape:
        raise DimensionMismatchError(
            f"u has length {u.shape} but v has {v_raw.shape}",
            expected=u.shape,
            got=v_raw.shape,
        )
    return float(np.dot(u, softplus(v_raw)))


def whiten(f, mean, chol_cov) -> np.ndarray:
    """Triangular solve mapping correlated values to their white coordinates."""
    f = np.asarray(f, dtype=float)
    mean = np.asarray(mean, dtype=float)
    chol_cov = np.asarray(chol_cov, dtype=float)
    if np.any(np.diag(chol_cov) == 0.0):
        raise InvalidParameterError("triangular factor is singular")
    return solve_triangular(chol_cov, f - mean, lower=True, check_finite=False)


def unwhiten(nu, mean, chol_cov) -> np.ndarray:
    """Inverse of :func:`whiten`: mean + L @ nu."""
    nu = np.asarray(nu, dtype=float)
    mean = np.asarray(mean, dtype=float)
    chol_cov = np.asarray(chol_cov, dtype=float)
    if chol_cov.shape[1] != nu.shape[0]:
        raise DimensionMismatchError(
            f"factor is {chol_cov.shape} but white vector has length {nu.shape[0]}",
            expected=chol_cov.shape[1],
            got=nu.shape[0],
        )
    return mean + chol_cov @ nu


@dataclass
class ModelData:
    """Static observation layout shared by every chain on one window.

    Member evaluation points are stored as one flat (P, D) array; member m
    owns rows offsets[m]:offsets[m+1].  Exact-duplicate points within a
    member are collapsed, so a function value is represented once per place
    it is observed.  ``gi_row``/``gi_col`` give, per game, the flat index of
    the row and column member's evaluation point.
    """

    n_members: int
    variant: str
    inputs: np.ndarray
    offsets: np.ndarray
    row: np.ndarray
    col: np.ndarray
    gi_row: np.ndarray
    gi_col: np.ndarray
    scores: np.ndarray
    observations: list[GameObservation]
    member_games: list[np.ndarray]
    season_calendar: list[tuple[float, float]] = field(default_factory=list)

    @property
    def n_games(self) -> int:
        return int(self.row.shape[0])

    @property
    def n_points(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[1])

    def member_slice(self, m: int) -> slice:
        return slice(int(self.offsets[m]), int(self.offsets[m + 1]))

    def member_points(self, m: int) -> np.ndarray:
        return self.inputs[self.member_slice(m)]


def build_model_data(
    observations: list[GameObservation],
    n_members: int,
    variant: str,
    season_calendar=None,
) -> ModelData:
    """Index observations into the flat per-member evaluation point layout."""
    if variant not in MODEL_VARIANTS:
        raise InvalidParameterError(f"unknown model variant {variant!r}")
    dim = variant_dim(variant)
    member_pts: list[list[tuple]] = [[] for _ in range(n_members)]
    member_index: list[dict] = [{} for _ in range(n_members)]
    gi_row = np.zeros(len(observations), dtype=np.intp)
    gi_col = np.zeros(len(observations), dtype=np.intp)
    row = np.zeros(len(observations), dtype=np.intp)
    col = np.zeros(len(observations), dtype=np.intp)
    scores = np.zeros((len(observations), 2))
    member_games: list[list[int]] = [[] for _ in range(n_members)]

    def local_index(member: int, point: np.ndarray) -> int:
        key = tuple(point.tolist())
        idx = member_index[member].get(key)
        if idx is None:
            idx = len(member_pts[member])
            member_index[member][key] = idx
            member_pts[member].append(key)
        return idx

    local_row = np.zeros(len(observations), dtype=np.intp)
    local_col = np.zeros(len(observations), dtype=np.intp)
    for g, obs in enumerate(observations):
        if not (0 <= obs.row_member < n_members and 0 <= obs.col_member < n_members):
            raise InvalidParameterError(
                f"observation {g} references member outside 0..{n_members - 1}"
            )
        week = float(obs.side_info[0])
        p_row, p_col = role_points(week, variant)
        row[g] = obs.row_member
        col[g] = obs.col_member
        local_row[g] = local_index(obs.row_member, p_row)
        local_col[g] = local_index(obs.col_member, p_col)
        scores[g, 0] = obs.score_mn
        scores[g, 1] = obs.score_nm
        member_games[obs.row_member].append(g)
        if obs.col_member != obs.row_member:
            member_games[obs.col_member].append(g)

    counts = np.array([len(p) for p in member_pts], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = int(offsets[-1])
    inputs = np.zeros((total, dim))
    for m, pts in enumerate(member_pts):
        if pts:
            inputs[offsets[m] : offsets[m + 1]] = np.asarray(pts, dtype=float)
    gi_row = offsets[row] + local_row
    gi_col = offsets[col] + local_col
    return ModelData(
        n_members=n_members,
        variant=variant,
        inputs=inputs,
        offsets=offsets,
        row=row,
        col=col,
        gi_row=gi_row,
        gi_col=gi_col,
        scores=scores,
        observations=list(observations),
        member_games=[np.asarray(g, dtype=np.intp) for g in member_games],
        season_calendar=list(season_calendar or []),
    )


def prior_only_data(points_per_member: list[np.ndarray], variant: str, season_calendar=None) -> ModelData:
    """Layout with evaluation points but no games; used by prior-recovery tests."""
    n_members = len(points_per_member)
    pts = [np.atleast_2d(np.asarray(p, dtype=float)) for p in points_per_member]
    counts = np.array([p.shape[0] for p in pts], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    inputs = np.vstack(pts) if pts else np.zeros((0, variant_dim(variant)))
    empty = np.zeros(0, dtype=np.intp)
    return ModelData(
        n_members=n_members,
        variant=variant,
        inputs=inputs,
        offsets=offsets,
        row=empty,
        col=empty.copy(),
        gi_row=empty.copy(),
        gi_col=empty.copy(),
        scores=np.zeros((0, 2)),
        observations=[],
        member_games=[empty.copy() for _ in range(n_members)],
        season_calendar=list(season_calendar or []),
    )


@dataclass
class LatentState:
    """Raw function values of every member, plus their white coordinates.

    Arrays are (K, P) over the flat point layout of a :class:`ModelData`.
    ``f = L_theta @ nu`` holds per member and feature under the current
    kernel hyperparameters (the raw process mean is zero; constant means are
    added only during assembly).
    """

    f_u: np.ndarray
    f_v: np.ndarray
    nu_u: np.ndarray
    nu_v: np.ndarray

    @property
    def k(self) -> int:
        return int(self.f_u.shape[0])

    def copy(self) -> "LatentState":
        return LatentState(
            f_u=self.f_u.copy(),
            f_v=self.f_v.copy(),
            nu_u=self.nu_u.copy(),
            nu_v=self.nu_v.copy(),
        )


def assemble_all(latent: LatentState, cc_u: CrossCov, cc_v: CrossCov, mean_u, mean_v):
    """Assembled row features and positive column features at every point."""
    asm_u = cc_u.chol @ latent.f_u + np.asarray(mean_u, dtype=float)[:, None]
    asm_v = softplus(cc_v.chol @ latent.f_v + np.asarray(mean_v, dtype=float)[:, None])
    return asm_u, asm_v


def compute_y(latent: LatentState, cc_u: CrossCov, cc_v: CrossCov, mean_u, mean_v, data: ModelData, games=None) -> np.ndarray:
    """Latent mean pairs (y_mn, y_nm) for all games, or a subset of them."""
    asm_u, asm_v = assemble_all(latent, cc_u, cc_v, mean_u, mean_v)
    if games is None:
        gi_row, gi_col = data.gi_row, data.gi_col
    else:
        gi_row, gi_col = data.gi_row[games], data.gi_col[games]
    y = np.empty((gi_row.shape[0], 2))
    y[:, 0] = np.einsum("kg,kg->g", asm_u[:, gi_row], asm_v[:, gi_col])
    y[:, 1] = np.einsum("kg,kg->g", asm_u[:, gi_col], asm_v[:, gi_row])
    return y


def draw_latent_from_prior(
    data: ModelData,
    hypers_u: list[kernels.KernelHyperparams],
    hypers_v: list[kernels.KernelHyperparams],
    rng: np.random.Generator,
    chol_u=None,
    chol_v=None,
) -> LatentState:
    """Sample every member's raw functions from their process prior.

    Optionally reuses prefactored per-member covariances (lists indexed
    [k][member]); otherwise factors them on the fly.
    """
    k = len(hypers_u)
    total = data.n_points
    f_u = np.zeros((k, total))
    f_v = np.zeros((k, total))
    nu_u = np.zeros((k, total))
    nu_v = np.zeros((k, total))
    for side, hypers, f, nu, chols in (
        ("u", hypers_u, f_u, nu_u, chol_u),
        ("v", hypers_v, f_v, nu_v, chol_v),
    ):
        for ki, h in enumerate(hypers):
            for m in range(data.n_members):
                sl = data.member_slice(m)
                n_m = sl.stop - sl.start
                if n_m == 0:
                    continue
                if chols is not None:
                    cov = chols[ki][m]
                else:
                    cov = kernels.factor_cov(
                        data.inputs[sl], h, season_calendar=data.season_calendar
                    )
                z = rng.standard_normal(n_m)
                nu[ki, sl] = z
                f[ki, sl] = cov.chol @ z
    return LatentState(f_u=f_u, f_v=f_v, nu_u=nu_u, nu_v=nu_v)


def generate_synthetic(
    games: list[tuple[int, int, float]],
    n_members: int,
    variant: str,
    hypers_u: list[kernels.KernelHyperparams],
    hypers_v: list[kernels.KernelHyperparams],
    cc_u: CrossCov,
    cc_v: CrossCov,
    mean_u,
    mean_v,
    lik: LikelihoodParams,
    season_calendar,
    seed,
):
    """Draw one full dataset from the generative model.

    ``games`` lists (row_member, col_member, week) triples.  Returns the
    populated :class:`ModelData`, the ground-truth latent state and the
    (G, 2) array of latent mean pairs.  Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    placeholder = [
        GameObservation(row_member=r, col_member=c, side_info=np.array([w]), score_mn=0.0, score_nm=0.0)
        for r, c, w in games
    ]
    data = build_model_data(placeholder, n_members, variant, season_calendar=season_calendar)
    latent = draw_latent_from_prior(data, hypers_u, hypers_v, rng)
    y = compute_y(latent, cc_u, cc_v, mean_u, mean_v, data)
    drawn = sample_pair(y[:, 0], y[:, 1], lik, rng)
    data.scores[:, :] = drawn
    for g, obs in enumerate(data.observations):
        obs.score_mn = float(drawn[g, 0])
        obs.score_nm = float(drawn[g, 1])
    return data, latent, y
