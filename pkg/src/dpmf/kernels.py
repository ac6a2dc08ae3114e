"""Correlation functions over side information and covariance assembly.

All kernels here are correlation functions (unit marginal variance); signal
amplitude is carried by the inter-feature covariance instead.  Time-aware
variants first pass the time coordinate through a piecewise-linear warp that
compresses each between-season gap to a small effective length, which is how
nonstationarity across seasons enters the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CholeskyError, DimensionMismatchError, InvalidParameterError

ARD = "ard"
PERIODIC = "periodic"
ARD_WARP = "ard_warp"

KERNEL_VARIANTS = (ARD, PERIODIC, ARD_WARP)

# Jitter levels tried in order when a correlation matrix is numerically rank
# deficient (duplicate points, near-constant kernels).
JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)

# Fixed jitter floor for factors living inside a chain: keeps the factored
# covariance a continuous function of the hyperparameters, which slice
# targets require (the ladder's success boundary is discontinuous).
CHAIN_JITTER = 1e-8


@dataclass
class KernelHyperparams:
    """Settings of one feature's correlation function.

    ``length_scales`` has one entry per active input dimension.  ``period``
    is only meaningful for the periodic variant, ``season_gap`` (effective
    weeks between seasons) only for the warped variant.
    """

    variant: str
    length_scales: np.ndarray
    period: float | None = None
    season_gap: float | None = None

    def __post_init__(self):
        self.length_scales = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if self.variant not in KERNEL_VARIANTS:
            raise InvalidParameterError(f"unknown kernel variant {self.variant!r}")
        if self.length_scales.ndim != 1 or self.length_scales.size == 0:
            raise InvalidParameterError("length_scales must be a nonempty vector")
        if not np.all(np.isfinite(self.length_scales)) or not np.all(self.length_scales > 0):
            raise InvalidParameterError(
                f"length scales must be positive and finite, got {self.length_scales}"
            )
        if self.variant == PERIODIC:
            if self.period is None or not np.isfinite(self.period) or self.period <= 0:
                raise InvalidParameterError(f"periodic variant needs period > 0, got {self.period}")
        if self.variant == ARD_WARP:
            if (
                self.season_gap is None
                or not np.isfinite(self.season_gap)
                or self.season_gap <= 0
            ):
                raise InvalidParameterError(
                    f"warped variant needs season_gap > 0, got {self.season_gap}"
                )

    def copy(self) -> "KernelHyperparams":
        return KernelHyperparams(
            variant=self.variant,
            length_scales=self.length_scales.copy(),
            period=self.period,
            season_gap=self.season_gap,
        )


@dataclass
class CovMatrix:
    """A correlation matrix plus, once factored, its jittered Cholesky factor.

    ``chol`` satisfies chol @ chol.T == values + jitter_used * I up to
    roundoff; ``jitter_used`` is 0 whenever the matrix factors cleanly.
    """

    values: np.ndarray
    chol: np.ndarray | None = None
    jitter_used: float = 0.0


def ard_corr(x, x2, h: KernelHyperparams) -> float:
    """Squared-exponential correlation with one length scale per dimension."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.shape != h.length_scales.shape:
        raise DimensionMismatchError(
            f"point dims {x.shape[0]} and {x2.shape[0]} must match "
            f"{h.length_scales.shape[0]} length scales",
            expected=h.length_scales.shape[0],
            got=(x.shape[0], x2.shape[0]),
        )
    z = (x - x2) / h.length_scales
    return float(np.exp(-0.5 * np.dot(z, z)))


def periodic_corr(x: float, x2: float, h: KernelHyperparams) -> float:
    """Periodic correlation of two scalar inputs.

    The separation is mapped through 2*pi/period before the sine, so the
    correlation returns to 1 at integer multiples of the period.
    """
    if h.variant != PERIODIC:
        raise InvalidParameterError(f"periodic_corr needs a periodic variant, got {h.variant!r}")
    ell = float(h.length_scales[0])
    angle = np.pi * (float(x) - float(x2)) / h.period
    s = np.sin(angle)
    return float(np.exp(-2.0 * s * s / (ell * ell)))


def _warp_knots(season_calendar, gap: float):
    """Breakpoints of the piecewise-linear warp and their warped images."""
    if not season_calendar:
        raise InvalidParameterError("season calendar is empty")
    if not np.isfinite(gap) or gap <= 0:
        raise InvalidParameterError(f"season gap must be positive, got {gap}")
    knots: list[float] = []
    warped: list[float] = []
    for start, end in season_calendar:
        start = float(start)
        end = float(end)
        if end < start:
            raise InvalidParameterError(f"season ends before it starts: ({start}, {end})")
        if not knots:
            knots += [start, end]
            warped += [start, end]
            continue
        prev_end = knots[-1]
        if start < prev_end:
            raise InvalidParameterError(
                f"season calendar overlaps or is unsorted near week {start}"
            )
        if start == prev_end:
            # contiguous seasons: no gap to compress
            knots.append(end)
            warped.append(warped[-1] + (end - start))
        else:
            knots += [start, end]
            warped += [warped[-1] + gap, warped[-1] + gap + (end - start)]
    return np.asarray(knots), np.asarray(warped)


def warp_time(t, season_calendar, gap: float):
    """Map true weeks to effective weeks.

    Identity within each season; each between-season gap of true length G is
    traversed linearly in ``gap`` effective weeks.  Monotone nondecreasing and
    continuous.  Accepts scalars or arrays.
    """
    arr = np.asarray(t, dtype=float)
    knots, warped = _warp_knots(season_calendar, gap)
    if np.any(arr < knots[0]):
        raise InvalidParameterError(
            f"time {np.min(arr)} precedes the first season start {knots[0]}"
        )
    out = np.interp(arr, knots, warped)
    beyond = arr > knots[-1]
    if np.any(beyond):
        out = np.where(beyond, warped[-1] + (arr - knots[-1]), out)
    if arr.ndim == 0:
        return float(out)
    return out


def _active_points(points: np.ndarray, h: KernelHyperparams, season_calendar, time_dim: int):
    """Apply the configured warp and check dimensions; returns scaled points."""
    if h.variant == ARD_WARP:
        if season_calendar is None:
            raise InvalidParameterError("warped kernel variant needs a season calendar")
        points = points.copy()
        points[:, time_dim] = warp_time(points[:, time_dim], season_calendar, h.season_gap)
    if points.shape[1] != h.length_scales.shape[0]:
        raise DimensionMismatchError(
            f"points have {points.shape[1]} dims but kernel has "
            f"{h.length_scales.shape[0]} length scales",
            expected=h.length_scales.shape[0],
            got=points.shape[1],
        )
    return points / h.length_scales


def _check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidParameterError("need a nonempty 2-d array of points")
    if not np.all(np.isfinite(pts)):
        raise InvalidParameterError("side information coordinates must be finite")
    return pts


def build_cov_matrix(points, h: KernelHyperparams, season_calendar=None, time_dim: int = 0) -> CovMatrix:
    """Correlation matrix of a point set under one kernel configuration."""
    pts = _check_points(points)
    if h.variant == PERIODIC:
        tcol = pts[:, time_dim]
        angle = np.pi * (tcol[:, None] - tcol[None, :]) / h.period
        ell = float(h.length_scales[0])
        vals = np.exp(-2.0 * np.sin(angle) ** 2 / (ell * ell))
    else:
        z = _active_points(pts, h, season_calendar, time_dim)
        diff = z[:, None, :] - z[None, :, :]
        vals = np.exp(-0.5 * np.einsum("ijd,ijd->ij", diff, diff))
    return CovMatrix(values=vals)


def cross_corr_matrix(points_a, points_b, h: KernelHyperparams, season_calendar=None, time_dim: int = 0) -> np.ndarray:
    """Correlations between two point sets (rows: a, columns: b)."""
    pa = _check_points(points_a)
    pb = _check_points(points_b)
    if h.variant == PERIODIC:
        ta = pa[:, time_dim]
        tb = pb[:, time_dim]
        angle = np.pi * (ta[:, None] - tb[None, :]) / h.period
        ell = float(h.length_scales[0])
        return np.exp(-2.0 * np.sin(angle) ** 2 / (ell * ell))
    za = _active_points(pa, h, season_calendar, time_dim)
    zb = _active_points(pb, h, season_calendar, time_dim)
    diff = za[:, None, :] - zb[None, :, :]
    return np.exp(-0.5 * np.einsum("ijd,ijd->ij", diff, diff))


def _chol_jitter(values: np.ndarray, min_jitter: float = 0.0):
    """Factor ``values`` with escalating diagonal jitter; returns (L, jitter).

    ``min_jitter`` skips the ladder's lower rungs.  Samplers factor with a
    fixed 1e-8 floor so the factor varies continuously with hyperparameters;
    a success/failure boundary between rungs would otherwise make slice
    targets discontinuous and strand the shrinking bracket.
    """
    n = values.shape[0]
    for jit in JITTER_LADDER:
        if jit < min_jitter:
            continue
        target = values if jit == 0.0 else values + jit * np.eye(n)
        try:
            return np.linalg.cholesky(target), jit
        except np.linalg.LinAlgError:
            continue
    raise CholeskyError(
        f"matrix is effectively indefinite: factorization failed at jitter {JITTER_LADDER[-1]:g}"
    )


def cholesky_with_jitter(c: CovMatrix) -> CovMatrix:
    """Populate the Cholesky factor of a covariance, adding jitter if needed.

    Tries jitter 0 first, then 1e-8 escalating by a factor of 10 up to 1e-2.
    Raises :class:`CholeskyError` if the matrix fails at every level.
    """
    vals = np.asarray(c.values, dtype=float)
    if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
        raise InvalidParameterError(f"covariance must be square, got shape {vals.shape}")
    if not np.allclose(vals, vals.T, rtol=1e-12, atol=1e-12):
        raise InvalidParameterError("covariance matrix is not symmetric")
    chol, jit = _chol_jitter(vals)
    return CovMatrix(values=c.values, chol=chol, jitter_used=jit)


def factor_cov(points, h: KernelHyperparams, season_calendar=None, time_dim: int = 0,
               min_jitter: float = 0.0) -> CovMatrix:
    """Build and factor the correlation matrix of ``points`` in one step."""
    cov = build_cov_matrix(points, h, season_calendar=season_calendar, time_dim=time_dim)
    chol, jit = _chol_jitter(cov.values, min_jitter=min_jitter)
    cov.chol = chol
    cov.jitter_used = jit
    return cov
