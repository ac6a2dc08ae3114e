"""MCMC transition operators for the latent-function matrix model.

Latent function values move by elliptical slice sampling per member, on the
stacked vector of that member's K feature functions.  Kernel hyperparameters
move by univariate slice sampling after whitening (the white coordinates are
held fixed and function values are re-derived from them), which decouples the
proposal from the strong prior coupling between values and hyperparameters.
Cross-covariance factors, means and likelihood parameters move by univariate
slice sampling against their full conditionals.  A sweep composes these in a
fixed order and leaves the joint posterior invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels, latent as lat
from .errors import CholeskyError, InvalidParameterError, InvalidStateError, SliceError
from .likelihood import LikelihoodParams, loglik_total, sample_pair

LOG_TWO_PI = math.log(2.0 * math.pi)

SIDE_U = "u"
SIDE_V = "v"


@dataclass
class SliceConfig:
    """Tuning constants for one univariate slice sampling move."""

    initial_width: float = 1.0
    max_stepouts: int = 20
    max_shrinks: int = 64

    def __post_init__(self):
        if self.initial_width <= 0:
            raise InvalidParameterError(f"slice width must be positive, got {self.initial_width}")
        if self.max_stepouts < 1 or self.max_shrinks < 1:
            raise InvalidParameterError("stepout and shrink budgets must be >= 1")


@dataclass
class SliceConfigs:
    """Widths per parameter family: log-scale parameters, means, the rest."""

    log_scale: SliceConfig = field(default_factory=lambda: SliceConfig(initial_width=1.0))
    mean: SliceConfig = field(default_factory=lambda: SliceConfig(initial_width=5.0))
    unit: SliceConfig = field(default_factory=lambda: SliceConfig(initial_width=1.0))
    ess_max_shrinks: int = 64


@dataclass
class Priors:
    """Hyperprior settings for everything above the latent functions.

    Length scales are uniform in log space over a wide box; the season gap is
    uniform on its natural scale.  Cross-covariance factors get independent
    normals on the log diagonal and raw off-diagonal entries, means a vague
    zero-centered normal, the noise scale a lognormal centered on the typical
    per-side score spread, and the score correlation a flat prior on (-1, 1).
    """

    log_ls_lo: float = math.log(0.1)
    log_ls_hi: float = math.log(500.0)
    gap_lo: float = 0.1
    gap_hi: float = 40.0
    mean_sd: float = 10.0
    cross_diag_sd: float = 1.0
    cross_off_sd: float = 1.0
    log_sigma_mean: float = math.log(10.0)
    log_sigma_sd: float = 1.0


def _log_normal(x: float, mean: float, sd: float) -> float:
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - 0.5 * LOG_TWO_PI


def ellipse_point(f, mean, aux, theta: float) -> np.ndarray:
    """Point at angle ``theta`` on the ellipse through ``f`` and ``aux``."""
    return (f - mean) * math.cos(theta) + aux * math.sin(theta) + mean


def _ess_core(f, mean, aux, loglik, rng: np.random.Generator, max_shrinks: int) -> np.ndarray:
    cur = loglik(f)
    if not np.isfinite(cur):
        raise InvalidStateError(f"log likelihood at the current state is {cur}")
    log_y = cur + math.log(rng.random())
    theta = rng.uniform(0.0, 2.0 * math.pi)
    t_min, t_max = theta - 2.0 * math.pi, theta
    for _ in range(max_shrinks + 1):
        prop = ellipse_point(f, mean, aux, theta)
        if loglik(prop) > log_y:
            return prop
        if theta < 0.0:
            t_min = theta
        else:
            t_max = theta
        theta = rng.uniform(t_min, t_max)
    raise SliceError(f"elliptical bracket failed to accept within {max_shrinks} shrinks")


def ess_step(f, prior_mean, prior_chol, loglik, rng: np.random.Generator, max_shrinks: int = 64) -> np.ndarray:
    """One elliptical slice sampling update of a Gaussian-prior vector.

    Leaves the density proportional to N(f; prior_mean, L L^T) * exp(loglik)
    invariant.  Always terminates: the angle bracket shrinks toward the
    current state, whose likelihood exceeds the threshold.
    """
    f = np.asarray(f, dtype=float)
    prior_mean = np.asarray(prior_mean, dtype=float)
    aux = prior_chol @ rng.standard_normal(f.shape[0])
    return _ess_core(f, prior_mean, aux, loglik, rng, max_shrinks)


def slice_sample_1d(x0: float, log_density, cfg: SliceConfig, rng: np.random.Generator) -> float:
    """One univariate slice sampling update with step-out and shrinkage."""
    ly0 = log_density(x0)
    if not np.isfinite(ly0):
        raise InvalidStateError(f"log density at the current point is {ly0}")
    log_y = ly0 + math.log(rng.random())
    w = cfg.initial_width
    left = x0 - w * rng.random()
    right = left + w
    j = int(math.floor(cfg.max_stepouts * rng.random()))
    k = (cfg.max_stepouts - 1) - j
    while j > 0 and log_density(left) > log_y:
        left -= w
        j -= 1
    while k > 0 and log_density(right) > log_y:
        right += w
        k -= 1
    collapse = max(abs(x0), 1.0) * 1e-14
    for _ in range(cfg.max_shrinks):
        if right - left < collapse:
            # no admissible move: the bracket has shrunk onto the current point
            log_density(x0)
            return x0
        x1 = rng.uniform(left, right)
        if log_density(x1) > log_y:
            return x1
        if x1 > x0:
            right = x1
        elif x1 < x0:
            left = x1
        else:
            log_density(x0)
            return x0
    raise SliceError(f"slice interval failed to accept within {cfg.max_shrinks} shrinks")


@dataclass
class ChainState:
    """Everything one Markov chain owns.

    The per-member, per-feature covariance factors are cached here and kept
    consistent with the hyperparameters; they are rebuilt whenever the
    hyperparameters move.
    """

    latent: lat.LatentState
    hypers_u: list[kernels.KernelHyperparams]
    hypers_v: list[kernels.KernelHyperparams]
    cc_u: lat.CrossCov
    cc_v: lat.CrossCov
    mean_u: np.ndarray
    mean_v: np.ndarray
    lik: LikelihoodParams
    rng: np.random.Generator
    iteration: int = 0
    hypers_frozen: bool = False
    chol_u: list[list[kernels.CovMatrix | None]] = field(default_factory=list)
    chol_v: list[list[kernels.CovMatrix | None]] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.hypers_u)

    def side(self, which: str):
        """(f, nu, hypers, chol cache, cross cov, mean) of one side."""
        if which == SIDE_U:
            return (self.latent.f_u, self.latent.nu_u, self.hypers_u, self.chol_u,
                    self.cc_u, self.mean_u)
        if which == SIDE_V:
            return (self.latent.f_v, self.latent.nu_v, self.hypers_v, self.chol_v,
                    self.cc_v, self.mean_v)
        raise InvalidParameterError(f"side must be 'u' or 'v', got {which!r}")


def factor_feature(data: lat.ModelData, h: kernels.KernelHyperparams) -> list[kernels.CovMatrix | None]:
    """Per-member factored covariances of one feature's process.

    Members with identical evaluation points (common: every team plays every
    week) share one factored matrix; all uses are read-only.
    """
    out: list[kernels.CovMatrix | None] = []
    shared: dict[bytes, kernels.CovMatrix] = {}
    for m in range(data.n_members):
        sl = data.member_slice(m)
        if sl.stop == sl.start:
            out.append(None)
            continue
        key = data.inputs[sl].tobytes()
        cov = shared.get(key)
        if cov is None:
            cov = kernels.factor_cov(data.inputs[sl], h, season_calendar=data.season_calendar,
                                     min_jitter=kernels.CHAIN_JITTER)
            shared[key] = cov
        out.append(cov)
    return out


def build_chol_cache(data: lat.ModelData, hypers: list[kernels.KernelHyperparams]):
    return [factor_feature(data, h) for h in hypers]


def draw_hypers_from_prior(
    kernel_variant: str,
    dim: int,
    priors: Priors,
    rng: np.random.Generator,
    period: float = 52.0,
) -> kernels.KernelHyperparams:
    ls = np.exp(rng.uniform(priors.log_ls_lo, priors.log_ls_hi, size=dim))
    gap = None
    if kernel_variant == kernels.ARD_WARP:
        gap = float(rng.uniform(priors.gap_lo, priors.gap_hi))
    return kernels.KernelHyperparams(
        variant=kernel_variant,
        length_scales=ls,
        period=period if kernel_variant == kernels.PERIODIC else None,
        season_gap=gap,
    )


def draw_cross_cov_from_prior(k: int, priors: Priors, rng: np.random.Generator) -> lat.CrossCov:
    chol = np.zeros((k, k))
    for i in range(k):
        chol[i, i] = math.exp(rng.normal(0.0, priors.cross_diag_sd))
        for j in range(i):
            chol[i, j] = rng.normal(0.0, priors.cross_off_sd)
    return lat.CrossCov(chol)


def draw_state_from_prior(
    data: lat.ModelData,
    k: int,
    priors: Priors,
    rng: np.random.Generator,
    period: float = 52.0,
    use_periodic_time: bool = False,
    frozen_hypers: tuple[list, list] | None = None,
    hypers_frozen: bool = False,
) -> ChainState:
    """Fresh chain state with every unfixed component drawn from its prior."""
    kernel_variant = lat.kernel_variant_for(data.variant)
    if use_periodic_time:
        if data.variant != lat.DPMF_T:
            raise InvalidParameterError("the periodic kernel applies only to the time-only variant")
        kernel_variant = kernels.PERIODIC
    if frozen_hypers is not None:
        hypers_u = [h.copy() for h in frozen_hypers[0]]
        hypers_v = [h.copy() for h in frozen_hypers[1]]
    else:
        hypers_u = [draw_hypers_from_prior(kernel_variant, data.dim, priors, rng, period) for _ in range(k)]
        hypers_v = [draw_hypers_from_prior(kernel_variant, data.dim, priors, rng, period) for _ in range(k)]
    cc_u = draw_cross_cov_from_prior(k, priors, rng)
    cc_v = draw_cross_cov_from_prior(k, priors, rng)
    mean_u = rng.normal(0.0, priors.mean_sd, size=k)
    mean_v = rng.normal(0.0, priors.mean_sd, size=k)
    lik = LikelihoodParams(
        sigma=math.exp(rng.normal(priors.log_sigma_mean, priors.log_sigma_sd)),
        rho=float(rng.uniform(-1.0, 1.0)),
    )
    chol_u = build_chol_cache(data, hypers_u)
    chol_v = build_chol_cache(data, hypers_v)
    latent = lat.draw_latent_from_prior(data, hypers_u, hypers_v, rng, chol_u=chol_u, chol_v=chol_v)
    return ChainState(
        latent=latent,
        hypers_u=hypers_u,
        hypers_v=hypers_v,
        cc_u=cc_u,
        cc_v=cc_v,
        mean_u=mean_u,
        mean_v=mean_v,
        lik=lik,
        rng=rng,
        hypers_frozen=hypers_frozen,
        chol_u=chol_u,
        chol_v=chol_v,
    )


def chain_y(state: ChainState, data: lat.ModelData, games=None) -> np.ndarray:
    return lat.compute_y(state.latent, state.cc_u, state.cc_v, state.mean_u, state.mean_v, data, games)


def chain_loglik(state: ChainState, data: lat.ModelData) -> float:
    if data.n_games == 0:
        return 0.0
    return loglik_total(chain_y(state, data), data.scores, state.lik)


def update_latents(state: ChainState, data: lat.ModelData, cfgs: SliceConfigs | None = None) -> ChainState:
    """Elliptical slice update of each member's stacked feature vector.

    Per member the K feature blocks have independent process priors, so the
    auxiliary draw is assembled block by block from the cached factors.  The
    slice threshold uses only the likelihood of that member's own games.
    """
    cfgs = cfgs or SliceConfigs()
    for side in (SIDE_U, SIDE_V):
        f, nu, _, chols, _, _ = state.side(side)
        k = f.shape[0]
        for m in range(data.n_members):
            sl = data.member_slice(m)
            n_m = sl.stop - sl.start
            if n_m == 0:
                continue
            games = data.member_games[m]
            scores = data.scores[games]
            aux = np.empty((k, n_m))
            for ki in range(k):
                aux[ki] = chols[ki][m].chol @ state.rng.standard_normal(n_m)

            def loglik(vec):
                f[:, sl] = vec.reshape(k, n_m)
                if games.size == 0:
                    return 0.0
                y = chain_y(state, data, games)
                return loglik_total(y, scores, state.lik)

            cur = f[:, sl].ravel().copy()
            new = _ess_core(cur, np.zeros_like(cur), aux.ravel(), loglik,
                            state.rng, cfgs.ess_max_shrinks)
            f[:, sl] = new.reshape(k, n_m)
            for ki in range(k):
                nu[ki, sl] = solve_triangular(chols[ki][m].chol, f[ki, sl],
                                              lower=True, check_finite=False)
    return state


def _hyper_coords(h: kernels.KernelHyperparams):
    coords = [("ls", d) for d in range(h.length_scales.shape[0])]
    if h.variant == kernels.ARD_WARP:
        coords.append(("gap", 0))
    return coords


def _with_coord(h: kernels.KernelHyperparams, coord, value: float) -> kernels.KernelHyperparams:
    kind, idx = coord
    ls = h.length_scales.copy()
    gap = h.season_gap
    if kind == "ls":
        ls[idx] = value
    else:
        gap = value
    return kernels.KernelHyperparams(variant=h.variant, length_scales=ls, period=h.period, season_gap=gap)


def update_hypers_whitened(
    state: ChainState,
    data: lat.ModelData,
    k: int,
    side: str,
    priors: Priors | None = None,
    cfgs: SliceConfigs | None = None,
) -> ChainState:
    """Slice sample one feature's kernel hyperparameters with white noise fixed.

    Each coordinate moves in log space.  Re-deriving f = L @ nu at proposed
    settings folds the data constraint into the move; the Gaussian prior term
    cancels exactly under the reparameterization.  A failed factorization is
    treated as zero density, never as an error.
    """
    priors = priors or Priors()
    cfgs = cfgs or SliceConfigs()
    f, nu, hypers, chols, _, _ = state.side(side)
    h = hypers[k]
    coords = _hyper_coords(h)
    active = [m for m in range(data.n_members)
              if data.member_slice(m).stop > data.member_slice(m).start]

    def apply_candidate(cand: kernels.KernelHyperparams) -> bool:
        try:
            cand_chols = factor_feature(data, cand)
        except CholeskyError:
            return False
        hypers[k] = cand
        chols[k] = cand_chols
        for m in active:
            sl = data.member_slice(m)
            f[k, sl] = cand_chols[m].chol @ nu[k, sl]
        return True

    for coord in coords:
        kind = coord[0]
        if kind == "ls":
            lo, hi = priors.log_ls_lo, priors.log_ls_hi
            cur_val = float(hypers[k].length_scales[coord[1]])
        else:
            lo, hi = math.log(priors.gap_lo), math.log(priors.gap_hi)
            cur_val = float(hypers[k].season_gap)
        last_applied = [None]

        def log_density(eta):
            if eta < lo or eta > hi:
                return -np.inf
            # the gap prior is flat on its natural scale: moving in log space
            # brings a Jacobian of exp(eta)
            prior_term = eta if kind == "gap" else 0.0
            cand = _with_coord(hypers[k], coord, math.exp(eta))
            if not apply_candidate(cand):
                return -np.inf
            last_applied[0] = eta
            if data.n_games == 0:
                return prior_term
            return prior_term + loglik_total(chain_y(state, data), data.scores, state.lik)

        eta_new = slice_sample_1d(math.log(cur_val), log_density, cfgs.log_scale, state.rng)
        if last_applied[0] != eta_new:
            log_density(eta_new)
    return state


def _scalar_slice(state: ChainState, data: lat.ModelData, x0: float, setter, log_prior,
                  cfg: SliceConfig) -> float:
    def log_density(x):
        lp = log_prior(x)
        if lp == -np.inf:
            return -np.inf
        setter(x)
        if data.n_games == 0:
            return lp
        return lp + loglik_total(chain_y(state, data), data.scores, state.lik)

    x_new = slice_sample_1d(x0, log_density, cfg, state.rng)
    setter(x_new)
    return x_new


def update_cross_cov_means_lik(
    state: ChainState,
    data: lat.ModelData,
    priors: Priors | None = None,
    cfgs: SliceConfigs | None = None,
) -> ChainState:
    """Slice sample mixing factors, means and likelihood parameters."""
    priors = priors or Priors()
    cfgs = cfgs or SliceConfigs()
    k = state.k

    for cc in (state.cc_u, state.cc_v):
        for i in range(k):
            def set_diag(eta, cc=cc, i=i):
                cc.chol[i, i] = math.exp(eta)

            _scalar_slice(state, data, math.log(cc.chol[i, i]), set_diag,
                          lambda eta: _log_normal(eta, 0.0, priors.cross_diag_sd),
                          cfgs.log_scale)
            for j in range(i):
                def set_off(v, cc=cc, i=i, j=j):
                    cc.chol[i, j] = v

                _scalar_slice(state, data, float(cc.chol[i, j]), set_off,
                              lambda v: _log_normal(v, 0.0, priors.cross_off_sd),
                              cfgs.unit)

    for mean in (state.mean_u, state.mean_v):
        for i in range(k):
            def set_mean(v, mean=mean, i=i):
                mean[i] = v

            _scalar_slice(state, data, float(mean[i]), set_mean,
                          lambda v: _log_normal(v, 0.0, priors.mean_sd),
                          cfgs.mean)

    def set_log_sigma(eta):
        state.lik.sigma = math.exp(eta)

    _scalar_slice(state, data, math.log(state.lik.sigma), set_log_sigma,
                  lambda eta: _log_normal(eta, priors.log_sigma_mean, priors.log_sigma_sd),
                  cfgs.log_scale)

    def set_rho(v):
        state.lik.rho = v

    def rho_prior(v):
        return 0.0 if -1.0 < v < 1.0 else -np.inf

    _scalar_slice(state, data, float(state.lik.rho), set_rho, rho_prior, cfgs.unit)
    return state


def gibbs_sweep(
    state: ChainState,
    data: lat.ModelData,
    priors: Priors | None = None,
    cfgs: SliceConfigs | None = None,
    update_hypers: bool | None = None,
) -> ChainState:
    """One full pass over the chain state; leaves the posterior invariant.

    Order: latent functions (row side then column side), then each feature's
    kernel hyperparameters on both sides unless frozen, then mixing factors,
    means and likelihood parameters.
    """
    priors = priors or Priors()
    cfgs = cfgs or SliceConfigs()
    update_latents(state, data, cfgs)
    do_hypers = (not state.hypers_frozen) if update_hypers is None else update_hypers
    if do_hypers:
        for side in (SIDE_U, SIDE_V):
            for k in range(state.k):
                update_hypers_whitened(state, data, k, side, priors, cfgs)
    update_cross_cov_means_lik(state, data, priors, cfgs)
    state.iteration += 1
    return state


def resample_scores(state: ChainState, data: lat.ModelData) -> None:
    """Redraw every observed score pair from the current conditional model."""
    if data.n_games == 0:
        return
    y = chain_y(state, data)
    draws = sample_pair(y[:, 0], y[:, 1], state.lik, state.rng)
    data.scores[:, :] = draws
    for g, obs in enumerate(data.observations):
        obs.score_mn = float(draws[g, 0])
        obs.score_nm = float(draws[g, 1])


def whitened_max_error(state: ChainState, data: lat.ModelData) -> float:
    """Largest |f - L nu| over both sides; zero when bookkeeping is intact."""
    worst = 0.0
    for side in (SIDE_U, SIDE_V):
        f, nu, _, chols, _, _ = state.side(side)
        for ki in range(state.k):
            for m in range(data.n_members):
                sl = data.member_slice(m)
                if sl.stop == sl.start:
                    continue
                recon = chols[ki][m].chol @ nu[ki, sl]
                worst = max(worst, float(np.max(np.abs(recon - f[ki, sl]))))
    return worst


def extend_chain_state(state: ChainState, old_data: lat.ModelData, new_data: lat.ModelData) -> ChainState:
    """Carry a chain over to a grown observation window.

    Existing function values are kept; values at newly observed points are
    drawn from their process conditional given the old ones.  Requires the
    old per-member point lists to be prefixes of the new ones, which holds
    when windows only grow at the recent end.
    """
    k = state.k
    total = new_data.n_points
    new_latent = lat.LatentState(
        f_u=np.zeros((k, total)), f_v=np.zeros((k, total)),
        nu_u=np.zeros((k, total)), nu_v=np.zeros((k, total)),
    )
    new_chol_u = build_chol_cache(new_data, state.hypers_u)
    new_chol_v = build_chol_cache(new_data, state.hypers_v)
    for side, hypers, new_chols in ((SIDE_U, state.hypers_u, new_chol_u),
                                    (SIDE_V, state.hypers_v, new_chol_v)):
        f_old, _, _, old_chols, _, _ = state.side(side)
        f_new = new_latent.f_u if side == SIDE_U else new_latent.f_v
        nu_new = new_latent.nu_u if side == SIDE_U else new_latent.nu_v
        for m in range(new_data.n_members):
            sl_new = new_data.member_slice(m)
            n_new = sl_new.stop - sl_new.start
            if n_new == 0:
                continue
            if m < old_data.n_members:
                sl_old = old_data.member_slice(m)
                n_old = sl_old.stop - sl_old.start
            else:
                sl_old, n_old = slice(0, 0), 0
            if n_old > 0 and not np.array_equal(
                old_data.inputs[sl_old], new_data.inputs[sl_new][:n_old]
            ):
                raise InvalidStateError(
                    f"member {m}: old evaluation points are not a prefix of the new ones"
                )
            for ki in range(k):
                new_cov = new_chols[ki][m]
                if n_old == 0:
                    draw = new_cov.chol @ state.rng.standard_normal(n_new)
                    f_new[ki, sl_new] = draw
                else:
                    f_prev = f_old[ki, sl_old]
                    if n_new == n_old:
                        f_new[ki, sl_new] = f_prev
                    else:
                        old_cov = old_chols[ki][m]
                        add_pts = new_data.inputs[sl_new][n_old:]
                        kstar = kernels.cross_corr_matrix(
                            old_data.inputs[sl_old], add_pts, hypers[ki],
                            season_calendar=new_data.season_calendar,
                        )
                        a = solve_triangular(old_cov.chol, kstar, lower=True, check_finite=False)
                        alpha = solve_triangular(old_cov.chol, f_prev, lower=True, check_finite=False)
                        mean = a.T @ alpha
                        prior = kernels.build_cov_matrix(
                            add_pts, hypers[ki], season_calendar=new_data.season_calendar
                        ).values
                        cond = prior - a.T @ a
                        cond = 0.5 * (cond + cond.T)
                        cchol, _ = kernels._chol_jitter(cond)
                        f_new[ki, sl_new.start : sl_new.start + n_old] = f_prev
                        f_new[ki, sl_new.start + n_old : sl_new.stop] = (
                            mean + cchol @ state.rng.standard_normal(n_new - n_old)
                        )
                nu_new[ki, sl_new] = solve_triangular(
                    new_cov.chol, f_new[ki, sl_new], lower=True, check_finite=False
                )
    state.latent = new_latent
    state.chol_u = new_chol_u
    state.chol_v = new_chol_v
    return state
