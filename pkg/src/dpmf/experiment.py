"""Experiment protocols: synthetic data, hyperparameter pre-burn, the rolling
censored evaluation, single-range fits, and single-matchup prediction.

The rolling evaluation walks each season in fixed-week blocks.  Predictions
for a block use only strictly earlier games, windowed to the current season
plus a fixed number of previous ones.  Chains cold-start at the first
evaluated block of a season and warm-start from their own final state for
later blocks, extending latent functions to newly observed points by process
conditional draws.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import latent as lat
from . import prediction as pred
from . import samplers
from .config import ExperimentConfig
from .data import Dataset, GameRecord, dataset_from_records, write_games_csv
from .errors import InvalidParameterError
from .likelihood import LikelihoodParams

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# block partitioning and training windows

@dataclass
class Block:
    season_index: int
    block_index: int
    start_week: int
    end_week: int  # inclusive
    game_idx: np.ndarray


def partition_blocks(dataset: Dataset, block_weeks: int) -> list[Block]:
    """Consecutive fixed-width week blocks per season; remainders stay short."""
    blocks: list[Block] = []
    for s, season in enumerate(dataset.calendar):
        b = 0
        start = season.start_week
        while start <= season.end_week:
            end = min(start + block_weeks - 1, season.end_week)
            in_block = np.where(
                (dataset.game_season == s)
                & (dataset.weeks >= start)
                & (dataset.weeks <= end)
            )[0]
            blocks.append(Block(season_index=s, block_index=b, start_week=start,
                                end_week=end, game_idx=in_block))
            start += block_weeks
            b += 1
    return blocks


def training_indices(dataset: Dataset, season_index: int, start_week: int,
                     history_seasons: int) -> np.ndarray:
    """Games strictly before a block start, within the season window."""
    lo_season = season_index - history_seasons
    keep = (
        (dataset.weeks < start_week)
        & (dataset.game_season >= lo_season)
        & (dataset.game_season <= season_index)
    )
    return np.where(keep)[0]


def _sorted_train_obs(dataset: Dataset, idx: np.ndarray):
    order = idx[np.lexsort((idx, dataset.weeks[idx]))]
    return [dataset.observations[g] for g in order]


# ---------------------------------------------------------------------------
# frozen hyperparameters

def frozen_to_dict(hypers_u, hypers_v) -> dict:
    def one(h: kernels.KernelHyperparams) -> dict:
        return {
            "variant": h.variant,
            "length_scales": [float(v) for v in h.length_scales],
            "period": h.period,
            "season_gap": h.season_gap,
        }

    return {"hypers_u": [one(h) for h in hypers_u], "hypers_v": [one(h) for h in hypers_v]}


def frozen_from_dict(payload: dict):
    def one(d: dict) -> kernels.KernelHyperparams:
        return kernels.KernelHyperparams(
            variant=d["variant"],
            length_scales=np.asarray(d["length_scales"], dtype=float),
            period=d.get("period"),
            season_gap=d.get("season_gap"),
        )

    return [one(d) for d in payload["hypers_u"]], [one(d) for d in payload["hypers_v"]]


def save_frozen_hypers(path, hypers_u, hypers_v) -> None:
    with open(path, "w") as fh:
        json.dump(frozen_to_dict(hypers_u, hypers_v), fh, indent=2)
        fh.write("\n")


def load_frozen_hypers(path):
    with open(path) as fh:
        return frozen_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# shared chain helpers

def _priors_from_config(cfg: ExperimentConfig) -> samplers.Priors:
    return samplers.Priors(
        log_ls_lo=cfg.ls_log_lo,
        log_ls_hi=cfg.ls_log_hi,
        gap_lo=cfg.gap_lo,
        gap_hi=cfg.gap_hi,
        mean_sd=cfg.mean_prior_sd,
        cross_diag_sd=cfg.cross_diag_sd,
        cross_off_sd=cfg.cross_off_sd,
        log_sigma_mean=cfg.sigma_log_mean,
        log_sigma_sd=cfg.sigma_log_sd,
    )


def _hyper_trace_header(k: int, dim: int, warped: bool) -> list[str]:
    cols = ["iteration", "sigma", "rho"]
    for side in ("u", "v"):
        for ki in range(k):
            for d in range(dim):
                cols.append(f"ls_{side}{ki}_{d}")
            if warped:
                cols.append(f"gap_{side}{ki}")
    return cols


def _hyper_trace_row(state: samplers.ChainState, warped: bool) -> list[float]:
    row = [state.iteration, state.lik.sigma, state.lik.rho]
    for hypers in (state.hypers_u, state.hypers_v):
        for h in hypers:
            row.extend(float(v) for v in h.length_scales)
            if warped:
                row.append(float(h.season_gap))
    return row


def _run_sweeps(state: samplers.ChainState, data: lat.ModelData, cfg: ExperimentConfig,
                priors: samplers.Priors, n_sweeps: int, sample_hypers: bool,
                on_sweep=None) -> None:
    for _ in range(n_sweeps):
        do_hypers = sample_hypers and (state.iteration % cfg.hyper_every == 0)
        samplers.gibbs_sweep(state, data, priors, update_hypers=do_hypers)
        if on_sweep is not None:
            on_sweep(state)


# ---------------------------------------------------------------------------
# synthetic data

def expected_softplus(mu: float, sd: float) -> float:
    """E[softplus(x)] for x ~ Normal(mu, sd^2), by Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(64)
    vals = lat.softplus(mu + sd * nodes)
    return float(np.sum(weights * vals) / math.sqrt(2.0 * math.pi))


def _sim_truth_params(cfg: ExperimentConfig):
    variant = cfg.model_variant
    kernel_variant = lat.kernel_variant_for(variant)
    dim = lat.variant_dim(variant)
    gap = cfg.sim_season_gap if kernel_variant == kernels.ARD_WARP else None
    if cfg.sim_split_features:
        # feature 0 varies over time only, feature 1 over venue only
        off = 1000.0
        time_f = kernels.KernelHyperparams(
            variant=kernel_variant,
            length_scales=np.array([cfg.sim_time_ls, off]), season_gap=gap,
        )
        venue_f = kernels.KernelHyperparams(
            variant=kernel_variant,
            length_scales=np.array([off, cfg.sim_home_ls]), season_gap=gap,
        )
        hypers_u = [time_f.copy(), venue_f.copy()]
        hypers_v = [time_f.copy(), venue_f.copy()]
        amp2 = cfg.sim_amp_u2 if cfg.sim_amp_u2 > 0 else cfg.sim_amp_u
        cc_u = lat.CrossCov(np.diag([cfg.sim_amp_u, amp2]))
        cc_v = lat.CrossCov(np.eye(cfg.k) * cfg.sim_amp_v)
    else:
        if variant in (lat.DPMF_T, lat.DPMF_TH):
            ls = [cfg.sim_time_ls] + ([cfg.sim_home_ls] if variant == lat.DPMF_TH else [])
        elif variant == lat.DPMF_H:
            ls = [cfg.sim_home_ls]
        else:
            ls = [1.0]
        hyp = kernels.KernelHyperparams(
            variant=kernel_variant, length_scales=np.asarray(ls, dtype=float), season_gap=gap
        )
        hypers_u = [hyp.copy() for _ in range(cfg.k)]
        hypers_v = [hyp.copy() for _ in range(cfg.k)]
        cc_u = lat.CrossCov(np.eye(cfg.k) * cfg.sim_amp_u)
        cc_v = lat.CrossCov(np.eye(cfg.k) * cfg.sim_amp_v)
    mean_v_val = math.log(math.e - 1.0)  # softplus(mean) == 1
    e_psi = expected_softplus(mean_v_val, cfg.sim_amp_v)
    mean_u = np.full(cfg.k, cfg.sim_mean_score / (cfg.k * e_psi))
    mean_v = np.full(cfg.k, mean_v_val)
    lik = LikelihoodParams(sigma=cfg.sim_sigma, rho=cfg.sim_rho)
    assert all(h.length_scales.shape[0] == dim for h in hypers_u + hypers_v)
    return hypers_u, hypers_v, cc_u, cc_v, mean_u, mean_v, lik


def simulate_dataset(cfg: ExperimentConfig, out_dir=None, round_scores: bool = True):
    """Draw a full synthetic dataset from the generative model.

    Returns (dataset, truth) where truth carries the generating parameters
    and per-game latent mean pairs.  When ``out_dir`` is given, writes
    games.csv and truth.json there.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    start_date = dt.date.fromisoformat(cfg.sim_start_date)
    season_pairs = []
    games: list[tuple[int, int, float]] = []
    season_of_game: list[int] = []
    pairs_per_round = cfg.sim_teams // 2
    for s in range(cfg.sim_seasons):
        start = s * (cfg.sim_season_weeks + cfg.sim_gap_weeks)
        season_pairs.append((float(start), float(start + cfg.sim_season_weeks - 1)))
        for w in range(start, start + cfg.sim_season_weeks):
            # rounds of random pairings; teams may play several games a week
            remaining = cfg.sim_games_per_week
            while remaining > 0:
                perm = rng.permutation(cfg.sim_teams)
                for g in range(min(pairs_per_round, remaining)):
                    home, away = int(perm[2 * g]), int(perm[2 * g + 1])
                    games.append((home, away, float(w)))
                    season_of_game.append(s)
                remaining -= min(pairs_per_round, remaining)

    truth_params = _sim_truth_params(cfg)
    hypers_u, hypers_v, cc_u, cc_v, mean_u, mean_v, lik = truth_params
    data, latent, y = lat.generate_synthetic(
        games, cfg.sim_teams, cfg.model_variant, hypers_u, hypers_v,
        cc_u, cc_v, mean_u, mean_v, lik, season_pairs, rng,
    )

    team_names = [f"T{t:02d}" for t in range(cfg.sim_teams)]
    records = []
    for g, (home, away, week) in enumerate(games):
        score_home, score_away = data.scores[g]
        if round_scores:
            score_home = max(0.0, float(np.round(score_home)))
            score_away = max(0.0, float(np.round(score_away)))
        records.append(GameRecord(
            date=start_date + dt.timedelta(weeks=int(week)),
            season_id=str(start_date.year + season_of_game[g]),
            home_team=team_names[home],
            away_team=team_names[away],
            home_score=score_home,
            away_score=score_away,
        ))
    dataset = dataset_from_records(records)
    truth = {
        "sigma": lik.sigma,
        "rho": lik.rho,
        "mean_score": cfg.sim_mean_score,
        "model_variant": cfg.model_variant,
        "k": cfg.k,
        "hypers": frozen_to_dict(hypers_u, hypers_v),
        "mean_u": [float(v) for v in mean_u],
        "mean_v": [float(v) for v in mean_v],
        "season_calendar": season_pairs,
        "games": [
            {
                "index": g,
                "week": games[g][2],
                "home": team_names[games[g][0]],
                "away": team_names[games[g][1]],
                "y_home": float(y[g, 0]),
                "y_away": float(y[g, 1]),
            }
            for g in range(len(games))
        ],
    }
    if out_dir is not None:
        out_dir = _ensure_dir(out_dir)
        write_games_csv(out_dir / "games.csv", records)
        with open(out_dir / "truth.json", "w") as fh:
            json.dump(truth, fh, indent=2)
            fh.write("\n")
    return dataset, truth


def _ensure_dir(out_dir):
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# hyperparameter pre-burn

def preburn_hypers(cfg: ExperimentConfig, dataset: Dataset, out_dir=None, collect_trace=True):
    """Burn in kernel hyperparameters on the early seasons and freeze them.

    In always_sample mode this is a no-op returning (None, []).  Otherwise
    returns ((hypers_u, hypers_v), trace_rows) and, with ``out_dir`` set,
    writes frozen_hypers.json and hyper_trace.csv.
    """
    cfg.validate()
    if cfg.hyper_mode == "always_sample":
        return None, []
    n_seasons = min(cfg.preburn_seasons, len(dataset.calendar))
    idx = np.where(dataset.game_season < n_seasons)[0]
    if idx.size == 0:
        raise InvalidParameterError("no games available for the hyperparameter pre-burn")
    obs = _sorted_train_obs(dataset, idx)
    data = lat.build_model_data(obs, dataset.n_teams, cfg.model_variant,
                                season_calendar=dataset.calendar_pairs())
    priors = _priors_from_config(cfg)
    rng = np.random.default_rng([cfg.seed, 0xB0A1])
    state = samplers.draw_state_from_prior(
        data, cfg.k, priors, rng, period=cfg.period,
        use_periodic_time=cfg.use_periodic_time,
    )
    warped = lat.kernel_variant_for(cfg.model_variant) == kernels.ARD_WARP
    trace: list[list[float]] = []

    def on_sweep(st):
        if collect_trace:
            trace.append(_hyper_trace_row(st, warped))

    _run_sweeps(state, data, cfg, priors, cfg.preburn_sweeps, sample_hypers=True,
                on_sweep=on_sweep)
    frozen = ([h.copy() for h in state.hypers_u], [h.copy() for h in state.hypers_v])
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        save_frozen_hypers(out / "frozen_hypers.json", *frozen)
        if collect_trace:
            with open(out / "hyper_trace.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(_hyper_trace_header(cfg.k, data.dim, warped))
                for row in trace:
                    writer.writerow([_fmt(v) for v in row])
    return frozen, trace


# ---------------------------------------------------------------------------
# rolling evaluation

@dataclass
class GamePrediction:
    game_index: int
    season_id: str
    block_index: int
    mixture: pred.PredictiveMixture
    logprob: float
    win_prob: float
    mean_pair: np.ndarray
    truth: np.ndarray


@dataclass
class GroupMetrics:
    games: int
    mean_logprob: float
    winner_error_pct: float
    rmse: float


@dataclass
class RollingResult:
    predictions: list[GamePrediction]
    per_block: list[dict]
    per_season: dict[str, GroupMetrics]
    overall: GroupMetrics | None
    expert_per_season: dict[str, GroupMetrics] = field(default_factory=dict)
    expert_overall: GroupMetrics | None = None
    skipped_blocks: list[tuple[str, int]] = field(default_factory=list)


def _group_metrics(preds: list[GamePrediction]) -> GroupMetrics:
    logprobs = np.array([p.logprob for p in preds])
    errs = np.array([
        ((p.win_prob > 0.5) != (p.truth[0] > p.truth[1])) or (p.win_prob == 0.5)
        for p in preds
    ])
    sq = np.array([(p.mean_pair - p.truth) ** 2 for p in preds])
    return GroupMetrics(
        games=len(preds),
        mean_logprob=float(np.mean(logprobs)),
        winner_error_pct=float(100.0 * np.mean(errs)),
        rmse=float(np.sqrt(np.mean(sq))),
    )


def _expert_metrics(dataset: Dataset, game_idx: list[int]) -> GroupMetrics | None:
    rows = []
    for g in game_idx:
        line = dataset.lines[g]
        if line is None:
            continue
        away, home = pred.expert_scores(line)
        truth = np.array([dataset.observations[g].score_mn, dataset.observations[g].score_nm])
        rows.append((np.array([home, away]), truth))
    if not rows:
        return None
    errs = np.array([
        ((mean[0] > mean[1]) != (truth[0] > truth[1])) or (mean[0] == mean[1])
        for mean, truth in rows
    ])
    sq = np.array([(mean - truth) ** 2 for mean, truth in rows])
    return GroupMetrics(
        games=len(rows),
        mean_logprob=float("nan"),
        winner_error_pct=float(100.0 * np.mean(errs)),
        rmse=float(np.sqrt(np.mean(sq))),
    )


def rolling_eval(cfg: ExperimentConfig, dataset: Dataset, frozen=None, out_dir=None) -> RollingResult:
    """Run the rolling censored-data protocol and score every prediction.

    ``frozen`` carries pre-burned hyperparameters (required shape: the
    (hypers_u, hypers_v) pair) when hyper_mode is freeze_after_preburn; when
    absent in that mode the pre-burn runs implicitly first.
    """
    cfg.validate()
    if dataset.n_games == 0:
        raise InvalidParameterError("dataset has no games to evaluate")
    if cfg.hyper_mode == "freeze_after_preburn" and frozen is None:
        frozen, _ = preburn_hypers(cfg, dataset, out_dir=out_dir)
    freeze = cfg.hyper_mode == "freeze_after_preburn"
    priors = _priors_from_config(cfg)
    calendar_pairs = dataset.calendar_pairs()
    blocks = partition_blocks(dataset, cfg.block_weeks)
    predictions: list[GamePrediction] = []
    skipped: list[tuple[str, int]] = []
    per_block_rows: list[dict] = []

    for s, season in enumerate(dataset.calendar):
        states: list[samplers.ChainState | None] = [None] * cfg.chains
        prev_data: lat.ModelData | None = None
        season_blocks = [b for b in blocks if b.season_index == s]
        for block in season_blocks:
            train_idx = training_indices(dataset, s, block.start_week, cfg.history_seasons)
            if train_idx.size == 0:
                skipped.append((season.season_id, block.block_index))
                logger.info("season %s block %d skipped: no training history",
                            season.season_id, block.block_index)
                continue
            if block.game_idx.size == 0:
                continue
            assert int(dataset.weeks[train_idx].max()) < block.start_week
            assert int(dataset.game_season[train_idx].min()) >= s - cfg.history_seasons
            obs = _sorted_train_obs(dataset, train_idx)
            data = lat.build_model_data(obs, dataset.n_teams, cfg.model_variant,
                                        season_calendar=calendar_pairs)
            block_components: dict[int, list] = {int(g): [] for g in block.game_idx}
            for c in range(cfg.chains):
                if states[c] is None:
                    rng = np.random.default_rng([cfg.seed, 7, s, c])
                    state = samplers.draw_state_from_prior(
                        data, cfg.k, priors, rng, period=cfg.period,
                        use_periodic_time=cfg.use_periodic_time,
                        frozen_hypers=frozen, hypers_frozen=freeze,
                    )
                    burn = cfg.cold_burnin
                else:
                    state = samplers.extend_chain_state(states[c], prev_data, data)
                    burn = cfg.warm_burnin
                _run_sweeps(state, data, cfg, priors, burn, sample_hypers=not freeze)
                for it in range(cfg.thin * cfg.samples_per_chain):
                    do_hypers = (not freeze) and (state.iteration % cfg.hyper_every == 0)
                    samplers.gibbs_sweep(state, data, priors, update_hypers=do_hypers)
                    if (it + 1) % cfg.thin == 0:
                        for g in block.game_idx:
                            o = dataset.observations[g]
                            comp = pred.game_component(
                                state, data, o.row_member, o.col_member,
                                float(dataset.weeks[g]), state.rng,
                                chol_u=state.chol_u, chol_v=state.chol_v,
                            )
                            block_components[int(g)].append(comp)
                states[c] = state
            prev_data = data
            block_preds = []
            for g in block.game_idx:
                mix = pred.PredictiveMixture.from_components(block_components[int(g)])
                o = dataset.observations[g]
                truth = np.array([o.score_mn, o.score_nm])
                gp = GamePrediction(
                    game_index=int(g),
                    season_id=season.season_id,
                    block_index=block.block_index,
                    mixture=mix,
                    logprob=pred.rao_blackwell_logprob(mix, truth[0], truth[1]),
                    win_prob=pred.winner_prob(mix),
                    mean_pair=mix.mean(),
                    truth=truth,
                )
                block_preds.append(gp)
            predictions.extend(block_preds)
            gm = _group_metrics(block_preds)
            per_block_rows.append({
                "season_id": season.season_id,
                "block": block.block_index,
                "start_week": block.start_week,
                "end_week": block.end_week,
                "games": gm.games,
                "mean_logprob": gm.mean_logprob,
                "winner_error_pct": gm.winner_error_pct,
                "rmse": gm.rmse,
            })

    per_season: dict[str, GroupMetrics] = {}
    expert_per_season: dict[str, GroupMetrics] = {}
    for s, season in enumerate(dataset.calendar):
        sp = [p for p in predictions if p.season_id == season.season_id]
        if sp:
            per_season[season.season_id] = _group_metrics(sp)
            ex = _expert_metrics(dataset, [p.game_index for p in sp])
            if ex is not None:
                expert_per_season[season.season_id] = ex
    overall = _group_metrics(predictions) if predictions else None
    expert_overall = _expert_metrics(dataset, [p.game_index for p in predictions])
    result = RollingResult(
        predictions=predictions,
        per_block=per_block_rows,
        per_season=per_season,
        overall=overall,
        expert_per_season=expert_per_season,
        expert_overall=expert_overall,
        skipped_blocks=skipped,
    )
    if out_dir is not None:
        write_rolling_outputs(cfg, dataset, result, out_dir)
    return result


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and math.isnan(v):
        return ""
    return f"{float(v):.10g}"


def write_rolling_outputs(cfg: ExperimentConfig, dataset: Dataset, result: RollingResult, out_dir) -> None:
    out = _ensure_dir(out_dir)
    season_ids = [s.season_id for s in dataset.calendar if s.season_id in result.per_season]

    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "k", "metric", *season_ids, "all"])
        for metric in ("mean_logprob", "winner_error_pct", "rmse"):
            row = [cfg.model_variant, cfg.k, metric]
            row += [_fmt(getattr(result.per_season[sid], metric)) for sid in season_ids]
            row.append(_fmt(getattr(result.overall, metric)) if result.overall else "")
            writer.writerow(row)
        if result.expert_overall is not None:
            for metric in ("winner_error_pct", "rmse"):
                row = ["expert", "", metric]
                row += [
                    _fmt(getattr(result.expert_per_season[sid], metric))
                    if sid in result.expert_per_season else ""
                    for sid in season_ids
                ]
                row.append(_fmt(getattr(result.expert_overall, metric)))
                writer.writerow(row)

    with open(out / "blocks.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["season_id", "block", "start_week", "end_week", "games",
                         "mean_logprob", "winner_error_pct", "rmse"])
        for row in result.per_block:
            writer.writerow([
                row["season_id"], row["block"], row["start_week"], row["end_week"],
                row["games"], _fmt(row["mean_logprob"]),
                _fmt(row["winner_error_pct"]), _fmt(row["rmse"]),
            ])

    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["game", "date", "season_id", "home_team", "away_team",
                         "mean_home", "mean_away", "winner_prob_home", "log_prob",
                         "true_home", "true_away"])
        for p in result.predictions:
            rec = dataset.records[p.game_index]
            writer.writerow([
                p.game_index, rec.date.isoformat(), p.season_id,
                rec.home_team, rec.away_team,
                _fmt(p.mean_pair[0]), _fmt(p.mean_pair[1]),
                _fmt(p.win_prob), _fmt(p.logprob),
                _fmt(p.truth[0]), _fmt(p.truth[1]),
            ])


# ---------------------------------------------------------------------------
# single-range fit

@dataclass
class FitResult:
    states: list[samplers.ChainState]
    trace: list[dict]


def fit_run(cfg: ExperimentConfig, dataset: Dataset, frozen=None, out_dir=None,
            start_week: int | None = None, end_week: int | None = None) -> FitResult:
    """Fit chains on one training range and record a parameter trace."""
    cfg.validate()
    keep = np.ones(dataset.n_games, dtype=bool)
    if start_week is not None:
        keep &= dataset.weeks >= start_week
    if end_week is not None:
        keep &= dataset.weeks <= end_week
    idx = np.where(keep)[0]
    if idx.size == 0:
        raise InvalidParameterError("no games in the requested training range")
    obs = _sorted_train_obs(dataset, idx)
    data = lat.build_model_data(obs, dataset.n_teams, cfg.model_variant,
                                season_calendar=dataset.calendar_pairs())
    priors = _priors_from_config(cfg)
    freeze = cfg.hyper_mode == "freeze_after_preburn" and frozen is not None
    states = []
    trace: list[dict] = []
    for c in range(cfg.chains):
        rng = np.random.default_rng([cfg.seed, 11, c])
        state = samplers.draw_state_from_prior(
            data, cfg.k, priors, rng, period=cfg.period,
            use_periodic_time=cfg.use_periodic_time,
            frozen_hypers=frozen, hypers_frozen=freeze,
        )
        _run_sweeps(state, data, cfg, priors, cfg.cold_burnin, sample_hypers=not freeze)
        for it in range(cfg.thin * cfg.samples_per_chain):
            do_hypers = (not freeze) and (state.iteration % cfg.hyper_every == 0)
            samplers.gibbs_sweep(state, data, priors, update_hypers=do_hypers)
            if (it + 1) % cfg.thin == 0:
                trace.append({
                    "chain": c,
                    "iteration": state.iteration,
                    "sigma": state.lik.sigma,
                    "rho": state.lik.rho,
                    "loglik": samplers.chain_loglik(state, data),
                })
        states.append(state)
    result = FitResult(states=states, trace=trace)
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        with open(out / "trace.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["chain", "iteration", "sigma", "rho", "loglik"])
            for row in trace:
                writer.writerow([row["chain"], row["iteration"], _fmt(row["sigma"]),
                                 _fmt(row["rho"]), _fmt(row["loglik"])])
        sig = np.array([r["sigma"] for r in trace])
        rho = np.array([r["rho"] for r in trace])
        with open(out / "summary.txt", "w") as fh:
            fh.write(f"chains = {cfg.chains}\n")
            fh.write(f"retained_samples = {len(trace)}\n")
            fh.write(f"sigma_mean = {_fmt(np.mean(sig))}\n")
            fh.write(f"sigma_sd = {_fmt(np.std(sig))}\n")
            fh.write(f"rho_mean = {_fmt(np.mean(rho))}\n")
            fh.write(f"rho_sd = {_fmt(np.std(rho))}\n")
    return result


# ---------------------------------------------------------------------------
# single-matchup prediction

def predict_matchup(cfg: ExperimentConfig, dataset: Dataset, home: str, away: str,
                    date: dt.date, frozen=None, out_dir=None, grid: bool = False,
                    grid_size: int = 200):
    """Train on strictly earlier games and predict one matchup's score pair."""
    cfg.validate()
    for team in (home, away):
        if team not in dataset.team_ids:
            raise InvalidParameterError(f"unknown team {team!r}")
    if home == away:
        raise InvalidParameterError("a team cannot play itself")
    week = dataset.week_of(date)
    season_index = 0
    for i, season in enumerate(dataset.calendar):
        if season.start_week <= week:
            season_index = i
    train_idx = training_indices(dataset, season_index, week, cfg.history_seasons)
    if train_idx.size == 0:
        raise InvalidParameterError(f"no training games before {date.isoformat()}")
    obs = _sorted_train_obs(dataset, train_idx)
    data = lat.build_model_data(obs, dataset.n_teams, cfg.model_variant,
                                season_calendar=dataset.calendar_pairs())
    priors = _priors_from_config(cfg)
    freeze = cfg.hyper_mode == "freeze_after_preburn" and frozen is not None
    components = []
    for c in range(cfg.chains):
        rng = np.random.default_rng([cfg.seed, 13, c])
        state = samplers.draw_state_from_prior(
            data, cfg.k, priors, rng, period=cfg.period,
            use_periodic_time=cfg.use_periodic_time,
            frozen_hypers=frozen, hypers_frozen=freeze,
        )
        _run_sweeps(state, data, cfg, priors, cfg.cold_burnin, sample_hypers=not freeze)
        for it in range(cfg.thin * cfg.samples_per_chain):
            do_hypers = (not freeze) and (state.iteration % cfg.hyper_every == 0)
            samplers.gibbs_sweep(state, data, priors, update_hypers=do_hypers)
            if (it + 1) % cfg.thin == 0:
                components.append(pred.game_component(
                    state, data, dataset.team_ids[home], dataset.team_ids[away],
                    float(week), state.rng, chol_u=state.chol_u, chol_v=state.chol_v,
                ))
    mixture = pred.PredictiveMixture.from_components(components)
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        with open(out / "prediction.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "home_team", "away_team", "mean_home", "mean_away",
                             "winner_prob_home", "components"])
            mean = mixture.mean()
            writer.writerow([date.isoformat(), home, away, _fmt(mean[0]), _fmt(mean[1]),
                             _fmt(pred.winner_prob(mixture)), mixture.n_components])
        if grid:
            grid_mn, grid_nm, dens = pred.density_grid(mixture, size=grid_size)
            with open(out / "density_grid.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["home_score", "away_score", "density"])
                for i in range(grid_mn.shape[0]):
                    for j in range(grid_nm.shape[0]):
                        writer.writerow([_fmt(grid_mn[i]), _fmt(grid_nm[j]), _fmt(dens[i, j])])
    return mixture
