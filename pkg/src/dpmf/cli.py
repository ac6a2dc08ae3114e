"""Command line interface.

Subcommands: simulate, preburn, fit, rolling-eval, predict.  Every config
key is also a flag; explicit flags win over the DPMF_SEED environment
variable, which wins over the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import sys

from . import experiment
from .config import ExperimentConfig, load_config
from .data import ingest
from .errors import DpmfError
from .prediction import winner_prob


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            parser.add_argument(flag, dest=f.name, default=None,
                                choices=["true", "false"], help=f"config key {f.name}")
        else:
            parser.add_argument(flag, dest=f.name, default=None, help=f"config key {f.name}")


def _collect_overrides(args: argparse.Namespace) -> dict:
    from .config import _coerce

    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            out[f.name] = _coerce(f.name, str(raw))
    return out


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(path=args.config, overrides=_collect_overrides(args))


def _load_frozen(args):
    if getattr(args, "frozen_hypers", None):
        return experiment.load_frozen_hypers(args.frozen_hypers)
    return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmf",
        description="Latent feature functions with process priors for paired score prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic game file from the generative model")
    p_sim.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p_sim)

    p_pre = sub.add_parser("preburn", help="burn in kernel hyperparameters and freeze them")
    p_pre.add_argument("--data", required=True, help="game file")
    p_pre.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p_pre)

    p_fit = sub.add_parser("fit", help="fit chains on a single training range")
    p_fit.add_argument("--data", required=True, help="game file")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.add_argument("--start-week", type=int, default=None)
    p_fit.add_argument("--end-week", type=int, default=None)
    p_fit.add_argument("--frozen-hypers", help="frozen hyperparameter file")
    _add_config_flags(p_fit)

    p_roll = sub.add_parser("rolling-eval", help="run the rolling censored evaluation")
    p_roll.add_argument("--data", required=True, help="game file")
    p_roll.add_argument("--out", required=True, help="output directory")
    p_roll.add_argument("--frozen-hypers", help="frozen hyperparameter file")
    _add_config_flags(p_roll)

    p_prd = sub.add_parser("predict", help="predict a single matchup at a given date")
    p_prd.add_argument("--data", required=True, help="game file")
    p_prd.add_argument("--out", required=True, help="output directory")
    p_prd.add_argument("--home", required=True, help="home team name")
    p_prd.add_argument("--away", required=True, help="away team name")
    p_prd.add_argument("--date", required=True, help="game date, ISO format")
    p_prd.add_argument("--grid", action="store_true", help="also write a density grid")
    p_prd.add_argument("--grid-size", type=int, default=200)
    p_prd.add_argument("--frozen-hypers", help="frozen hyperparameter file")
    _add_config_flags(p_prd)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "simulate":
            experiment.simulate_dataset(cfg, out_dir=args.out)
            print(f"wrote games.csv and truth.json to {args.out}")
        elif args.command == "preburn":
            dataset = ingest(args.data)
            frozen, _ = experiment.preburn_hypers(cfg, dataset, out_dir=args.out)
            if frozen is None:
                print("hyper_mode = always_sample: nothing to pre-burn")
            else:
                print(f"wrote frozen_hypers.json and hyper_trace.csv to {args.out}")
        elif args.command == "fit":
            dataset = ingest(args.data)
            experiment.fit_run(cfg, dataset, frozen=_load_frozen(args), out_dir=args.out,
                               start_week=args.start_week, end_week=args.end_week)
            print(f"wrote trace.csv and summary.txt to {args.out}")
        elif args.command == "rolling-eval":
            dataset = ingest(args.data)
            result = experiment.rolling_eval(cfg, dataset, frozen=_load_frozen(args),
                                             out_dir=args.out)
            if result.overall is not None:
                print(
                    f"{result.overall.games} games: "
                    f"mean log prob {result.overall.mean_logprob:.4f}, "
                    f"winner error {result.overall.winner_error_pct:.1f}%, "
                    f"rmse {result.overall.rmse:.3f}"
                )
            print(f"wrote metrics.csv, blocks.csv and predictions.csv to {args.out}")
        elif args.command == "predict":
            dataset = ingest(args.data)
            mixture = experiment.predict_matchup(
                cfg, dataset, home=args.home, away=args.away,
                date=dt.date.fromisoformat(args.date), frozen=_load_frozen(args),
                out_dir=args.out, grid=args.grid, grid_size=args.grid_size,
            )
            mean = mixture.mean()
            print(f"{args.home} {mean[0]:.1f} - {mean[1]:.1f} {args.away} "
                  f"(home win prob {winner_prob(mixture):.3f})")
        return 0
    except DpmfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
