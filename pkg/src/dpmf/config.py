"""Experiment configuration: defaults, key-value files, environment, CLI.

The config file is plain text, one ``key = value`` pair per line, ``#``
comments allowed.  Keys match the field names below.  The seed resolves with
the precedence: explicit CLI flag, then the DPMF_SEED environment variable,
then the config file, then the default.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass

from . import latent
from .errors import InvalidParameterError

SEED_ENV_VAR = "DPMF_SEED"

HYPER_MODES = ("freeze_after_preburn", "always_sample")


@dataclass
class ExperimentConfig:
    # model
    model_variant: str = latent.DPMF_TH
    k: int = 2
    # chain schedule
    chains: int = 10
    cold_burnin: int = 1000
    warm_burnin: int = 100
    thin: int = 4
    samples_per_chain: int = 100
    hyper_mode: str = "freeze_after_preburn"
    hyper_every: int = 1
    preburn_sweeps: int = 5000
    preburn_seasons: int = 3
    # evaluation protocol
    block_weeks: int = 4
    history_seasons: int = 2
    seed: int = 0
    # kernel defaults
    period: float = 52.0
    use_periodic_time: bool = False
    # prior bounds
    ls_log_lo: float = math.log(0.1)
    ls_log_hi: float = math.log(500.0)
    gap_lo: float = 0.1
    gap_hi: float = 40.0
    mean_prior_sd: float = 10.0
    cross_diag_sd: float = 1.0
    cross_off_sd: float = 1.0
    sigma_log_mean: float = math.log(10.0)
    sigma_log_sd: float = 1.0
    # synthetic data generation
    sim_teams: int = 8
    sim_seasons: int = 3
    sim_season_weeks: int = 26
    sim_gap_weeks: int = 28
    sim_games_per_week: int = 4
    sim_sigma: float = 10.0
    sim_rho: float = 0.4
    sim_mean_score: float = 100.0
    sim_time_ls: float = 4.0
    sim_home_ls: float = 1.0
    sim_season_gap: float = 4.0
    sim_amp_u: float = 2.0
    sim_amp_u2: float = -1.0  # venue feature amplitude under split roles; < 0 copies sim_amp_u
    sim_amp_v: float = 0.5
    sim_split_features: bool = False
    sim_start_date: str = "2002-10-01"

    def validate(self) -> "ExperimentConfig":
        if self.model_variant not in latent.MODEL_VARIANTS:
            raise InvalidParameterError(
                f"model_variant must be one of {latent.MODEL_VARIANTS}, got {self.model_variant!r}"
            )
        if self.hyper_mode not in HYPER_MODES:
            raise InvalidParameterError(
                f"hyper_mode must be one of {HYPER_MODES}, got {self.hyper_mode!r}"
            )
        positive = (
            "k", "chains", "thin", "samples_per_chain", "block_weeks",
            "hyper_every", "preburn_sweeps", "preburn_seasons",
            "sim_teams", "sim_seasons", "sim_season_weeks", "sim_games_per_week",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("cold_burnin", "warm_burnin", "history_seasons", "sim_gap_weeks"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.use_periodic_time and self.model_variant != latent.DPMF_T:
            raise InvalidParameterError("use_periodic_time requires the time-only variant")
        if self.sim_split_features and (self.model_variant != latent.DPMF_TH or self.k != 2):
            raise InvalidParameterError(
                "sim_split_features needs the combined variant with k = 2 "
                "(one time feature, one venue feature)"
            )
        if self.sim_teams < 2:
            raise InvalidParameterError(f"need at least 2 teams, got {self.sim_teams}")
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise InvalidParameterError(f"cannot parse boolean {name}={raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError as exc:
            raise InvalidParameterError(f"cannot parse integer {name}={raw!r}") from exc
    if kind == "float":
        try:
            return float(raw)
        except ValueError as exc:
            raise InvalidParameterError(f"cannot parse number {name}={raw!r}") from exc
    return raw


def parse_kv_file(path) -> dict:
    """Read ``key = value`` lines; unknown keys are an error."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise InvalidParameterError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise InvalidParameterError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(key, raw)
    return out


def load_config(path=None, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Defaults, then file, then DPMF_SEED, then explicit overrides."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        values.update(parse_kv_file(path))
    if SEED_ENV_VAR in env:
        values["seed"] = _coerce("seed", env[SEED_ENV_VAR])
    for key, val in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise InvalidParameterError(f"unknown config key {key!r}")
        if val is not None:
            values[key] = val
    return ExperimentConfig(**values).validate()


def write_kv_file(path, cfg: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        for f in dataclasses.fields(ExperimentConfig):
            fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")
