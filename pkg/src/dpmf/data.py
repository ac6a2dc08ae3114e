"""Game file ingestion and the on-disk dataset format.

The game file is comma separated with a header row.  Required columns:
date (ISO), season_id, home_team, away_team, home_score, away_score.
Optional columns over_under and home_spread carry bookmaker lines.  Weeks
are counted from the first game date in the file; the season calendar is
derived from the span of each season's games.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError
from .likelihood import GameObservation
from .prediction import ExpertLine

REQUIRED_COLUMNS = ("date", "season_id", "home_team", "away_team", "home_score", "away_score")
LINE_COLUMNS = ("over_under", "home_spread")


@dataclass
class GameRecord:
    """One row of the game file."""

    date: dt.date
    season_id: str
    home_team: str
    away_team: str
    home_score: float
    away_score: float
    over_under: float | None = None
    home_spread: float | None = None


@dataclass
class Season:
    season_id: str
    start_week: int
    end_week: int


@dataclass
class Dataset:
    """Parsed games plus the derived calendar and team index.

    Observations are oriented home-first: the row member is the home team,
    score_mn its points.  ``game_season`` maps each game to its season's
    index in the calendar.
    """

    records: list[GameRecord]
    observations: list[GameObservation]
    calendar: list[Season]
    teams: list[str]
    lines: list[ExpertLine | None]
    weeks: np.ndarray
    game_season: np.ndarray
    first_date: dt.date | None = None
    team_ids: dict[str, int] = field(default_factory=dict)

    @property
    def n_teams(self) -> int:
        return len(self.teams)

    @property
    def n_games(self) -> int:
        return len(self.records)

    def calendar_pairs(self) -> list[tuple[float, float]]:
        return [(float(s.start_week), float(s.end_week)) for s in self.calendar]

    def week_of(self, date: dt.date) -> int:
        if self.first_date is None:
            raise DataFormatError("dataset is empty; weeks are undefined")
        return (date - self.first_date).days // 7


def _parse_float(value: str, what: str, line: int) -> float:
    try:
        out = float(value)
    except ValueError as exc:
        raise DataFormatError(f"row {line}: cannot parse {what} {value!r}", line=line) from exc
    if not np.isfinite(out):
        raise DataFormatError(f"row {line}: {what} must be finite, got {value!r}", line=line)
    return out


def _parse_row(raw: dict, line: int, has_lines: bool) -> GameRecord:
    try:
        date = dt.date.fromisoformat(raw["date"].strip())
    except ValueError as exc:
        raise DataFormatError(f"row {line}: unparseable date {raw['date']!r}", line=line) from exc
    season_id = raw["season_id"].strip()
    home = raw["home_team"].strip()
    away = raw["away_team"].strip()
    if not season_id:
        raise DataFormatError(f"row {line}: empty season_id", line=line)
    if not home or not away:
        raise DataFormatError(f"row {line}: empty team name", line=line)
    if home == away:
        raise DataFormatError(f"row {line}: a team cannot play itself ({home!r})", line=line)
    home_score = _parse_float(raw["home_score"], "home_score", line)
    away_score = _parse_float(raw["away_score"], "away_score", line)
    if home_score < 0 or away_score < 0:
        raise DataFormatError(f"row {line}: negative score", line=line)
    over_under = home_spread = None
    if has_lines:
        ou_raw = (raw.get("over_under") or "").strip()
        hs_raw = (raw.get("home_spread") or "").strip()
        if ou_raw and hs_raw:
            over_under = _parse_float(ou_raw, "over_under", line)
            home_spread = _parse_float(hs_raw, "home_spread", line)
    return GameRecord(
        date=date,
        season_id=season_id,
        home_team=home,
        away_team=away,
        home_score=home_score,
        away_score=away_score,
        over_under=over_under,
        home_spread=home_spread,
    )


def dataset_from_records(records: list[GameRecord]) -> Dataset:
    """Index parsed rows into observations, calendar and team ids."""
    if not records:
        return Dataset(
            records=[], observations=[], calendar=[], teams=[], lines=[],
            weeks=np.zeros(0, dtype=int), game_season=np.zeros(0, dtype=int),
        )
    teams = sorted({r.home_team for r in records} | {r.away_team for r in records})
    team_ids = {t: i for i, t in enumerate(teams)}
    first_date = min(r.date for r in records)
    weeks = np.array([(r.date - first_date).days // 7 for r in records], dtype=int)

    spans: dict[str, list[int]] = {}
    for r, w in zip(records, weeks):
        lo_hi = spans.setdefault(r.season_id, [int(w), int(w)])
        lo_hi[0] = min(lo_hi[0], int(w))
        lo_hi[1] = max(lo_hi[1], int(w))
    calendar = sorted(
        (Season(season_id=s, start_week=lo, end_week=hi) for s, (lo, hi) in spans.items()),
        key=lambda s: (s.start_week, s.season_id),
    )
    for a, b in zip(calendar, calendar[1:]):
        if b.start_week <= a.end_week:
            raise DataFormatError(
                f"seasons {a.season_id!r} and {b.season_id!r} overlap in time "
                f"(weeks {a.end_week} vs {b.start_week})"
            )
    season_index = {s.season_id: i for i, s in enumerate(calendar)}

    observations = []
    lines: list[ExpertLine | None] = []
    game_season = np.zeros(len(records), dtype=int)
    for g, (r, w) in enumerate(zip(records, weeks)):
        observations.append(
            GameObservation(
                row_member=team_ids[r.home_team],
                col_member=team_ids[r.away_team],
                side_info=np.array([float(w)]),
                score_mn=float(r.home_score),
                score_nm=float(r.away_score),
            )
        )
        game_season[g] = season_index[r.season_id]
        if r.over_under is not None and r.home_spread is not None:
            lines.append(ExpertLine(over_under=r.over_under, home_spread=r.home_spread))
        else:
            lines.append(None)
    return Dataset(
        records=list(records),
        observations=observations,
        calendar=calendar,
        teams=teams,
        lines=lines,
        weeks=weeks,
        game_season=game_season,
        first_date=first_date,
        team_ids=team_ids,
    )


def ingest(path) -> Dataset:
    """Read a game file; malformed rows raise errors naming the line."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: file is empty, expected a header row")
        header = [c.strip() for c in reader.fieldnames]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataFormatError(f"{path}: missing required columns {missing}")
        has_lines = all(c in header for c in LINE_COLUMNS)
        records = []
        for line, raw in enumerate(reader, start=2):
            if all((v or "").strip() == "" for v in raw.values()):
                continue
            records.append(_parse_row(raw, line, has_lines))
    return dataset_from_records(records)


def write_games_csv(path, records: list[GameRecord]) -> None:
    """Write records back out in the documented game file format."""
    with_lines = any(r.over_under is not None for r in records)
    columns = list(REQUIRED_COLUMNS) + (list(LINE_COLUMNS) if with_lines else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in records:
            row = [
                r.date.isoformat(), r.season_id, r.home_team, r.away_team,
                format_score(r.home_score), format_score(r.away_score),
            ]
            if with_lines:
                row += [
                    "" if r.over_under is None else f"{r.over_under:g}",
                    "" if r.home_spread is None else f"{r.home_spread:g}",
                ]
            writer.writerow(row)


def format_score(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return f"{value:g}"
