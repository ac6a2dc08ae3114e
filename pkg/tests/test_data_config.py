import pytest

from dpmf.config import ExperimentConfig, load_config
from dpmf.data import GameRecord, ingest, write_games_csv
from dpmf.errors import DataFormatError, InvalidParameterError

HEADER = "date,season_id,home_team,away_team,home_score,away_score\n"


def write(tmp_path, body, name="games.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body)
    return path


class TestIngest:
    def test_header_only(self, tmp_path):
        ds = ingest(write(tmp_path, ""))
        assert ds.n_games == 0
        assert ds.calendar == []
        assert ds.teams == []

    def test_single_game(self, tmp_path):
        ds = ingest(write(tmp_path, "2002-10-01,2002,LAL,CLE,107,98\n"))
        assert ds.n_games == 1
        assert ds.teams == ["CLE", "LAL"]
        obs = ds.observations[0]
        assert obs.row_member == ds.team_ids["LAL"]
        assert obs.col_member == ds.team_ids["CLE"]
        assert obs.score_mn == 107.0
        assert obs.score_nm == 98.0
        assert ds.weeks[0] == 0

    def test_two_season_calendar(self, tmp_path):
        body = (
            "2002-10-01,2002,A,B,100,90\n"
            "2002-12-03,2002,B,A,95,99\n"
            "2003-10-07,2003,A,B,101,102\n"
            "2003-11-04,2003,B,A,97,96\n"
        )
        ds = ingest(write(tmp_path, body))
        assert len(ds.calendar) == 2
        s1, s2 = ds.calendar
        assert (s1.start_week, s1.end_week) == (0, 9)
        assert s2.start_week == 53
        # one gap of 53 - 9 = 44 true weeks between the seasons
        assert s2.start_week - s1.end_week == 44
        assert list(ds.game_season) == [0, 0, 1, 1]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("date,season_id,home_team,away_team,home_score\n")
        with pytest.raises(DataFormatError, match="away_score"):
            ingest(path)

    def test_bad_date_names_row(self, tmp_path):
        with pytest.raises(DataFormatError, match="row 2"):
            ingest(write(tmp_path, "not-a-date,2002,A,B,1,2\n"))

    def test_negative_score_names_row(self, tmp_path):
        body = "2002-10-01,2002,A,B,100,90\n2002-10-08,2002,A,B,-1,90\n"
        with pytest.raises(DataFormatError, match="row 3"):
            ingest(write(tmp_path, body))

    def test_team_playing_itself_rejected(self, tmp_path):
        with pytest.raises(DataFormatError):
            ingest(write(tmp_path, "2002-10-01,2002,A,A,1,2\n"))

    def test_overlapping_seasons_rejected(self, tmp_path):
        body = (
            "2002-10-01,2002,A,B,100,90\n"
            "2003-05-01,2002,A,B,100,90\n"
            "2003-01-01,2003,B,A,95,99\n"
        )
        with pytest.raises(DataFormatError, match="overlap"):
            ingest(write(tmp_path, body))

    def test_lines_parsed_when_present(self, tmp_path):
        path = tmp_path / "lines.csv"
        path.write_text(
            "date,season_id,home_team,away_team,home_score,away_score,over_under,home_spread\n"
            "2002-10-01,2002,LAL,CLE,107,98,210.5,-4.5\n"
            "2002-10-08,2002,CLE,LAL,90,95,,\n"
        )
        ds = ingest(path)
        assert ds.lines[0] is not None
        assert ds.lines[0].over_under == 210.5
        assert ds.lines[1] is None

    def test_write_then_ingest_round_trip(self, tmp_path):
        import datetime as dt

        records = [
            GameRecord(date=dt.date(2002, 10, 1), season_id="2002",
                       home_team="AAA", away_team="BBB",
                       home_score=101.0, away_score=99.0),
            GameRecord(date=dt.date(2002, 10, 9), season_id="2002",
                       home_team="BBB", away_team="AAA",
                       home_score=88.0, away_score=92.0),
        ]
        path = tmp_path / "round.csv"
        write_games_csv(path, records)
        ds = ingest(path)
        assert ds.n_games == 2
        for rec, orig in zip(ds.records, records):
            assert rec == orig


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        cfg.validate()
        assert cfg.chains == 10
        assert cfg.cold_burnin == 1000
        assert cfg.warm_burnin == 100
        assert cfg.thin == 4
        assert cfg.samples_per_chain == 100
        assert cfg.block_weeks == 4
        assert cfg.history_seasons == 2

    def test_kv_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "# small experiment\n"
            "model_variant = dpmf_t\n"
            "k = 3\n"
            "chains = 2\n"
            "sim_rho = 0.25\n"
            "use_periodic_time = false\n"
        )
        cfg = load_config(path)
        assert cfg.model_variant == "dpmf_t"
        assert cfg.k == 3
        assert cfg.chains == 2
        assert cfg.sim_rho == 0.25

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("not_a_key = 3\n")
        with pytest.raises(InvalidParameterError, match="not_a_key"):
            load_config(path)

    def test_env_seed_overrides_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("seed = 5\n")
        cfg = load_config(path, env={"DPMF_SEED": "99"})
        assert cfg.seed == 99

    def test_explicit_override_beats_env(self, tmp_path):
        cfg = load_config(None, overrides={"seed": 7}, env={"DPMF_SEED": "99"})
        assert cfg.seed == 7

    def test_invalid_values_rejected(self):
        with pytest.raises(InvalidParameterError):
            load_config(None, overrides={"thin": 0})
        with pytest.raises(InvalidParameterError):
            load_config(None, overrides={"model_variant": "nope"})
        with pytest.raises(InvalidParameterError):
            load_config(None, overrides={"hyper_mode": "sometimes"})
        with pytest.raises(InvalidParameterError):
            load_config(None, overrides={"use_periodic_time": True})

    def test_periodic_allowed_for_time_variant(self):
        cfg = load_config(None, overrides={"use_periodic_time": True,
                                           "model_variant": "dpmf_t"})
        assert cfg.use_periodic_time
