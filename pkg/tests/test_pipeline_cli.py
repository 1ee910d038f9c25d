import datetime as dt
import filecmp
import json
import shutil

import pytest

from ricciflowrec import __version__
from ricciflowrec.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_PARTIAL, EXIT_STAGE, main
from ricciflowrec.config import PipelineConfig, ShockConfig, load_config
from ricciflowrec.errors import ConfigError, DataError, SchemaError
from ricciflowrec.fixtures import FIXTURES, GENERATORS, fixture_path, write_fixture
from ricciflowrec.pipeline import (
    DAY_ARTIFACTS,
    MarketContext,
    load_dataset,
    read_curvature,
    read_ranking,
    run_day,
    run_range,
    write_scoreboard,
)
from ricciflowrec.scoring import BoardEntry, ScoreBoard

SMALL = fixture_path("small") / "config.yaml"
FIRST = dt.date(2022, 2, 14)
DAYS = [FIRST, dt.date(2022, 2, 15), dt.date(2022, 2, 16)]


@pytest.fixture(scope="module")
def small():
    cfg = load_config(SMALL)
    return cfg, MarketContext(load_dataset(cfg), cfg)


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.alpha, cfg.theta, cfg.h_max, cfg.eta, cfg.flow_iters, cfg.K, cfg.horizon) == \
            (0.7, -0.05, 6, 0.1, 50, 10, 5)
        assert cfg.curvature == "ollivier"

    def test_overrides_beat_file(self):
        cfg = load_config(SMALL, {"alpha": "0.9", "shock": {"multiplier": 4.0}})
        assert cfg.alpha == 0.9 and cfg.window == 30 and cfg.shock.multiplier == 4.0

    def test_invalid(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(None, {"alpha": 2})
        with pytest.raises(ConfigError):
            load_config(None, {"nonsense": 1})
        with pytest.raises(ConfigError):
            ShockConfig(multiplier=1.0)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")

    def test_hash_tracks_content(self):
        a, b = load_config(SMALL), load_config(SMALL)
        assert a.hash() == b.hash() and len(a.hash()) == 16
        assert a.replace(theta=-0.07).hash() != a.hash()


class TestRunDay:
    def test_all_artifacts(self, small, tmp_path):
        cfg, ctx = small
        res = run_day(cfg, FIRST, ctx, outdir=tmp_path)
        assert {p.name for p in tmp_path.iterdir()} == set(DAY_ARTIFACTS)
        assert res.ranking and set(res.ranking) <= set(ctx.universe)
        h, kmap = read_curvature(tmp_path / "curvature.csv")
        assert h == cfg.hash()
        assert set(kmap.values) == set(res.graph.combined_weights)

    def test_warmup_error(self, small):
        cfg, ctx = small
        with pytest.raises(DataError, match="warm-up: needs 30 prior trading days"):
            run_day(cfg, dt.date(2022, 1, 10), ctx)

    def test_non_trading_day(self, small):
        cfg, ctx = small
        with pytest.raises(DataError, match="not a trading day"):
            run_day(cfg, dt.date(2022, 2, 19), ctx)

    def test_cross_day_shift(self, small, tmp_path):
        cfg = small[0].replace(shift_source="cross_day")
        ctx = MarketContext(load_dataset(cfg), cfg)
        assert ctx.first_date == dt.date(2022, 2, 21)
        with pytest.raises(DataError, match="warm-up"):
            run_day(cfg, FIRST, ctx)
        res = run_day(cfg, ctx.first_date, ctx, outdir=tmp_path)
        assert (tmp_path / "cross_shift.csv").exists()
        assert set(res.structure.delta) <= set(res.graph.combined_weights)


class TestRunRange:
    def test_empty(self, tmp_path):
        m = run_range(load_config(SMALL), [], tmp_path)
        assert m.ok and m.days == {}
        assert json.loads((tmp_path / "manifest.json").read_text())["days"] == {}

    def test_three_days(self, small, tmp_path):
        cfg, ctx = small
        m = run_range(cfg, DAYS, tmp_path, ctx)
        assert sorted(p.name for p in tmp_path.iterdir() if p.is_dir()) == [d.isoformat() for d in DAYS]
        assert m.ok and (tmp_path / "manifest.json").exists()

    def test_one_failing_day(self, small, tmp_path):
        cfg, ctx = small
        m = run_range(cfg, [dt.date(2022, 1, 10), FIRST, DAYS[1]], tmp_path, ctx)
        assert len(m.days) == 2 and list(m.failures) == ["2022-01-10"]
        assert not m.ok

    def test_unsorted_dates(self, small, tmp_path):
        cfg, ctx = small
        with pytest.raises(ConfigError):
            run_range(cfg, DAYS[::-1], tmp_path, ctx)


def cli(*args):
    return main([*map(str, args)])


class TestCli:
    def test_env_run_dir_and_partial(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("RICCIFLOWREC_RUN_DIR", str(tmp_path / "env"))
        assert cli("run", "--fixture", "small", "--date", FIRST) == EXIT_OK
        assert (tmp_path / "env" / FIRST.isoformat() / "ranking.csv").exists()
        code = cli("run", "--fixture", "small", "--date", "2022-01-10", "--date", FIRST)
        assert code == EXIT_PARTIAL
        assert "warm-up" in capsys.readouterr().err

    def test_exit_codes(self, tmp_path):
        assert cli("run", "--fixture", "small", "--alpha", "2", "--run-dir", tmp_path) == EXIT_CONFIG
        bad = tmp_path / "bad.yaml"
        bad.write_text("prices: nowhere.csv\n")
        assert cli("run", "--config", bad, "--run-dir", tmp_path) == EXIT_DATA

    def test_stage_commands_reproduce_run(self, tmp_path):
        ref, st = tmp_path / "ref", tmp_path / "stages"
        assert cli("run", "--fixture", "small", "--date", FIRST, "--run-dir", ref) == EXIT_OK
        day = st / FIRST.isoformat()
        assert cli("build-graph", "--fixture", "small", "--date", FIRST, "--run-dir", st) == EXIT_OK
        g = day / "graph.json"
        assert cli("curvature", "--fixture", "small", "--graph", g) == EXIT_OK
        assert cli("flow", "--fixture", "small", "--graph", g) == EXIT_OK
        assert cli("score", "--fixture", "small", "--graph", g, "--delta", day / "delta_kappa.csv") == EXIT_OK
        assert cli("rank", "--fixture", "small", "--scoreboard", day / "scoreboard.csv") == EXIT_OK
        assert cli("rca", "--fixture", "small", "--graph", g, "--delta", day / "delta_kappa.csv",
                   "--ranking", day / "ranking.csv") == EXIT_OK
        for name in DAY_ARTIFACTS:
            assert filecmp.cmp(ref / FIRST.isoformat() / name, day / name, shallow=False), name

    def test_curvature_forman(self, tmp_path):
        assert cli("build-graph", "--fixture", "small", "--date", FIRST, "--out", tmp_path) == EXIT_OK
        assert cli("curvature", "--fixture", "small", "--kind", "forman", "--graph", tmp_path / "graph.json") == 0
        _, kmap = read_curvature(tmp_path / "curvature.csv")
        assert kmap.kind.value == "forman" and len(kmap) > 0

    def test_forman_flow_stage_error(self, tmp_path):
        assert cli("build-graph", "--fixture", "small", "--date", FIRST, "--out", tmp_path) == EXIT_OK
        assert cli("flow", "--fixture", "small", "--kind", "forman", "--graph", tmp_path / "graph.json") == EXIT_STAGE

    def test_rank_k10(self, tmp_path):
        h = load_config(SMALL).hash()
        entries = tuple(BoardEntry(f"S{i:02d}", i / 100, 0.0, i / 100) for i in range(12))
        write_scoreboard(ScoreBoard(FIRST, entries, 0.7), tmp_path / "scoreboard.csv", h)
        assert cli("rank", "--fixture", "small", "--k", "10", "--scoreboard", tmp_path / "scoreboard.csv") == 0
        _, rows = read_ranking(tmp_path / "ranking.csv")
        assert len(rows) == 10 and rows[0][0] == "S11"

    def test_mixed_hash_rejected(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli("run", "--fixture", "small", "--date", FIRST, "--run-dir", a) == EXIT_OK
        assert cli("run", "--fixture", "small", "--date", FIRST, "--theta", "-0.07", "--run-dir", b) == EXIT_OK
        da, db = a / FIRST.isoformat(), b / FIRST.isoformat()
        code = cli("rca", "--fixture", "small", "--graph", da / "graph.json", "--delta", db / "delta_kappa.csv",
                   "--ranking", da / "ranking.csv", "--out", tmp_path / "x")
        assert code == EXIT_DATA

    def test_schema_checked(self, tmp_path):
        (tmp_path / "graph.json").write_text('{"schema": "other/9"}')
        assert cli("curvature", "--fixture", "small", "--graph", tmp_path / "graph.json") == EXIT_DATA
        with pytest.raises(SchemaError):
            read_curvature(tmp_path / "graph.json")

    def test_perturb_and_report(self, tmp_path):
        run = tmp_path / "run"
        assert cli("run", "--fixture", "supply_chain", "--date", "2022-02-24", "--run-dir", run) == EXIT_OK
        day = run / "2022-02-24"
        assert cli("report", "--fixture", "supply_chain", "--day", day) == EXIT_OK
        for name in ("report.md", "report_rca.dot", "curvature.png", "rca.png", "flow.png"):
            assert (day / name).stat().st_size > 0
        out = tmp_path / "p"
        assert cli("perturb", "--fixture", "supply_chain", "--date", "2022-02-24", "--out", out) == EXIT_OK
        assert json.loads((out / "shock.json").read_text())["targets"] == ["HUB"]
        assert cli("perturb", "--fixture", "small", "--date", FIRST, "--out", out) == EXIT_CONFIG


class TestFixtures:
    @pytest.mark.parametrize("name", FIXTURES)
    def test_bundled_files_match_generator(self, name, tmp_path):
        write_fixture(name, tmp_path)
        bundled = fixture_path(name)
        for fname in GENERATORS[name]():
            assert filecmp.cmp(tmp_path / fname, bundled / fname, shallow=False), fname

    def test_relocated_fixture_runs(self, tmp_path):
        shutil.copytree(fixture_path("small"), tmp_path / "copy")
        cfg = load_config(tmp_path / "copy" / "config.yaml")
        assert MarketContext(load_dataset(cfg), cfg).first_date == FIRST

    def test_version(self):
        assert __version__ == "0.1.0"
