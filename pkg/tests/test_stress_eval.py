import datetime as dt
import math

import pytest

from ricciflowrec.config import load_config
from ricciflowrec.errors import ConfigError, DataError
from ricciflowrec.fixtures import fixture_path
from ricciflowrec.market_data import NormalizationStats, RawFeatures, make_frame
from ricciflowrec.pipeline import MarketContext, load_dataset
from ricciflowrec.stress_eval import (
    ShockSpec,
    StructureCache,
    inject_shock,
    ndcg_at_10,
    quintile_gains,
    run_protocol,
    sensitivity_sweep,
    sweep_markdown,
    top10_volatility,
    write_report,
    write_sweep,
)

D = dt.date(2022, 3, 8)
UNIT = {k: (0.0, 1.0) for k in ("log_return", "realised_vol", "volume")}


@pytest.fixture(scope="module")
def small():
    cfg = load_config(fixture_path("small") / "config.yaml")
    return cfg, MarketContext(load_dataset(cfg), cfg)


def frame(vol=0.02, senti=0.9):
    stats = NormalizationStats({"A": UNIT, "B": UNIT})
    return make_frame(D, {"A": RawFeatures(0.01, vol, 5.0, senti), "B": RawFeatures(0.0, 0.01, 1.0, 0.1)}, stats)


class TestShock:
    def test_multiplier_must_exceed_one(self):
        with pytest.raises(ValueError):
            ShockSpec(frozenset({"A"}), multiplier=1.0)

    def test_volatility_scaled(self):
        (out,) = inject_shock([frame()], ShockSpec(frozenset({"A"}), 3.0, 0.0))
        assert out.raw["A"].realised_vol == pytest.approx(0.06, abs=1e-15)
        assert out.features["A"].realised_vol == pytest.approx(0.06, abs=1e-15)
        assert out.raw["B"] == frame().raw["B"]

    def test_sentiment_clamped(self):
        (out,) = inject_shock([frame()], ShockSpec(frozenset({"A"}), 3.0, -2.0))
        assert out.raw["A"].sentiment == -1.0

    def test_unknown_target(self):
        with pytest.raises(DataError, match="ZZZ"):
            inject_shock([frame()], ShockSpec(frozenset({"ZZZ"})))


class TestNdcg:
    def test_perfect(self):
        gains = {"a": 3, "b": 2, "c": 1, "d": 0}
        assert ndcg_at_10(["a", "b", "c", "d"], gains) == 1.0

    def test_zero_gains(self):
        assert ndcg_at_10(["a", "b"], {"a": 0, "b": 0}) == 0.0

    def test_three_items(self):
        want = (2 + 3 / math.log2(3) + 1 / 2) / (3 + 2 / math.log2(3) + 1 / 2)
        assert ndcg_at_10(["b", "a", "c"], {"a": 3, "b": 2, "c": 1}) == pytest.approx(want, abs=1e-15)

    def test_quintiles(self):
        fwd = {f"x{i}": i / 100 for i in range(10)}
        g = quintile_gains(fwd)
        assert [g[f"x{i}"] for i in range(10)] == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]


class TestTop10Volatility:
    def test_identical_trials(self):
        assert top10_volatility([[0.3, 0.1], [0.3, 0.1], [0.3, 0.1]]) == 0.0

    def test_two_point(self):
        assert top10_volatility([[0.1] * 10, [0.3] * 10]) == pytest.approx(0.1, abs=1e-15)

    def test_permutation_invariant(self):
        a = [[0.5, 0.1, 0.2], [0.4, 0.3, 0.0], [0.9, 0.2, 0.1]]
        b = [list(reversed(a[0])), a[1][::-1], sorted(a[2])]
        assert top10_volatility(a) == top10_volatility(b)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            top10_volatility([[0.1]])


class TestProtocol:
    def test_zero_trials(self, small):
        cfg, ctx = small
        with pytest.raises(ConfigError):
            run_protocol(ctx, cfg, trials=0)

    def test_deterministic(self, small):
        cfg, ctx = small
        a = run_protocol(ctx, cfg, trials=6, seed=3)
        b = run_protocol(ctx, cfg, trials=6, seed=3)
        assert a.digest() == b.digest()
        assert a.failed_trials == 0
        assert 0.0 <= a.ndcg_at_10 <= 1.0

    def test_control_mode(self, small):
        cfg, ctx = small
        rep = run_protocol(ctx, cfg.replace(control=True), trials=5, seed=1)
        assert rep.top10_volatility == 0.0
        assert rep.rca_fidelity is None
        assert all(r.perturbed_ranking == r.baseline_ranking for r in rep.trial_results)

    def test_singleton_sweep(self, small):
        cfg, ctx = small
        ((v, swept),) = sensitivity_sweep(ctx, cfg, "alpha", [0.9], trials=4, seed=2)
        plain = run_protocol(ctx, cfg.replace(alpha=0.9), trials=4, seed=2)
        assert swept.to_dict() == plain.to_dict()

    def test_cache_shared_across_alpha(self, small):
        cfg, ctx = small
        cache = StructureCache()
        run_protocol(ctx, cfg, trials=3, seed=0, cache=cache)
        n = len(cache._store)
        run_protocol(ctx, cfg.replace(alpha=0.2), trials=3, seed=0, cache=cache)
        assert len(cache._store) == n

    def test_bad_sweep_parameter(self, small):
        cfg, ctx = small
        with pytest.raises(ConfigError):
            sensitivity_sweep(ctx, cfg, "eta", [0.1])

    def test_outputs(self, small, tmp_path):
        cfg, ctx = small
        rep = run_protocol(ctx, cfg, trials=3, seed=0)
        paths = write_report(rep, tmp_path)
        assert set(paths) == {"metrics.json", "trials.csv", "rca_trials.json", "summary.md"}
        rows = sensitivity_sweep(ctx, cfg, "theta", [-0.03, -0.05], trials=3)
        out = write_sweep("theta", rows, tmp_path, cfg.hash())
        assert "unreproducible" in out["sweep.csv"].read_text()
        assert "AUC is not reported" in sweep_markdown("theta", rows)
