import datetime as dt
import json
import math

import numpy as np
import pandas as pd
import pytest

from ricciflowrec.errors import DataError
from ricciflowrec.market_data import (
    NormalizationStats,
    PriceRecord,
    RawFeatures,
    SentimentRecord,
    aggregate_sentiment,
    build_frames,
    compute_log_returns,
    fit_normalization,
    frame_from_dict,
    frame_to_dict,
    insufficient_history,
    load_prices,
    load_sentiment,
    make_frame,
    rolling_volatility,
)

D = dt.date(2022, 3, 8)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadPrices:
    def test_row_maps_to_record(self, tmp_path):
        p = write(tmp_path, "p.csv", "date,ticker,close,volume\n2022-03-08,NVDA,229.36,61000000\n")
        assert load_prices(p) == [PriceRecord(D, "NVDA", 229.36, 61000000.0)]

    def test_empty_file_after_header(self, tmp_path):
        assert load_prices(write(tmp_path, "p.csv", "date,ticker,close,volume\n")) == []

    def test_negative_close_names_line(self, tmp_path):
        p = write(tmp_path, "p.csv", "date,ticker,close,volume\n2022-03-08,NVDA,10,1\n2022-03-09,NVDA,-5.0,1\n")
        with pytest.raises(DataError, match=r"p\.csv:3"):
            load_prices(p)

    def test_duplicate_and_bad_header(self, tmp_path):
        dup = write(tmp_path, "d.csv", "date,ticker,close,volume\n2022-03-08,A,1,1\n2022-03-08,A,2,1\n")
        with pytest.raises(DataError, match="duplicate"):
            load_prices(dup)
        with pytest.raises(DataError, match="header"):
            load_prices(write(tmp_path, "h.csv", "day,ticker,close,volume\n"))

    def test_sentiment_out_of_range(self, tmp_path):
        p = write(tmp_path, "s.csv", "date,ticker,polarity\n2022-03-08,A,1.5\n")
        with pytest.raises(DataError, match=":2"):
            load_sentiment(p)


class TestLogReturns:
    def _prices(self, closes, ticker="A"):
        return [PriceRecord(D + dt.timedelta(days=i), ticker, c, 1.0) for i, c in enumerate(closes)]

    def test_flat(self):
        assert compute_log_returns(self._prices([100, 100])) == {(D + dt.timedelta(days=1), "A"): 0.0}

    def test_ten_percent(self):
        (r,) = compute_log_returns(self._prices([100, 110])).values()
        assert r == pytest.approx(0.09531017980432493, abs=1e-15)
        assert r == math.log(1.1)

    def test_single_day_flagged(self):
        prices = self._prices([100])
        assert compute_log_returns(prices) == {}
        assert insufficient_history(prices) == ["A"]


class TestRollingVolatility:
    def test_constant_series(self):
        assert rolling_volatility([0.013] * 40, 30) == [0.0] * 11

    def test_alternating(self):
        r = 0.02
        out = rolling_volatility([r if i % 2 == 0 else -r for i in range(30)], 30)
        assert out == [pytest.approx(abs(r), abs=1e-15)]

    def test_short_series(self):
        assert rolling_volatility([0.01] * 29, 30) == []
        s = pd.Series([0.01] * 29)
        assert rolling_volatility(s, 30).empty

    def test_matches_numpy(self):
        x = np.random.default_rng(0).normal(0, 0.01, 50)
        out = rolling_volatility(x, 30)
        for i, v in enumerate(out):
            assert v == pytest.approx(np.std(x[i:i + 30]), abs=1e-15)


class TestSentiment:
    recs = [SentimentRecord(D, "A", 0.8), SentimentRecord(D, "A", -0.2), SentimentRecord(D, "B", -1.0)]

    def test_mean(self):
        assert aggregate_sentiment(self.recs, D, "A") == pytest.approx(0.3, abs=1e-15)

    def test_unmentioned_is_neutral(self):
        assert aggregate_sentiment(self.recs, D, "C") == 0.0
        assert aggregate_sentiment([], D, "A") == 0.0

    def test_single(self):
        assert aggregate_sentiment(self.recs, D, "B") == -1.0


class TestNormalization:
    def test_identity_stats(self):
        stats = NormalizationStats({"A": {k: (0.0, 1.0) for k in ("log_return", "realised_vol", "volume")}})
        raw = {"A": RawFeatures(0.01, 0.02, 3.0, 0.4)}
        fv = make_frame(D, raw, stats).features["A"]
        assert (fv.log_return, fv.realised_vol, fv.volume_z, fv.sentiment) == (0.01, 0.02, 3.0, 0.4)

    def test_mean_gives_zero_and_zero_std(self):
        stats = NormalizationStats({"A": {"log_return": (0.01, 0.5), "realised_vol": (0.02, 0.0),
                                          "volume": (3.0, 2.0)}})
        fv = make_frame(D, {"A": RawFeatures(0.01, 0.7, 3.0)}, stats).features["A"]
        assert fv.log_return == 0.0
        assert fv.realised_vol == 0.0
        assert fv.volume_z == 0.0

    def test_fit_uses_training_range_only(self):
        d2 = D + dt.timedelta(days=1)
        table = {D: {"A": RawFeatures(0.01, 0.1, 1.0)}, d2: {"A": RawFeatures(9.0, 9.0, 9.0)}}
        stats = fit_normalization(table, D)
        assert stats.params["A"]["log_return"] == (0.01, 0.0)


def _price_rows(n=45, seed=3):
    rng = np.random.default_rng(seed)
    rows = []
    days = pd.bdate_range("2022-01-03", periods=n)
    for t in ("A", "B"):
        close = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, n)))
        rows += [PriceRecord(d.date(), t, float(c), 1000.0 + i) for i, (d, c) in enumerate(zip(days, close))]
    return sorted(rows)


class TestBuildFrames:
    def test_frames_after_warmup(self):
        prices = _price_rows()
        frames = build_frames(prices, train_end=prices[20].date, window=20, vol_window=10)
        assert len(frames) == 45 - 20
        assert frames[0].assets == ["A", "B"]

    def test_start_before_warmup(self):
        prices = _price_rows()
        with pytest.raises(DataError, match="warm-up"):
            build_frames(prices, train_end=prices[-1].date, window=20, vol_window=10, start=prices[0].date)

    def test_serialization_roundtrip_is_stable(self):
        prices = _price_rows()
        frames = build_frames(prices, train_end=prices[-1].date, window=20, vol_window=10)
        a = json.dumps(frame_to_dict(frames[3]), sort_keys=True)
        again = build_frames(prices, train_end=prices[-1].date, window=20, vol_window=10)
        assert a == json.dumps(frame_to_dict(again[3]), sort_keys=True)
        assert frame_to_dict(frame_from_dict(frame_to_dict(frames[3]))) == frame_to_dict(frames[3])
