"""Ingest price, sentiment and macro files and align them into daily feature frames.

The trading calendar is the set of distinct dates in the price file. Missing
ticker-days are forward-filled for up to ``ffill_limit`` days and dropped after
that. Every feature except sentiment is z-scored per entity with statistics
fitted on a training date range.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

PRICE_HEADER = ["date", "ticker", "close", "volume"]
SENTIMENT_HEADER = ["date", "ticker", "polarity"]
MACRO_HEADER = ["date", "indicator_id", "value"]

NORMALIZED_FEATURES = ("log_return", "realised_vol", "volume")


@dataclass(frozen=True, order=True)
class PriceRecord:
    date: dt.date
    ticker: str
    close: float
    volume: float


@dataclass(frozen=True, order=True)
class SentimentRecord:
    date: dt.date
    ticker: str
    polarity: float


@dataclass(frozen=True, order=True)
class MacroRecord:
    date: dt.date
    indicator_id: str
    value: float


@dataclass(frozen=True)
class RawFeatures:
    """Unnormalized per-day observations for one entity."""

    log_return: float
    realised_vol: float
    volume: float
    sentiment: float = 0.0

    def __post_init__(self):
        if self.realised_vol < 0:
            raise DataError(f"realised_vol must be >= 0, got {self.realised_vol}")
        if not -1.0 <= self.sentiment <= 1.0:
            raise DataError(f"sentiment must lie in [-1, 1], got {self.sentiment}")


@dataclass(frozen=True)
class FeatureVector:
    """Normalized features: z-scores except ``sentiment`` which stays in [-1, 1]."""

    log_return: float
    realised_vol: float
    volume_z: float
    sentiment: float

    def __post_init__(self):
        values = (self.log_return, self.realised_vol, self.volume_z, self.sentiment)
        if not all(math.isfinite(v) for v in values):
            raise DataError(f"non-finite feature in {self}")
        if not -1.0 <= self.sentiment <= 1.0:
            raise DataError(f"sentiment must lie in [-1, 1], got {self.sentiment}")


@dataclass(frozen=True)
class NormalizationStats:
    """Per-entity, per-feature (mean, std) fitted on the training range."""

    params: Mapping[str, Mapping[str, tuple[float, float]]]
    train_end: dt.date | None = None

    def zscore(self, entity: str, feature: str, value: float) -> float:
        try:
            mean, std = self.params[entity][feature]
        except KeyError:
            raise DataError(f"no training statistics for {entity!r}/{feature}") from None
        if std == 0.0:
            return 0.0
        return (value - mean) / std

    def restrict(self, entities: Iterable[str]) -> "NormalizationStats":
        return NormalizationStats({e: self.params[e] for e in entities if e in self.params}, self.train_end)


@dataclass(frozen=True)
class MarketFrame:
    """One trading day of aligned features, keyed by entity id."""

    date: dt.date
    raw: Mapping[str, RawFeatures]
    features: Mapping[str, FeatureVector]
    macro_ids: frozenset[str] = field(default_factory=frozenset)
    stats: NormalizationStats | None = None

    @property
    def assets(self) -> list[str]:
        return sorted(e for e in self.features if e not in self.macro_ids)

    @property
    def entities(self) -> list[str]:
        return sorted(self.features)


def _parse_date(text: str, path: Path, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{path}:{lineno}: bad date {text!r}") from None


def _parse_float(text: str, path: Path, lineno: int, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: bad {name} {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{lineno}: non-finite {name} {text!r}")
    return value


def _read_rows(path, header: list[str]):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {first}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield path, lineno, row


def load_prices(path) -> list[PriceRecord]:
    """Read a ``date,ticker,close,volume`` CSV, sorted by (date, ticker)."""
    records = []
    seen = set()
    for p, lineno, row in _read_rows(path, PRICE_HEADER):
        date = _parse_date(row[0], p, lineno)
        ticker = row[1].strip()
        close = _parse_float(row[2], p, lineno, "close")
        volume = _parse_float(row[3], p, lineno, "volume")
        if not ticker:
            raise DataError(f"{p}:{lineno}: empty ticker")
        if close <= 0:
            raise DataError(f"{p}:{lineno}: close must be > 0, got {close}")
        if volume < 0:
            raise DataError(f"{p}:{lineno}: volume must be >= 0, got {volume}")
        if (date, ticker) in seen:
            raise DataError(f"{p}:{lineno}: duplicate row for ({date}, {ticker})")
        seen.add((date, ticker))
        records.append(PriceRecord(date, ticker, close, volume))
    records.sort()
    return records


def load_sentiment(path) -> list[SentimentRecord]:
    records = []
    for p, lineno, row in _read_rows(path, SENTIMENT_HEADER):
        polarity = _parse_float(row[2], p, lineno, "polarity")
        if not -1.0 <= polarity <= 1.0:
            raise DataError(f"{p}:{lineno}: polarity must lie in [-1, 1], got {polarity}")
        records.append(SentimentRecord(_parse_date(row[0], p, lineno), row[1].strip(), polarity))
    records.sort()
    return records


def load_macro(path) -> list[MacroRecord]:
    records = []
    seen = set()
    for p, lineno, row in _read_rows(path, MACRO_HEADER):
        date = _parse_date(row[0], p, lineno)
        indicator = row[1].strip()
        if (date, indicator) in seen:
            raise DataError(f"{p}:{lineno}: duplicate value for ({date}, {indicator})")
        seen.add((date, indicator))
        records.append(MacroRecord(date, indicator, _parse_float(row[2], p, lineno, "value")))
    records.sort()
    return records


def compute_log_returns(prices: Sequence[PriceRecord]) -> dict[tuple[dt.date, str], float]:
    """Log returns over consecutive trading days of each ticker.

    The first day of every ticker has no entry; tickers with a single day of
    history produce nothing and are logged.
    """
    by_ticker: dict[str, list[PriceRecord]] = defaultdict(list)
    for rec in prices:
        by_ticker[rec.ticker].append(rec)
    out = {}
    for ticker, recs in sorted(by_ticker.items()):
        recs.sort()
        if len(recs) < 2:
            logger.warning("ticker %s has a single trading day; no returns", ticker)
            continue
        for prev, cur in zip(recs, recs[1:]):
            out[(cur.date, ticker)] = math.log(cur.close / prev.close)
    return out


def insufficient_history(prices: Sequence[PriceRecord]) -> list[str]:
    counts: dict[str, int] = defaultdict(int)
    for rec in prices:
        counts[rec.ticker] += 1
    return sorted(t for t, n in counts.items() if n < 2)


def rolling_volatility(returns, window: int = 30):
    """Population std over the trailing ``window`` returns.

    Accepts a sequence or a ``pd.Series``; returns the same kind, holding
    values only where a full window exists.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    series = returns if isinstance(returns, pd.Series) else None
    values = np.asarray(returns, dtype=float)
    if len(values) < window:
        return series.iloc[0:0].astype(float) if series is not None else []
    windows = np.lib.stride_tricks.sliding_window_view(values, window)
    # shift by the first element so constant windows give exactly zero
    shifted = windows - windows[:, :1]
    vol = shifted.std(axis=1, ddof=0)
    if series is not None:
        return pd.Series(vol, index=series.index[window - 1:])
    return vol.tolist()


def aggregate_sentiment(records: Iterable[SentimentRecord], date: dt.date, ticker: str) -> float:
    """Mean polarity for (date, ticker); 0.0 when the ticker is not mentioned."""
    vals = [r.polarity for r in records if r.date == date and r.ticker == ticker]
    if not vals:
        return 0.0
    return math.fsum(vals) / len(vals)


def _sentiment_table(records: Iterable[SentimentRecord]) -> dict[tuple[dt.date, str], float]:
    grouped: dict[tuple[dt.date, str], list[float]] = defaultdict(list)
    for r in records:
        grouped[(r.date, r.ticker)].append(r.polarity)
    return {k: math.fsum(v) / len(v) for k, v in grouped.items()}


def trading_calendar(prices: Sequence[PriceRecord]) -> list[dt.date]:
    return sorted({p.date for p in prices})


def raw_feature_table(
    prices: Sequence[PriceRecord],
    sentiments: Sequence[SentimentRecord] = (),
    macros: Sequence[MacroRecord] = (),
    universe: Sequence[str] | None = None,
    *,
    vol_window: int = 30,
    ffill_limit: int = 5,
) -> tuple[list[dt.date], dict[dt.date, dict[str, RawFeatures]], frozenset[str]]:
    """Align all inputs on the price calendar.

    Returns the calendar, a mapping date -> entity -> RawFeatures for every
    entity-day where realised volatility is defined, and the set of macro ids.
    """
    calendar = trading_calendar(prices)
    if universe is None:
        universe = sorted({p.ticker for p in prices})
    universe = sorted(universe)
    present = {p.ticker for p in prices}
    missing = [t for t in universe if t not in present]
    if missing:
        raise DataError(f"tickers missing all prices: {missing}")

    idx = pd.Index(calendar, name="date")
    px = pd.DataFrame([(p.date, p.ticker, p.close, p.volume) for p in prices if p.ticker in set(universe)],
                      columns=["date", "ticker", "close", "volume"])
    closes = px.pivot(index="date", columns="ticker", values="close").reindex(idx)[universe]
    volumes = px.pivot(index="date", columns="ticker", values="volume").reindex(idx)[universe]
    closes = closes.ffill(limit=ffill_limit)
    volumes = volumes.where(volumes.notna() | closes.isna(), 0.0)

    changes = {t: np.log(closes[t] / closes[t].shift(1)) for t in universe}

    macro_ids: list[str] = []
    if macros:
        mx = pd.DataFrame([(m.date, m.indicator_id, m.value) for m in macros],
                          columns=["date", "indicator_id", "value"])
        values = mx.pivot(index="date", columns="indicator_id", values="value").reindex(idx)
        values = values.ffill(limit=ffill_limit)
        for ind in sorted(values.columns):
            if ind in changes:
                raise DataError(f"macro indicator id {ind!r} collides with a ticker")
            macro_ids.append(ind)
            changes[ind] = values[ind] - values[ind].shift(1)

    senti = _sentiment_table(sentiments)
    table: dict[dt.date, dict[str, RawFeatures]] = {d: {} for d in calendar}
    for ent, series in changes.items():
        avail = series.dropna()
        vol = rolling_volatility(avail, vol_window)
        for d, v in vol.items():
            if ent in macro_ids:
                table[d][ent] = RawFeatures(float(avail[d]), float(v), 0.0, 0.0)
            else:
                table[d][ent] = RawFeatures(float(avail[d]), float(v), float(volumes.at[d, ent]),
                                            senti.get((d, ent), 0.0))
    return calendar, table, frozenset(macro_ids)


def fit_normalization(raw_table: Mapping[dt.date, Mapping[str, RawFeatures]],
                      train_end: dt.date) -> NormalizationStats:
    """Per-entity mean and population std of each normalized feature over dates <= train_end."""
    samples: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for d in sorted(raw_table):
        if d > train_end:
            continue
        for ent, rf in raw_table[d].items():
            for name in NORMALIZED_FEATURES:
                samples[ent][name].append(getattr(rf, name))
    if not samples:
        raise DataError(f"no feature rows on or before train_end {train_end}")
    params = {}
    for ent in sorted(samples):
        params[ent] = {}
        for name in NORMALIZED_FEATURES:
            arr = np.asarray(samples[ent][name])
            mean = float(arr.mean())
            std = float((arr - arr[0]).std(ddof=0))
            params[ent][name] = (mean, std)
    return NormalizationStats(params, train_end)


def normalize(raw: RawFeatures, entity: str, stats: NormalizationStats) -> FeatureVector:
    return FeatureVector(
        log_return=stats.zscore(entity, "log_return", raw.log_return),
        realised_vol=stats.zscore(entity, "realised_vol", raw.realised_vol),
        volume_z=stats.zscore(entity, "volume", raw.volume),
        sentiment=raw.sentiment,
    )


def make_frame(date: dt.date, raw: Mapping[str, RawFeatures], stats: NormalizationStats,
               macro_ids: Iterable[str] = ()) -> MarketFrame:
    ents = sorted(raw)
    feats = {e: normalize(raw[e], e, stats) for e in ents}
    return MarketFrame(date, {e: raw[e] for e in ents}, feats,
                       frozenset(m for m in macro_ids if m in raw), stats.restrict(ents))


def build_frames(
    prices: Sequence[PriceRecord],
    sentiments: Sequence[SentimentRecord] = (),
    macros: Sequence[MacroRecord] = (),
    universe: Sequence[str] | None = None,
    normalization_stats: NormalizationStats | None = None,
    *,
    train_end: dt.date | None = None,
    window: int = 252,
    vol_window: int = 30,
    ffill_limit: int = 5,
    start: dt.date | None = None,
    end: dt.date | None = None,
) -> list[MarketFrame]:
    """One MarketFrame per trading day with at least ``window`` days of prior history.

    Either pass fitted ``normalization_stats`` or a ``train_end`` date to fit them.
    """
    calendar, table, macro_ids = raw_feature_table(
        prices, sentiments, macros, universe, vol_window=vol_window, ffill_limit=ffill_limit)
    if normalization_stats is None:
        if train_end is None:
            raise DataError("either normalization_stats or train_end is required")
        normalization_stats = fit_normalization(table, train_end)
    first_ok = max(window, vol_window)
    if len(calendar) <= first_ok:
        raise DataError(f"need more than {first_ok} trading days of history, have {len(calendar)}")
    if start is not None and start < calendar[first_ok]:
        raise DataError(f"date {start} is earlier than available history; "
                        f"first date with {first_ok} days of warm-up is {calendar[first_ok]}")
    frames = []
    for d in calendar[first_ok:]:
        if start is not None and d < start:
            continue
        if end is not None and d > end:
            continue
        if not table[d]:
            continue
        frames.append(make_frame(d, table[d], normalization_stats, macro_ids))
    return frames


def frame_to_dict(frame: MarketFrame) -> dict:
    ents = frame.entities
    doc = {
        "date": frame.date.isoformat(),
        "macro_ids": sorted(frame.macro_ids),
        "entities": {
            e: {
                "raw": {
                    "log_return": frame.raw[e].log_return,
                    "realised_vol": frame.raw[e].realised_vol,
                    "volume": frame.raw[e].volume,
                    "sentiment": frame.raw[e].sentiment,
                },
                "features": {
                    "log_return": frame.features[e].log_return,
                    "realised_vol": frame.features[e].realised_vol,
                    "volume_z": frame.features[e].volume_z,
                    "sentiment": frame.features[e].sentiment,
                },
            }
            for e in ents
        },
    }
    if frame.stats is not None:
        doc["stats"] = {e: {k: list(v) for k, v in frame.stats.params[e].items()}
                        for e in ents if e in frame.stats.params}
    return doc


def frame_from_dict(doc: Mapping) -> MarketFrame:
    date = dt.date.fromisoformat(doc["date"])
    raw = {e: RawFeatures(**v["raw"]) for e, v in doc["entities"].items()}
    feats = {e: FeatureVector(**v["features"]) for e, v in doc["entities"].items()}
    stats = None
    if "stats" in doc:
        stats = NormalizationStats({e: {k: tuple(v) for k, v in p.items()} for e, p in doc["stats"].items()})
    return MarketFrame(date, raw, feats, frozenset(doc.get("macro_ids", [])), stats)
