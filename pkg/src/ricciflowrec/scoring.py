"""Return forecasts, structural risk exposure and curvature-penalized rankings."""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .graph_builder import FinGraph, edge_key
from .market_data import MarketFrame

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReturnForecast:
    asset: str
    horizon: int
    r_hat: float

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not math.isfinite(self.r_hat):
            raise ValueError(f"non-finite forecast for {self.asset}")


@dataclass(frozen=True)
class RiskExposure:
    asset: str
    raw: float
    normalized: float


@dataclass(frozen=True)
class BoardEntry:
    asset: str
    r_hat: float
    risk: float
    score: float


@dataclass(frozen=True)
class ScoreBoard:
    date: dt.date | None
    entries: tuple[BoardEntry, ...]
    alpha: float | None = None
    lam: float | None = None
    excluded: Mapping[str, str] = field(default_factory=dict)

    @property
    def ranking(self) -> list[BoardEntry]:
        return sorted(self.entries, key=lambda e: (-e.score, e.asset))

    def scores(self) -> dict[str, float]:
        return {e.asset: e.score for e in self.entries}


Forecaster = Callable[[Sequence[MarketFrame], str, int], "ReturnForecast | None"]


def momentum_forecast(frames: Sequence[MarketFrame], asset: str, horizon: int = 5) -> ReturnForecast | None:
    """Mean of the last ``horizon`` daily log returns, scaled by ``horizon``.

    Returns ``None`` when fewer than ``horizon`` trailing returns exist.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    recent = list(frames)[-horizon:]
    if len(recent) < horizon or any(asset not in f.raw for f in recent):
        return None
    mean = math.fsum(f.raw[asset].log_return for f in recent) / horizon
    return ReturnForecast(asset, horizon, mean * horizon)


def raw_exposure(asset: str, graph: FinGraph, delta: Mapping[tuple[str, str], float]) -> float:
    """Sum of ``|delta kappa|`` over the asset's incident edges."""
    return math.fsum(abs(delta.get(edge_key(asset, n), 0.0)) for n in sorted(graph.simple.neighbors(asset)))


def normalize_risk(raw: Mapping[str, float]) -> dict[str, float]:
    """Divide by the day's largest exposure; all zeros stay zero."""
    top = max(raw.values(), default=0.0)
    if top == 0.0:
        return {a: 0.0 for a in raw}
    return {a: r / top for a, r in raw.items()}


def risk_exposure(asset: str, graph: FinGraph, delta: Mapping[tuple[str, str], float],
                  day_max: float | None = None) -> RiskExposure:
    raw = raw_exposure(asset, graph, delta)
    if day_max is None:
        day_max = max(raw_exposure(a, graph, delta) for a in graph.assets)
    norm = raw / day_max if day_max > 0 else 0.0
    return RiskExposure(asset, raw, norm)


def risk_exposures(graph: FinGraph, delta: Mapping[tuple[str, str], float]) -> dict[str, RiskExposure]:
    raw = {a: raw_exposure(a, graph, delta) for a in graph.assets}
    norm = normalize_risk(raw)
    return {a: RiskExposure(a, raw[a], norm[a]) for a in raw}


def score(r_hat: float, risk: float, alpha: float) -> float:
    """``alpha * r_hat - (1 - alpha) * risk``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * r_hat - (1.0 - alpha) * risk


def lambda_score(r_hat: float, rho: float, lam: float) -> float:
    """``r_hat - lam * rho`` on the unnormalized exposure."""
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    return r_hat - lam * rho


def top_k(entries: Sequence[BoardEntry], k: int) -> list[str]:
    if k < 1:
        raise ValueError("K must be >= 1")
    ranked = sorted(entries, key=lambda e: (-e.score, e.asset))
    if k > len(ranked):
        logger.info("K=%d exceeds the %d ranked assets; returning all", k, len(ranked))
    return [e.asset for e in ranked[:k]]


def build_scoreboard(
    graph: FinGraph,
    delta: Mapping[tuple[str, str], float],
    frames: Sequence[MarketFrame],
    *,
    alpha: float = 0.7,
    horizon: int = 5,
    form: str = "alpha",
    lam: float = 1.0,
    forecaster: Forecaster = momentum_forecast,
) -> ScoreBoard:
    """Score every asset node that has a forecast; the rest are excluded with a reason."""
    exposures = risk_exposures(graph, delta)
    entries = []
    excluded = {}
    for a in graph.assets:
        fc = forecaster(frames, a, horizon)
        if fc is None:
            excluded[a] = f"fewer than {horizon} trailing returns"
            logger.info("asset %s excluded from ranking: %s", a, excluded[a])
            continue
        if form == "alpha":
            risk = exposures[a].normalized
            s = score(fc.r_hat, risk, alpha)
        elif form == "lambda":
            risk = exposures[a].raw
            s = lambda_score(fc.r_hat, risk, lam)
        else:
            raise ValueError(f"unknown score form {form!r}")
        entries.append(BoardEntry(a, fc.r_hat, risk, s))
    date = graph.date
    return ScoreBoard(date, tuple(sorted(entries, key=lambda e: e.asset)),
                      alpha if form == "alpha" else None, lam if form == "lambda" else None, excluded)
