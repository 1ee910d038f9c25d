"""Synthetic shock injection and the robustness metrics: NDCG@10, Top-10 Volatility, RCA Fidelity."""

from __future__ import annotations

import datetime as dt
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import artifacts as art
from .config import PipelineConfig
from .errors import ConfigError, DataError, RicciFlowRecError
from .market_data import MarketFrame, RawFeatures, make_frame
from .rca import RcaResult, rca_fidelity, result_to_dict

logger = logging.getLogger(__name__)

TRIAL_HEADER = ["trial", "date", "targets", "ndcg_at_10", "top10_mean_score", "top10_within_std",
                "rca_hit", "baseline_top", "perturbed_top", "error"]


@dataclass(frozen=True)
class ShockSpec:
    targets: frozenset[str]
    multiplier: float = 3.0
    sentiment_delta: float = -0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(self.targets))
        if not self.multiplier > 1.0:
            raise ValueError(f"shock multiplier must be > 1, got {self.multiplier}")
        if self.sentiment_delta > 0:
            raise ValueError("sentiment delta must be <= 0")
        if not self.targets:
            raise ValueError("a shock needs at least one target")


def _clamp(x: float) -> float:
    return min(1.0, max(-1.0, x))


def inject_shock(frames: Sequence[MarketFrame], spec: ShockSpec) -> list[MarketFrame]:
    """Multiply targets' realised volatility and shift their sentiment (clamped to [-1, 1]).

    Normalized features are recomputed from each frame's stored statistics;
    non-target entities are untouched.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to perturb")
    known = set().union(*(f.raw for f in frames))
    unknown = sorted(spec.targets - known)
    if unknown:
        raise DataError(f"unknown shock target(s): {unknown}")
    out = []
    for f in frames:
        if f.stats is None:
            raise DataError(f"frame {f.date} carries no normalization statistics")
        raw = dict(f.raw)
        for t in spec.targets:
            if t in raw:
                r = raw[t]
                raw[t] = RawFeatures(r.log_return, r.realised_vol * spec.multiplier, r.volume,
                                     _clamp(r.sentiment + spec.sentiment_delta))
        out.append(make_frame(f.date, raw, f.stats, f.macro_ids))
    return out


def quintile_gains(forward: Mapping[str, float]) -> dict[str, int]:
    """Grade assets 0..4 by forward return quintile (4 = best); ties broken by asset id."""
    order = sorted(forward, key=lambda a: (forward[a], a))
    n = len(order)
    return {a: (5 * i) // n for i, a in enumerate(order)}


def ndcg_at_10(ranking: Sequence[str], relevance: Mapping[str, float], k: int = 10) -> float:
    """Linear gains with ``log2(position + 1)`` discount, normalized by the ideal ordering of ``relevance``."""
    if not ranking:
        raise ValueError("ranking is empty")
    if any(g < 0 for g in relevance.values()):
        raise ValueError("relevance gains must be >= 0")
    dcg = math.fsum(relevance.get(a, 0.0) / math.log2(i + 2) for i, a in enumerate(ranking[:k]))
    ideal = sorted(relevance.values(), reverse=True)[:k]
    idcg = math.fsum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def top10_volatility(top_scores: Sequence[Sequence[float]], k: int = 10) -> float:
    """Population std across trials of each trial's mean top-``k`` score."""
    if len(top_scores) < 2:
        raise ValueError("need at least 2 trials")
    means = [statistics.fmean(s[:k]) for s in top_scores]
    return statistics.pstdev(means)


@dataclass
class TrialResult:
    trial: int
    date: dt.date
    targets: tuple[str, ...]
    baseline_ranking: tuple[str, ...] = ()
    perturbed_ranking: tuple[str, ...] = ()
    scores: dict[str, float] = field(default_factory=dict)
    rca: dict[str, RcaResult] = field(default_factory=dict)
    ndcg: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def top_scores(self, k: int = 10) -> list[float]:
        return [self.scores[a] for a in self.perturbed_ranking[:k]]

    @property
    def hit(self) -> bool:
        return any(r.path is not None and r.path.end in self.targets for r in self.rca.values())


@dataclass
class MetricsReport:
    ndcg_at_10: float | None
    top10_volatility: float | None
    rca_fidelity: float | None
    trials: int
    config_hash: str
    top10_within_std: float | None = None
    failed_trials: int = 0
    trial_results: list[TrialResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "ndcg_at_10": self.ndcg_at_10,
            "top10_volatility": self.top10_volatility,
            "rca_fidelity": self.rca_fidelity,
            "top10_within_std": self.top10_within_std,
            "trials": self.trials,
            "failed_trials": self.failed_trials,
            "config_hash": self.config_hash,
        }

    def digest(self) -> str:
        return art.sha256_text(art.canonical_json(self.to_dict()))


def eval_dates(ctx, cfg: PipelineConfig) -> list[dt.date]:
    """Configured evaluation dates, else the last run date that has forward returns."""
    if cfg.eval_dates:
        for d in cfg.eval_dates:
            ctx.check_date(d)
        return list(cfg.eval_dates)
    usable = [d for d in ctx.run_dates() if ctx.index[d] + cfg.horizon < len(ctx.calendar)]
    if not usable:
        raise DataError("no run date has enough future prices for relevance grading")
    return [usable[-1]]


class StructureCache:
    """Graph and flow results keyed by (date, shock); reused across sweeps of alpha or theta."""

    STRUCTURAL = ("window", "corr_window", "vol_window", "ffill_limit", "top_k", "weight_floor",
                  "stress_gamma", "curvature", "forman_variant", "p_idle", "flow_iters", "eta",
                  "renormalize", "frozen_curvature", "shift_source", "cross_day_lag", "horizon", "train_end")

    def __init__(self):
        self._store = {}

    def key(self, cfg: PipelineConfig, date, shock) -> tuple:
        return (tuple(getattr(cfg, k) for k in self.STRUCTURAL), date, shock)

    def get(self, ctx, cfg: PipelineConfig, date, shock):
        from .pipeline import build_structure

        k = self.key(cfg, date, shock)
        if k not in self._store:
            self._store[k] = build_structure(ctx, cfg, date, shock)
        return self._store[k]


def sample_trial(ctx, cfg: PipelineConfig, trial: int, dates: Sequence[dt.date]) -> tuple[dt.date, tuple[str, ...]]:
    rng = np.random.default_rng([cfg.seed, trial])
    date = dates[int(rng.integers(len(dates)))]
    if cfg.shock.targets:
        return date, tuple(cfg.shock.targets)
    assets = ctx.frame(date).assets
    n = min(cfg.shock.n_targets, len(assets))
    picks = rng.choice(len(assets), size=n, replace=False)
    return date, tuple(sorted(assets[int(i)] for i in picks))


def run_trial(ctx, cfg: PipelineConfig, trial: int, dates: Sequence[dt.date],
              cache: StructureCache) -> TrialResult:
    from .pipeline import decide

    date, targets = sample_trial(ctx, cfg, trial, dates)
    res = TrialResult(trial, date, targets)
    try:
        base = decide(cfg, cache.get(ctx, cfg, date, None))
        if cfg.control:
            # no-shock control: the perturbed run is the baseline and nothing is flagged
            shock, flagged = None, ()
        else:
            shock = ShockSpec(frozenset(targets), cfg.shock.multiplier, cfg.shock.sentiment_delta,
                              seed=cfg.seed)
            flagged = targets
        pert = decide(cfg, cache.get(ctx, cfg, date, shock), perturbed=flagged)
        gains = quintile_gains(ctx.forward_returns(date, cfg.horizon))
        res.baseline_ranking = base.ranking
        res.perturbed_ranking = tuple(e.asset for e in pert.board.ranking)
        res.scores = pert.board.scores()
        res.rca = dict(pert.rca)
        res.ndcg = ndcg_at_10(res.perturbed_ranking, gains)
    except RicciFlowRecError as exc:
        res.error = str(exc)
        logger.error("trial %d failed: %s", trial, exc)
    return res


def run_protocol(ctx, cfg: PipelineConfig, trials: int | None = None, seed: int | None = None,
                 cache: StructureCache | None = None) -> MetricsReport:
    """Seeded shock trials: baseline and perturbed pipelines per trial, then the three metrics."""
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    cfg = cfg.replace(trials=trials)
    cache = cache or StructureCache()
    dates = eval_dates(ctx, cfg)
    results = [run_trial(ctx, cfg, t, dates, cache) for t in range(trials)]
    ok = [r for r in results if r.ok]
    ndcg = statistics.fmean(r.ndcg for r in ok) if ok else None
    vol = top10_volatility([r.top_scores() for r in ok]) if len(ok) >= 2 else None
    within = statistics.fmean(statistics.pstdev(r.top_scores()) for r in ok) if ok else None
    fid = None if cfg.control else rca_fidelity((r.rca, r.targets) for r in ok)
    return MetricsReport(ndcg, vol, fid, trials, cfg.hash(), within, len(results) - len(ok), results)


def sensitivity_sweep(ctx, cfg: PipelineConfig, parameter: str, values: Sequence[float],
                      trials: int | None = None, seed: int | None = None) -> list[tuple[float, MetricsReport]]:
    """One protocol run per value with everything else fixed."""
    if parameter not in ("alpha", "theta"):
        raise ConfigError("sweep parameter must be alpha or theta")
    if not values:
        raise ConfigError("sweep needs at least one value")
    cache = StructureCache()
    rows = []
    for v in values:
        rows.append((float(v), run_protocol(ctx, cfg.replace(**{parameter: float(v)}), trials, seed, cache)))
    return rows


def write_report(report: MetricsReport, outdir: Path) -> dict[str, Path]:
    outdir = Path(outdir)
    paths = {"metrics.json": art.write_json(outdir / "metrics.json", "metrics", report.to_dict(),
                                            report.config_hash)}
    rows = []
    for r in report.trial_results:
        rows.append((r.trial, r.date.isoformat(), " ".join(r.targets),
                     "" if r.ndcg is None else r.ndcg,
                     statistics.fmean(r.top_scores()) if r.ok and r.scores else "",
                     statistics.pstdev(r.top_scores()) if r.ok and r.scores else "",
                     int(r.hit) if r.ok else "",
                     " ".join(r.baseline_ranking[:10]), " ".join(r.perturbed_ranking[:10]), r.error or ""))
    paths["trials.csv"] = art.write_csv(outdir / "trials.csv", "trials", TRIAL_HEADER, rows, report.config_hash)
    paths["rca_trials.json"] = art.write_json(
        outdir / "rca_trials.json", "rca_trials",
        {"trials": [{"trial": r.trial, "targets": list(r.targets),
                     "results": [result_to_dict(x) for x in r.rca.values()]} for r in report.trial_results]},
        report.config_hash)
    paths["summary.md"] = art.atomic_write_text(outdir / "summary.md", summary_markdown(report))
    return paths


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def summary_markdown(report: MetricsReport) -> str:
    lines = [
        "# Stress evaluation",
        "",
        f"config hash `{report.config_hash}`, {report.trials} trials ({report.failed_trials} failed)",
        "",
        "| metric | value |",
        "|---|---|",
        f"| NDCG@10 | {_fmt(report.ndcg_at_10)} |",
        f"| Top-10 Volatility | {_fmt(report.top10_volatility)} |",
        f"| RCA Fidelity | {_fmt(report.rca_fidelity)} |",
        f"| Top-10 within-list std (diagnostic) | {_fmt(report.top10_within_std)} |",
        "",
    ]
    return "\n".join(lines)


SWEEP_HEADER = ["parameter", "value", "ndcg_at_10", "top10_volatility", "rca_fidelity", "auc", "trials"]


def sweep_rows(parameter: str, rows: Sequence[tuple[float, MetricsReport]]) -> list[list]:
    return [[parameter, v, r.ndcg_at_10, r.top10_volatility, r.rca_fidelity, "unreproducible", r.trials]
            for v, r in rows]


def sweep_markdown(parameter: str, rows: Sequence[tuple[float, MetricsReport]]) -> str:
    lines = [f"# Sensitivity sweep: {parameter}", "",
             "AUC is not reported: no definition is available to reproduce it.", "",
             f"| {parameter} | NDCG@10 | Top-10 Volatility | RCA Fidelity |", "|---|---|---|---|"]
    for v, r in rows:
        lines.append(f"| {v:g} | {_fmt(r.ndcg_at_10)} | {_fmt(r.top10_volatility)} | {_fmt(r.rca_fidelity)} |")
    return "\n".join(lines) + "\n"


def write_sweep(parameter: str, rows: Sequence[tuple[float, MetricsReport]], outdir: Path,
                config_hash: str) -> dict[str, Path]:
    from .plotting import plot_sweep

    outdir = Path(outdir)
    table = [[p, v, "" if a is None else a, "" if b is None else b, "" if c is None else c, auc, n]
             for p, v, a, b, c, auc, n in sweep_rows(parameter, rows)]
    paths = {
        "sweep.csv": art.write_csv(outdir / f"sweep_{parameter}.csv", "sweep", SWEEP_HEADER, table, config_hash),
        "sweep.md": art.atomic_write_text(outdir / f"sweep_{parameter}.md", sweep_markdown(parameter, rows)),
    }
    paths["sweep.png"] = plot_sweep(parameter, rows, outdir / f"sweep_{parameter}.png")
    return paths
