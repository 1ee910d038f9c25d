"""End-to-end daily pipeline: graph, curvature, flow, unstable zone, scores, Top-K, RCA paths."""

from __future__ import annotations

import datetime as dt
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import artifacts as art
from .config import INPUT_KEYS, PipelineConfig
from .curvature import CurvatureKind, CurvatureMap, curvature_map
from .errors import ConfigError, DataError, RicciFlowRecError, SchemaError, StageError
from .graph_builder import (
    FinGraph,
    KnowledgeLink,
    NodeKind,
    assemble_graph,
    correlation_edges,
    graph_from_dict,
    graph_to_dict,
    knowledge_edges,
    load_comention,
    load_embeddings,
    load_knowledge,
    node_stress,
    semantic_edges,
    stress_reweight,
)
from .market_data import (
    MacroRecord,
    MarketFrame,
    NormalizationStats,
    PriceRecord,
    SentimentRecord,
    fit_normalization,
    frame_from_dict,
    frame_to_dict,
    load_macro,
    load_prices,
    load_sentiment,
    make_frame,
    raw_feature_table,
)
from .rca import (
    RcaResult,
    UnstableZone,
    rca_report,
    rca_to_dot,
    result_from_dict,
    result_to_dict,
    unstable_zone,
)
from .ricci_flow import CrossShift, FlowTrace, cross_day_shift, simulate_flow, trace_to_dict
from .scoring import BoardEntry, ScoreBoard, build_scoreboard, top_k

logger = logging.getLogger(__name__)

DAY_ARTIFACTS = ("frames.json", "graph.json", "curvature.csv", "flow.json", "delta_kappa.csv",
                 "unstable_zone.json", "scoreboard.csv", "ranking.csv", "rca.json", "rca.dot")

CURVATURE_HEADER = ["u", "v", "kind", "kappa"]
DELTA_HEADER = ["u", "v", "delta_kappa"]
CROSS_HEADER = ["u", "v", "delta_kappa", "status"]
SCOREBOARD_HEADER = ["date", "asset", "r_hat", "risk", "score", "rank"]
RANKING_HEADER = ["rank", "asset", "score"]


@dataclass
class Dataset:
    prices: list[PriceRecord]
    sentiments: list[SentimentRecord] = field(default_factory=list)
    macros: list[MacroRecord] = field(default_factory=list)
    links: list[KnowledgeLink] = field(default_factory=list)
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)
    comention: dict[dt.date, set[tuple[str, str]]] = field(default_factory=dict)
    digests: dict[str, str] = field(default_factory=dict)


def load_dataset(cfg: PipelineConfig) -> Dataset:
    if cfg.prices is None:
        raise ConfigError("config must name a prices file")
    digests = {}
    for key in INPUT_KEYS:
        p = cfg.input_path(key)
        if p is not None:
            if not p.exists():
                raise DataError(f"missing input file for {key}: {p}")
            digests[key] = art.sha256_file(p)
    ds = Dataset(prices=load_prices(cfg.input_path("prices")), digests=digests)
    if cfg.sentiment:
        ds.sentiments = load_sentiment(cfg.input_path("sentiment"))
    if cfg.macro:
        ds.macros = load_macro(cfg.input_path("macro"))
    if cfg.knowledge:
        ds.links = load_knowledge(cfg.input_path("knowledge"))
    if cfg.embeddings:
        ds.embeddings = load_embeddings(cfg.input_path("embeddings"))
    if cfg.comention:
        ds.comention = load_comention(cfg.input_path("comention"))
    return ds


class MarketContext:
    """Aligned features plus fitted normalization for one dataset and config."""

    def __init__(self, dataset: Dataset, cfg: PipelineConfig):
        self.dataset = dataset
        self.cfg = cfg
        self.calendar, self.table, self.macro_ids = raw_feature_table(
            dataset.prices, dataset.sentiments, dataset.macros, cfg.universe,
            vol_window=cfg.vol_window, ffill_limit=cfg.ffill_limit)
        self.universe = sorted(cfg.universe) if cfg.universe else sorted({p.ticker for p in dataset.prices})
        self.index = {d: i for i, d in enumerate(self.calendar)}
        self.warmup = cfg.warmup + (cfg.cross_day_lag if cfg.shift_source == "cross_day" else 0)
        if len(self.calendar) <= self.warmup:
            raise DataError(f"need more than {self.warmup} trading days, price file has {len(self.calendar)}")
        train_end = cfg.train_end or self.first_date
        self.stats: NormalizationStats = fit_normalization(self.table, train_end)
        self._frames: dict[dt.date, MarketFrame] = {}

    @property
    def first_date(self) -> dt.date:
        """First date with the full warm-up history behind it (plus the lag for cross-day shifts)."""
        return self.calendar[self.warmup]

    def run_dates(self) -> list[dt.date]:
        lo = self.cfg.start or self.first_date
        hi = self.cfg.end or self.calendar[-1]
        return [d for d in self.calendar if lo <= d <= hi]

    def check_date(self, date: dt.date, need: int | None = None) -> int:
        """Calendar index of ``date``; it must have ``need`` prior days (default: the full warm-up)."""
        if date not in self.index:
            raise DataError(f"{date} is not a trading day in the price file")
        i = self.index[date]
        need = self.warmup if need is None else need
        if i < need:
            raise DataError(f"{date} is before history warm-up: needs {need} prior trading days "
                            f"(first eligible date {self.calendar[need]})")
        return i

    def frame(self, date: dt.date) -> MarketFrame:
        if date not in self._frames:
            self._frames[date] = make_frame(date, self.table[date], self.stats, self.macro_ids)
        return self._frames[date]

    def trailing_frames(self, date: dt.date, n: int) -> list[MarketFrame]:
        i = self.check_date(date, self.cfg.warmup)
        dates = self.calendar[max(0, i - n + 1): i + 1]
        return [self.frame(d) for d in dates if self.table[d]]

    def shifted(self, date: dt.date, lag: int) -> dt.date:
        i = self.index[date] - lag
        if i < 0:
            raise DataError(f"no trading day {lag} days before {date}")
        return self.calendar[i]

    def forward_returns(self, date: dt.date, horizon: int) -> dict[str, float]:
        """Realized sum of log returns over the next ``horizon`` trading days."""
        i = self.index[date]
        if i + horizon >= len(self.calendar):
            raise DataError(f"{date}: fewer than {horizon} future trading days for relevance")
        ahead = self.calendar[i + 1: i + horizon + 1]
        out = {}
        for a in self.universe:
            vals = [self.table[d][a].log_return for d in ahead if a in self.table[d]]
            if len(vals) == horizon:
                out[a] = float(np.sum(vals))
        return out


@dataclass(frozen=True)
class Structure:
    """Shock-dependent stages: frames, graph, flow and the curvature shift used downstream."""

    frames: tuple[MarketFrame, ...]
    graph: FinGraph
    trace: FlowTrace
    delta: Mapping[tuple[str, str], float]
    cross: CrossShift | None = None


@dataclass(frozen=True)
class DayResult:
    structure: Structure
    zone: UnstableZone
    board: ScoreBoard
    ranking: tuple[str, ...]
    rca: Mapping[str, RcaResult]
    theta: float = -0.05

    @property
    def graph(self) -> FinGraph:
        return self.structure.graph

    @property
    def curvature(self) -> CurvatureMap:
        return self.structure.trace.initial


def graph_for_day(ctx: MarketContext, cfg: PipelineConfig, frames: Sequence[MarketFrame]) -> FinGraph:
    today = frames[-1]
    date = today.date
    nodes: dict[str, NodeKind] = {}
    for e in today.entities:
        nodes[e] = NodeKind.MACRO if e in today.macro_ids else NodeKind.ASSET
    pairs = set()
    for a, b in sorted(ctx.dataset.comention.get(date, ())):
        ok = True
        for x in (a, b):
            if x in ctx.universe or x in ctx.macro_ids:
                ok = ok and x in nodes
            elif x in ctx.dataset.embeddings:
                nodes.setdefault(x, NodeKind.NEWS)
            else:
                ok = False
        if ok:
            pairs.add((a, b))
    corr = correlation_edges(frames, today.entities, cfg.corr_window)
    sem = semantic_edges(ctx.dataset.embeddings, pairs)
    knw = knowledge_edges(ctx.dataset.links, date, nodes)
    graph = assemble_graph(corr, sem, knw, cfg.top_k, nodes=nodes, date=date, weight_floor=cfg.weight_floor)
    return stress_reweight(graph, node_stress(today), cfg.stress_gamma)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (RicciFlowRecError, ValueError, KeyError) as exc:
        raise StageError(name, exc) from exc


def build_structure(ctx: MarketContext, cfg: PipelineConfig, date: dt.date, shock=None,
                    frames: Sequence[MarketFrame] | None = None) -> Structure:
    """Graph construction and Ricci flow for one day, optionally under a shock."""
    from .stress_eval import inject_shock

    if frames is None:
        frames = ctx.trailing_frames(date, max(cfg.corr_window, cfg.horizon))
    if shock is not None:
        frames = _stage("perturb", inject_shock, frames, shock)
    graph = _stage("build-graph", graph_for_day, ctx, cfg, frames)
    if not graph.edges:
        raise StageError("flow", "graph has no edges")
    trace = _stage("flow", simulate_flow, graph, cfg.flow)
    delta = trace.delta
    cross = None
    if cfg.shift_source == "cross_day":
        prev_date = ctx.shifted(date, cfg.cross_day_lag)
        prev_frames = ctx.trailing_frames(prev_date, cfg.corr_window)
        prev_graph = _stage("build-graph", graph_for_day, ctx, cfg, prev_frames)
        prev_k = _stage("curvature", curvature_map, prev_graph, cfg.curvature, cfg.p_idle,
                        forman_variant=cfg.forman_variant)
        cross = cross_day_shift(prev_k, trace.initial)
        delta = cross.delta
    return Structure(tuple(frames), graph, trace, dict(delta), cross)


def decide(cfg: PipelineConfig, structure: Structure, perturbed: Iterable[str] = ()) -> DayResult:
    """Unstable zone, scores, Top-K and RCA paths on top of a computed structure."""
    graph, delta = structure.graph, structure.delta
    zone = _stage("rca", unstable_zone, graph, delta, cfg.theta)
    board = _stage("score", build_scoreboard, graph, delta, structure.frames, alpha=cfg.alpha,
                   horizon=cfg.horizon, form=cfg.score_form, lam=cfg.lam)
    ranking = tuple(top_k(board.entries, cfg.K)) if board.entries else ()
    rca = _stage("rca", rca_report, ranking, zone, graph, delta, cfg.rca, tuple(perturbed) + cfg.perturbed)
    return DayResult(structure, zone, board, ranking, rca, cfg.theta)


def run_day(cfg: PipelineConfig, date: dt.date, ctx: MarketContext | None = None, *,
            shock=None, perturbed: Iterable[str] = (), outdir: Path | None = None) -> DayResult:
    """Stage order: graph, curvature, flow, unstable zone, score, Top-K, RCA."""
    if ctx is None:
        ctx = MarketContext(load_dataset(cfg), cfg)
    ctx.check_date(date)
    result = decide(cfg, build_structure(ctx, cfg, date, shock), perturbed)
    if outdir is not None:
        write_day(result, outdir, cfg.hash())
    return result


# ---- stage writers, shared by run_day and the CLI subcommands ----

def write_frames(frame: MarketFrame, path: Path, h: str) -> Path:
    return art.write_json(path, "frames", frame_to_dict(frame), h)


def write_graph(graph: FinGraph, path: Path, h: str) -> Path:
    return art.write_json(path, "graph", graph_to_dict(graph), h)


def write_curvature(kmap: CurvatureMap, path: Path, h: str) -> Path:
    rows = [(u, v, kmap.kind.value, k) for (u, v), k in sorted(kmap.values.items())]
    return art.write_csv(path, "curvature", CURVATURE_HEADER, rows, h)


def write_flow(trace: FlowTrace, outdir: Path, h: str) -> tuple[Path, Path]:
    p1 = art.write_json(outdir / "flow.json", "flow", trace_to_dict(trace), h)
    p2 = write_delta(trace.delta, outdir / "delta_kappa.csv", h)
    return p1, p2


def write_delta(delta: Mapping[tuple[str, str], float], path: Path, h: str) -> Path:
    rows = [(u, v, d) for (u, v), d in sorted(delta.items())]
    return art.write_csv(path, "delta_kappa", DELTA_HEADER, rows, h)


def write_cross(cross: CrossShift, path: Path, h: str) -> Path:
    rows = [(u, v, d, "common") for (u, v), d in sorted(cross.delta.items())]
    rows += [(u, v, "", "born") for u, v in cross.born]
    rows += [(u, v, "", "died") for u, v in cross.died]
    return art.write_csv(path, "cross_shift", CROSS_HEADER, rows, h)


def write_zone(zone: UnstableZone, path: Path, h: str, theta: float) -> Path:
    payload = {
        "date": zone.date.isoformat() if zone.date else None,
        "theta": theta,
        "nodes": sorted(zone.nodes),
        "avg_curv_change": {n: v for n, v in sorted(zone.values.items())},
    }
    return art.write_json(path, "unstable_zone", payload, h)


def write_scoreboard(board: ScoreBoard, path: Path, h: str) -> Path:
    date = board.date.isoformat() if board.date else ""
    rows = [(date, e.asset, e.r_hat, e.risk, e.score, i) for i, e in enumerate(board.ranking, start=1)]
    return art.write_csv(path, "scoreboard", SCOREBOARD_HEADER, rows, h)


def write_ranking(ranking: Sequence[str], scores: Mapping[str, float], path: Path, h: str) -> Path:
    rows = [(i, a, scores[a]) for i, a in enumerate(ranking, start=1)]
    return art.write_csv(path, "ranking", RANKING_HEADER, rows, h)


def write_rca(results: Mapping[str, RcaResult], graph: FinGraph, outdir: Path, h: str) -> tuple[Path, Path]:
    payload = {"results": [result_to_dict(results[a]) for a in results]}
    p1 = art.write_json(outdir / "rca.json", "rca", payload, h)
    p2 = art.atomic_write_text(outdir / "rca.dot", f"// config_hash={h}\n" + rca_to_dot(results, graph))
    return p1, p2


def write_day(result: DayResult, outdir: Path, h: str) -> dict[str, Path]:
    outdir = Path(outdir)
    s = result.structure
    paths = {
        "frames.json": write_frames(s.frames[-1], outdir / "frames.json", h),
        "graph.json": write_graph(s.graph, outdir / "graph.json", h),
        "curvature.csv": write_curvature(s.trace.initial, outdir / "curvature.csv", h),
    }
    paths["flow.json"], paths["delta_kappa.csv"] = write_flow(s.trace, outdir, h)
    if s.cross is not None:
        paths["cross_shift.csv"] = write_cross(s.cross, outdir / "cross_shift.csv", h)
        paths["delta_kappa.csv"] = write_delta(s.delta, outdir / "delta_kappa.csv", h)
    paths["unstable_zone.json"] = write_zone(result.zone, outdir / "unstable_zone.json", h,
                                             result.theta)
    paths["scoreboard.csv"] = write_scoreboard(result.board, outdir / "scoreboard.csv", h)
    paths["ranking.csv"] = write_ranking(result.ranking, result.board.scores(), outdir / "ranking.csv", h)
    paths["rca.json"], paths["rca.dot"] = write_rca(result.rca, s.graph, outdir, h)
    return paths


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    inputs: dict[str, str]
    days: dict[str, dict[str, dict[str, str]]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "days": {d: self.days[d] for d in sorted(self.days)},
            "failures": {d: self.failures[d] for d in sorted(self.failures)},
        }


def run_range(cfg: PipelineConfig, dates: Sequence[dt.date] | None, run_dir: Path,
              ctx: MarketContext | None = None) -> RunManifest:
    """``run_day`` for each date; failures are recorded and the run continues.

    The manifest holds config, input and output digests only; wall-clock
    timings go to a separate ``timings.json`` so manifests stay reproducible.
    """
    run_dir = Path(run_dir)
    h = cfg.hash()
    if ctx is None and dates is not None and len(dates) == 0:
        manifest = RunManifest(h, cfg.to_dict(), {})
        _write_manifest(manifest, run_dir)
        return manifest
    if ctx is None:
        ctx = MarketContext(load_dataset(cfg), cfg)
    if dates is None:
        dates = ctx.run_dates()
    dates = list(dates)
    if dates != sorted(dates):
        raise ConfigError("dates must be sorted ascending")
    manifest = RunManifest(h, cfg.to_dict(), dict(ctx.dataset.digests))
    for d in dates:
        day_dir = run_dir / d.isoformat()
        t0 = time.perf_counter()
        try:
            result = run_day(cfg, d, ctx)
            paths = write_day(result, day_dir, h)
        except RicciFlowRecError as exc:
            logger.error("day %s failed: %s", d, exc)
            manifest.failures[d.isoformat()] = str(exc)
            continue
        finally:
            manifest.timings[d.isoformat()] = time.perf_counter() - t0
        manifest.days[d.isoformat()] = {
            name: {"path": f"{d.isoformat()}/{p.name}", "sha256": art.sha256_file(p)}
            for name, p in sorted(paths.items())
        }
    _write_manifest(manifest, run_dir)
    return manifest


def _write_manifest(manifest: RunManifest, run_dir: Path) -> None:
    art.write_json(run_dir / "manifest.json", "manifest", manifest.to_dict(), manifest.config_hash)
    art.atomic_write_text(run_dir / "timings.json", art.canonical_json(
        {k: round(v, 6) for k, v in sorted(manifest.timings.items())}))


# ---- stage readers; each returns (config_hash, value) ----

def read_graph(path: Path) -> tuple[str | None, FinGraph]:
    doc = art.read_json(path, "graph")
    try:
        return doc.get("config_hash"), graph_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed graph ({exc})") from None


def read_curvature(path: Path) -> tuple[str | None, CurvatureMap]:
    h, rows = art.read_csv(path, "curvature", CURVATURE_HEADER)
    kinds = {r[2] for r in rows}
    if len(kinds) > 1:
        raise SchemaError(f"{path}: mixed curvature kinds {sorted(kinds)}")
    kind = CurvatureKind(kinds.pop()) if kinds else CurvatureKind.OLLIVIER
    return h, CurvatureMap(None, kind, {(u, v): float(k) for u, v, _, k in rows})


def read_delta(path: Path) -> tuple[str | None, dict[tuple[str, str], float]]:
    h, rows = art.read_csv(path, "delta_kappa", DELTA_HEADER)
    return h, {(u, v): float(d) for u, v, d in rows}


def read_scoreboard(path: Path) -> tuple[str | None, ScoreBoard]:
    h, rows = art.read_csv(path, "scoreboard", SCOREBOARD_HEADER)
    date = dt.date.fromisoformat(rows[0][0]) if rows and rows[0][0] else None
    entries = tuple(sorted((BoardEntry(a, float(r), float(k), float(s)) for _, a, r, k, s, _ in rows),
                           key=lambda e: e.asset))
    return h, ScoreBoard(date, entries)


def read_ranking(path: Path) -> tuple[str | None, list[tuple[str, float]]]:
    h, rows = art.read_csv(path, "ranking", RANKING_HEADER)
    return h, [(a, float(s)) for _, a, s in rows]


def read_rca(path: Path) -> tuple[str | None, dict[str, RcaResult]]:
    doc = art.read_json(path, "rca")
    return doc.get("config_hash"), {d["asset"]: result_from_dict(d) for d in doc["results"]}


def read_frame(path: Path) -> tuple[str | None, MarketFrame]:
    doc = art.read_json(path, "frames")
    return doc.get("config_hash"), frame_from_dict(doc)
