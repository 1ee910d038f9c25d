"""Command-line entry point: full runs plus one subcommand per pipeline stage.

Every stage reads and writes the same files ``run_day`` produces, so running
build-graph, curvature, flow, score, rank and rca into one directory yields
that day's artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import logging
import os
import sys
from pathlib import Path

from . import artifacts as art
from .config import PipelineConfig, load_config
from .curvature import curvature_map
from .errors import ConfigError, DataError, RicciFlowRecError, StageError
from .fixtures import FIXTURES, fixture_path
from .pipeline import (
    MarketContext,
    graph_for_day,
    load_dataset,
    read_curvature,
    read_delta,
    read_graph,
    read_ranking,
    read_rca,
    read_scoreboard,
    run_range,
    write_cross,
    write_curvature,
    write_delta,
    write_flow,
    write_frames,
    write_graph,
    write_ranking,
    write_rca,
    write_scoreboard,
    write_zone,
)
from .rca import rca_report, unstable_zone
from .ricci_flow import cross_day_shift, simulate_flow
from .scoring import build_scoreboard, top_k

logger = logging.getLogger("ricciflowrec")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STAGE, EXIT_PARTIAL = 0, 2, 3, 4, 5
RUN_DIR_ENV = "RICCIFLOWREC_RUN_DIR"

_SKIP = {"base_dir", "shock"}
_ALIASES = {"curvature": ["--kind"], "K": ["--k"]}
_SHOCK_KEYS = ("multiplier", "sentiment_delta", "n_targets", "targets")


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (override the config file)")
    g.add_argument("--config", type=Path, help="YAML config file")
    g.add_argument("--fixture", choices=FIXTURES, help="use a bundled synthetic dataset and its config")
    for f in dataclasses.fields(PipelineConfig):
        if f.name in _SKIP:
            continue
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        flags += _ALIASES.get(f.name, [])
        g.add_argument(*flags, dest=f"cfg_{f.name}", metavar=f.name.upper(), default=None)
    for k in _SHOCK_KEYS:
        g.add_argument(f"--shock-{k.replace('_', '-')}", dest=f"shock_{k}", default=None, metavar=k.upper())


def _config(args) -> PipelineConfig:
    overrides = {}
    for key, value in vars(args).items():
        if value is None:
            continue
        if key.startswith("cfg_"):
            overrides[key[4:]] = value
        elif key.startswith("shock_"):
            name = key[6:]
            if name == "targets":
                value = [v for v in value.split(",") if v.strip()]
            overrides.setdefault("shock", {})[name] = value
    if "shock" in overrides:
        shock = overrides["shock"]
        for k in ("multiplier", "sentiment_delta"):
            if k in shock:
                shock[k] = _num(k, shock[k], float)
        if "n_targets" in shock:
            shock["n_targets"] = _num("n_targets", shock["n_targets"], int)
    path = args.config
    if args.fixture:
        if path is not None:
            raise ConfigError("use either --config or --fixture, not both")
        path = fixture_path(args.fixture) / "config.yaml"
    return load_config(path, overrides)


def _num(key, value, kind):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"shock {key}: invalid value {value!r}") from None


def _run_dir(args) -> Path:
    if getattr(args, "run_dir", None):
        return Path(args.run_dir)
    return Path(os.environ.get(RUN_DIR_ENV, "runs"))


def _out(args, default: str) -> Path:
    return Path(args.out) if args.out else _run_dir(args) / default


def _context(cfg: PipelineConfig) -> MarketContext:
    return MarketContext(load_dataset(cfg), cfg)


def _shock_from_args(cfg: PipelineConfig, path: Path | None):
    if path is None:
        return None
    from .stress_eval import ShockSpec

    doc = art.read_json(path, "shock")
    return ShockSpec(frozenset(doc["targets"]), doc["multiplier"], doc["sentiment_delta"], doc["seed"])


# ---- subcommands ----

def cmd_run(args, cfg: PipelineConfig) -> int:
    manifest = run_range(cfg, args.date or None, _run_dir(args))
    print(f"{len(manifest.days)} day(s) written to {_run_dir(args)}; config hash {manifest.config_hash}")
    if manifest.failures:
        for d, msg in sorted(manifest.failures.items()):
            print(f"failed {d}: {msg}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_build_graph(args, cfg: PipelineConfig) -> int:
    ctx = _context(cfg)
    ctx.check_date(args.date)
    frames = ctx.trailing_frames(args.date, max(cfg.corr_window, cfg.horizon))
    graph = graph_for_day(ctx, cfg, frames)
    out = _out(args, args.date.isoformat())
    h = cfg.hash()
    write_frames(frames[-1], out / "frames.json", h)
    print(write_graph(graph, out / "graph.json", h))
    return EXIT_OK


def cmd_perturb(args, cfg: PipelineConfig) -> int:
    from .stress_eval import ShockSpec, inject_shock

    if not cfg.shock.targets:
        raise ConfigError("perturb needs --shock-targets")
    ctx = _context(cfg)
    ctx.check_date(args.date)
    spec = ShockSpec(frozenset(cfg.shock.targets), cfg.shock.multiplier, cfg.shock.sentiment_delta, cfg.seed)
    frames = inject_shock(ctx.trailing_frames(args.date, max(cfg.corr_window, cfg.horizon)), spec)
    graph = graph_for_day(ctx, cfg, frames)
    out = _out(args, args.date.isoformat())
    h = cfg.hash()
    art.write_json(out / "shock.json", "shock", {"targets": sorted(spec.targets), "multiplier": spec.multiplier,
                                                 "sentiment_delta": spec.sentiment_delta, "seed": spec.seed}, h)
    write_frames(frames[-1], out / "frames.json", h)
    print(write_graph(graph, out / "graph.json", h))
    return EXIT_OK


def cmd_curvature(args, cfg: PipelineConfig) -> int:
    _, graph = read_graph(args.graph)
    kmap = curvature_map(graph, cfg.curvature, cfg.p_idle, forman_variant=cfg.forman_variant)
    out = Path(args.out) if args.out else args.graph.parent
    print(write_curvature(kmap, out / "curvature.csv", cfg.hash()))
    return EXIT_OK


def cmd_flow(args, cfg: PipelineConfig) -> int:
    _, graph = read_graph(args.graph)
    out = Path(args.out) if args.out else args.graph.parent
    h = cfg.hash()
    try:
        trace = simulate_flow(graph, cfg.flow)
    except (RicciFlowRecError, ValueError) as exc:
        raise StageError("flow", exc) from exc
    paths = write_flow(trace, out, h)
    if cfg.shift_source == "cross_day":
        if args.prev_curvature is None:
            raise ConfigError("shift_source=cross_day needs --prev-curvature")
        _, prev = read_curvature(args.prev_curvature)
        cross = cross_day_shift(prev, trace.initial)
        write_cross(cross, out / "cross_shift.csv", h)
        write_delta(cross.delta, out / "delta_kappa.csv", h)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_score(args, cfg: PipelineConfig) -> int:
    hg, graph = read_graph(args.graph)
    hd, delta = read_delta(args.delta)
    art.check_same_hash(hg, hd)
    if graph.date is None:
        raise DataError(f"{args.graph}: graph carries no date")
    ctx = _context(cfg)
    ctx.check_date(graph.date)
    frames = ctx.trailing_frames(graph.date, max(cfg.corr_window, cfg.horizon))
    shock = _shock_from_args(cfg, args.shock)
    if shock is not None:
        from .stress_eval import inject_shock

        frames = inject_shock(frames, shock)
    board = build_scoreboard(graph, delta, frames, alpha=cfg.alpha, horizon=cfg.horizon,
                             form=cfg.score_form, lam=cfg.lam)
    out = Path(args.out) if args.out else args.graph.parent
    print(write_scoreboard(board, out / "scoreboard.csv", cfg.hash()))
    return EXIT_OK


def cmd_rank(args, cfg: PipelineConfig) -> int:
    _, board = read_scoreboard(args.scoreboard)
    ranking = top_k(board.entries, cfg.K) if board.entries else []
    out = Path(args.out) if args.out else args.scoreboard.parent
    print(write_ranking(ranking, board.scores(), out / "ranking.csv", cfg.hash()))
    return EXIT_OK


def cmd_rca(args, cfg: PipelineConfig) -> int:
    hg, graph = read_graph(args.graph)
    hd, delta = read_delta(args.delta)
    hr, ranking = read_ranking(args.ranking)
    art.check_same_hash(hg, hd, hr)
    perturbed = tuple(cfg.perturbed)
    shock = _shock_from_args(cfg, args.shock)
    if shock is not None:
        perturbed = tuple(sorted(shock.targets)) + perturbed
    zone = unstable_zone(graph, delta, cfg.theta)
    results = rca_report([a for a, _ in ranking], zone, graph, delta, cfg.rca, perturbed)
    out = Path(args.out) if args.out else args.graph.parent
    h = cfg.hash()
    write_zone(zone, out / "unstable_zone.json", h, cfg.theta)
    for p in write_rca(results, graph, out, h):
        print(p)
    return EXIT_OK


def cmd_eval(args, cfg: PipelineConfig) -> int:
    from .stress_eval import run_protocol, write_report

    report = run_protocol(_context(cfg), cfg)
    out = _out(args, "eval")
    write_report(report, out)
    print(art.canonical_json(report.to_dict()), end="")
    return EXIT_PARTIAL if report.failed_trials else EXIT_OK


def cmd_sweep(args, cfg: PipelineConfig) -> int:
    from .stress_eval import sensitivity_sweep, sweep_markdown, write_sweep

    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    rows = sensitivity_sweep(_context(cfg), cfg, args.param, values)
    write_sweep(args.param, rows, _out(args, "sweep"), cfg.hash())
    print(sweep_markdown(args.param, rows), end="")
    return EXIT_PARTIAL if any(r.failed_trials for _, r in rows) else EXIT_OK


def cmd_report(args, cfg: PipelineConfig) -> int:
    from .plotting import flow_weights, plot_curvature, plot_flow, plot_rca
    from .rca import rca_to_dot

    day = args.day
    hg, graph = read_graph(day / "graph.json")
    hk, kmap = read_curvature(day / "curvature.csv")
    hd, delta = read_delta(day / "delta_kappa.csv")
    hr, ranking = read_ranking(day / "ranking.csv")
    hc, results = read_rca(day / "rca.json")
    flow_doc = art.read_json(day / "flow.json", "flow")
    h = art.check_same_hash(hg, hk, hd, hr, hc, flow_doc.get("config_hash"))
    kmap = dataclasses.replace(kmap, date=graph.date)
    out = Path(args.out) if args.out else day
    top = {a: results[a] for a, _ in ranking if a in results}
    art.atomic_write_text(out / "report_rca.dot", f"// config_hash={h}\n" + rca_to_dot(top, graph, "report"))
    plot_curvature(graph, kmap, out / "curvature.png")
    plot_rca(top, graph, delta, out / "rca.png")
    plot_flow(flow_weights(flow_doc), delta, out / "flow.png")
    art.atomic_write_text(out / "report.md", report_markdown(graph.date, ranking, top, h))
    print(out / "report.md")
    return EXIT_OK


def report_markdown(date, ranking, results, config_hash) -> str:
    lines = [f"# Top-{len(ranking)} report, {date}", "", f"config hash `{config_hash}`", "",
             "| rank | asset | score | RCA path | cumulative abs shift | stop |", "|---|---|---|---|---|---|"]
    for i, (a, s) in enumerate(ranking, start=1):
        r = results.get(a)
        if r is None or r.path is None:
            path, cum = "none", ""
        else:
            path, cum = " -> ".join(r.path.nodes), f"{r.path.cumulative:.4f}"
        reason = r.reason if r is not None else ""
        lines.append(f"| {i} | {a} | {s:.6f} | {path} | {cum} | {reason} |")
    lines += ["", "Figures: `curvature.png` (red negative, blue positive), `rca.png`, `flow.png`.",
              "RCA subgraph: `report_rca.dot`.", ""]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ricciflowrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--run-dir", help=f"output root (default ${RUN_DIR_ENV} or ./runs)")
        p.add_argument("--out", help="output directory for this stage")
        _add_config_flags(p)
        return p

    p = add("run", cmd_run, "run every stage for each date in the configured range")
    p.add_argument("--date", type=_date, action="append", help="explicit date (repeatable)")
    for name, fn, help_ in (("build-graph", cmd_build_graph, "build the day's graph from raw inputs"),
                            ("perturb", cmd_perturb, "build the day's graph under a synthetic shock")):
        p = add(name, fn, help_)
        p.add_argument("--date", type=_date, required=True)
    p = add("curvature", cmd_curvature, "edge curvature of an exported graph")
    p.add_argument("--graph", type=Path, required=True)
    p = add("flow", cmd_flow, "Ricci flow and curvature shift of an exported graph")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--prev-curvature", type=Path, help="earlier snapshot's curvature CSV for cross-day shifts")
    p = add("score", cmd_score, "score assets from a graph and its curvature shift")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--delta", type=Path, required=True)
    p.add_argument("--shock", type=Path, help="shock.json written by perturb")
    p = add("rank", cmd_rank, "Top-K ranking from a scoreboard")
    p.add_argument("--scoreboard", type=Path, required=True)
    p = add("rca", cmd_rca, "unstable zone and root-cause paths for ranked assets")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--delta", type=Path, required=True)
    p.add_argument("--ranking", type=Path, required=True)
    p.add_argument("--shock", type=Path, help="shock.json whose targets are flagged as perturbed")
    add("eval", cmd_eval, "synthetic-shock protocol: NDCG@10, Top-10 Volatility, RCA Fidelity")
    p = add("sweep", cmd_sweep, "protocol metrics across values of alpha or theta")
    p.add_argument("--param", choices=("alpha", "theta"), required=True)
    p.add_argument("--values", required=True, help="comma-separated, e.g. 0.5,0.7,0.9")
    p = add("report", cmd_report, "markdown, DOT and figures for one day directory")
    p.add_argument("--day", type=Path, required=True, help="a day directory written by run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RicciFlowRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
