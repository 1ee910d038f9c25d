"""Matplotlib figures for reports: curvature graph, RCA subgraph, flow trace and sweeps."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import networkx as nx  # noqa: E402

from .artifacts import atomic_write_bytes  # noqa: E402
from .curvature import CurvatureMap  # noqa: E402
from .graph_builder import FinGraph, edge_key  # noqa: E402
from .rca import RcaResult  # noqa: E402

# fixed metadata keeps PNG bytes stable across runs
_META = {"Software": None}


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_META)
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def _edge_colors(edges, values: Mapping[tuple[str, str], float]) -> list[str]:
    out = []
    for u, v in edges:
        k = values.get(edge_key(u, v), 0.0)
        out.append("tab:red" if k < 0 else "tab:blue" if k > 0 else "lightgray")
    return out


def plot_curvature(graph: FinGraph, kmap: CurvatureMap, path, title: str | None = None) -> Path:
    """Red edges are negatively curved, blue positively."""
    g = graph.simple
    pos = nx.spring_layout(g, seed=7)
    fig, ax = plt.subplots(figsize=(7, 6))
    edges = sorted(g.edges())
    widths = [1.0 + 3.0 * g[u][v]["weight"] for u, v in edges]
    nx.draw_networkx_edges(g, pos, edgelist=edges, edge_color=_edge_colors(edges, kmap.values),
                           width=widths, ax=ax)
    nx.draw_networkx_nodes(g, pos, node_size=350, node_color="whitesmoke", edgecolors="black", ax=ax)
    nx.draw_networkx_labels(g, pos, font_size=8, ax=ax)
    ax.set_title(title or f"{kmap.kind.value} curvature, {kmap.date}")
    ax.axis("off")
    return _save(fig, path)


def plot_rca(results: Mapping[str, RcaResult], graph: FinGraph, delta: Mapping[tuple[str, str], float],
             path) -> Path:
    """Edges on returned paths, colored by the sign of the curvature shift."""
    sub = nx.Graph()
    for r in results.values():
        sub.add_node(r.asset)
        if r.path is not None:
            nx.add_path(sub, r.path.nodes)
    fig, ax = plt.subplots(figsize=(7, 6))
    if sub.number_of_nodes():
        pos = nx.spring_layout(sub, seed=7)
        edges = sorted(tuple(sorted(e)) for e in sub.edges())
        nx.draw_networkx_edges(sub, pos, edgelist=edges, edge_color=_edge_colors(edges, delta), width=2.5, ax=ax)
        terminals = {r.path.end for r in results.values() if r.path is not None}
        colors = ["gold" if n in terminals else "whitesmoke" for n in sub.nodes()]
        nx.draw_networkx_nodes(sub, pos, node_size=400, node_color=colors, edgecolors="black", ax=ax)
        nx.draw_networkx_labels(sub, pos, font_size=8, ax=ax)
        labels = {e: f"{delta.get(edge_key(*e), 0.0):+.3f}" for e in edges}
        nx.draw_networkx_edge_labels(sub, pos, edge_labels=labels, font_size=7, ax=ax)
    ax.set_title(f"RCA paths, {graph.date}")
    ax.axis("off")
    return _save(fig, path)


def plot_flow(weights: Sequence[Mapping[tuple[str, str], float]], delta: Mapping[tuple[str, str], float],
              path, max_edges: int = 12) -> Path:
    """Weight trajectories (one mapping per iteration) for the edges with the largest shift."""
    top = sorted(delta, key=lambda e: (-abs(delta[e]), e))[:max_edges]
    fig, ax = plt.subplots(figsize=(8, 5))
    for e in top:
        ax.plot(range(len(weights)), [w[e] for w in weights], label=f"{e[0]}-{e[1]}", lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("edge weight")
    ax.set_title("Ricci flow weight evolution")
    if top:
        ax.legend(fontsize=7, ncol=2)
    return _save(fig, path)


def flow_weights(doc: Mapping) -> list[dict[tuple[str, str], float]]:
    """Per-iteration weights from a serialized flow trace."""
    return [{(u, v): w for u, v, w, _ in it["edges"]} for it in doc["iterations"]]


def plot_sweep(parameter: str, rows: Sequence, path) -> Path:
    """One panel per metric against the swept parameter."""
    names = [("ndcg_at_10", "NDCG@10"), ("top10_volatility", "Top-10 Volatility"), ("rca_fidelity", "RCA Fidelity")]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    xs = [v for v, _ in rows]
    for ax, (attr, label) in zip(axes, names):
        ys = [getattr(r, attr) for _, r in rows]
        pts = [(x, y) for x, y in zip(xs, ys) if y is not None]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o")
        ax.set_xlabel(parameter)
        ax.set_title(label)
    fig.tight_layout()
    return _save(fig, path)
