"""Daily heterogeneous financial graph: assets, macro indicators and news entities.

Edges come from three signals (return correlation, embedding similarity of
co-mentioned entities, curated knowledge links) and are thinned to each node's
``top_k`` strongest relations per kind.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .errors import DataError
from .market_data import MarketFrame

logger = logging.getLogger(__name__)

KNOWLEDGE_HEADER = ["src", "dst", "relation", "weight"]
COMENTION_HEADER = ["date", "entity_a", "entity_b"]


class NodeKind(str, Enum):
    ASSET = "asset"
    MACRO = "macro"
    NEWS = "news"


class EdgeKind(str, Enum):
    CORRELATION = "correlation"
    SEMANTIC = "semantic"
    KNOWLEDGE = "knowledge"


def edge_key(u: str, v: str) -> tuple[str, str]:
    """Canonical undirected key: endpoints in lexicographic order."""
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True, order=True)
class Edge:
    u: str
    v: str
    kind: EdgeKind
    weight: float

    def __post_init__(self):
        if self.u == self.v:
            raise DataError(f"self-loop on {self.u!r}")
        if self.u > self.v:
            u, v = self.v, self.u
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "v", v)
        if not (math.isfinite(self.weight) and self.weight > 0):
            raise DataError(f"edge ({self.u}, {self.v}) weight must be finite and > 0, got {self.weight}")
        object.__setattr__(self, "kind", EdgeKind(self.kind))

    @property
    def key(self) -> tuple[str, str]:
        return (self.u, self.v)


@dataclass(frozen=True)
class KnowledgeLink:
    src: str
    dst: str
    relation: str
    weight: float
    valid_from: dt.date | None = None
    valid_to: dt.date | None = None

    def __post_init__(self):
        if not 0.0 < self.weight <= 1.0:
            raise DataError(f"knowledge link weight must lie in (0, 1], got {self.weight}")

    def active(self, date: dt.date | None) -> bool:
        if date is None:
            return True
        if self.valid_from is not None and date < self.valid_from:
            return False
        if self.valid_to is not None and date > self.valid_to:
            return False
        return True


@dataclass(frozen=True)
class FinGraph:
    """Immutable undirected graph snapshot with kind-tagged nodes and edges.

    A pair may carry one edge per EdgeKind. Curvature and flow consume the
    collapsed simple graph whose weight is the maximum over kinds.
    """

    date: dt.date | None
    nodes: tuple[tuple[str, NodeKind], ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        nodes = tuple(sorted((n, NodeKind(k)) for n, k in self.nodes))
        ids = [n for n, _ in nodes]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate node ids")
        known = set(ids)
        seen = set()
        for e in self.edges:
            if e.u not in known or e.v not in known:
                raise DataError(f"edge ({e.u}, {e.v}) references an unknown node")
            if (e.u, e.v, e.kind) in seen:
                raise DataError(f"duplicate {e.kind.value} edge ({e.u}, {e.v})")
            seen.add((e.u, e.v, e.kind))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    @cached_property
    def kinds(self) -> dict[str, NodeKind]:
        return dict(self.nodes)

    def node_kind(self, node: str) -> NodeKind:
        return self.kinds[node]

    @property
    def node_ids(self) -> list[str]:
        return [n for n, _ in self.nodes]

    @property
    def assets(self) -> list[str]:
        return [n for n, k in self.nodes if k is NodeKind.ASSET]

    @cached_property
    def combined_weights(self) -> dict[tuple[str, str], float]:
        out: dict[tuple[str, str], float] = {}
        for e in self.edges:
            out[e.key] = max(out.get(e.key, 0.0), e.weight)
        return dict(sorted(out.items()))

    @cached_property
    def _simple(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.node_ids)
        g.add_weighted_edges_from((u, v, w) for (u, v), w in self.combined_weights.items())
        return nx.freeze(g)

    def to_networkx(self) -> nx.Graph:
        """Mutable copy of the collapsed simple graph with ``weight`` attributes."""
        return nx.Graph(self._simple)

    @property
    def simple(self) -> nx.Graph:
        """Frozen collapsed simple graph; do not mutate."""
        return self._simple

    def with_weights(self, weights: Mapping[tuple[str, str], float]) -> "FinGraph":
        """Copy where every kind-edge of a pair is rescaled so the pair's combined weight matches."""
        combined = self.combined_weights
        edges = []
        for e in self.edges:
            scale = weights[e.key] / combined[e.key]
            edges.append(Edge(e.u, e.v, e.kind, e.weight * scale))
        return FinGraph(self.date, self.nodes, tuple(edges))


def correlation_edges(frames: Sequence[MarketFrame], universe: Iterable[str], window: int = 30) -> list[Edge]:
    """|Pearson correlation| of log returns over the trailing ``window`` frames.

    Pairs need returns on all ``window`` days; zero-variance series are omitted.
    """
    if len(frames) < window:
        raise DataError(f"correlation needs {window} trailing frames, got {len(frames)}")
    frames = list(frames)[-window:]
    series = {}
    for ent in sorted(set(universe)):
        if all(ent in f.raw for f in frames):
            x = np.array([f.raw[ent].log_return for f in frames])
            xc = x - x.mean()
            ss = float(np.dot(xc, xc))
            # exact test: the float mean of a constant series can leave residue
            if ss == 0.0 or np.all(x == x[0]):
                logger.info("zero-variance returns for %s; correlation pairs omitted", ent)
                continue
            series[ent] = (xc, ss)
    ents = sorted(series)
    out = []
    for i, a in enumerate(ents):
        xa, sa = series[a]
        for b in ents[i + 1:]:
            xb, sb = series[b]
            rho = float(np.dot(xa, xb)) / math.sqrt(sa * sb)
            w = min(abs(rho), 1.0)
            if w > 0.0:
                out.append(Edge(a, b, EdgeKind.CORRELATION, w))
    return out


def semantic_edges(embeddings: Mapping[str, np.ndarray], comention: Iterable[tuple[str, str]]) -> list[Edge]:
    """Cosine similarity of embeddings for co-mentioned pairs; non-positive similarity gives no edge."""
    pairs = sorted({edge_key(a, b) for a, b in comention if a != b})
    out = []
    for a, b in pairs:
        if a not in embeddings or b not in embeddings:
            logger.info("co-mention (%s, %s) lacks an embedding; skipped", a, b)
            continue
        va = np.asarray(embeddings[a], dtype=float)
        vb = np.asarray(embeddings[b], dtype=float)
        na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
        if na == 0.0 or nb == 0.0:
            logger.warning("zero-norm embedding in pair (%s, %s); skipped", a, b)
            continue
        cos = min(float(np.dot(va, vb)) / (na * nb), 1.0)
        if cos > 0.0:
            out.append(Edge(a, b, EdgeKind.SEMANTIC, cos))
    return out


def knowledge_edges(links: Iterable[KnowledgeLink], date: dt.date | None = None,
                    universe: Iterable[str] | None = None) -> list[Edge]:
    """One edge per active link; duplicates keep the max weight."""
    known = set(universe) if universe is not None else None
    best: dict[tuple[str, str], float] = {}
    for link in links:
        if not link.active(date) or link.src == link.dst:
            continue
        if known is not None and (link.src not in known or link.dst not in known):
            logger.info("knowledge link (%s, %s) has an endpoint outside the universe; skipped",
                        link.src, link.dst)
            continue
        key = edge_key(link.src, link.dst)
        best[key] = max(best.get(key, 0.0), link.weight)
    return [Edge(u, v, EdgeKind.KNOWLEDGE, w) for (u, v), w in sorted(best.items())]


def _select_top_k(edges: Sequence[Edge], top_k: int) -> set[tuple[str, str]]:
    incident: dict[str, list[tuple[float, str, tuple[str, str]]]] = defaultdict(list)
    for e in edges:
        incident[e.u].append((-e.weight, e.v, e.key))
        incident[e.v].append((-e.weight, e.u, e.key))
    keep = set()
    for node in incident:
        for _, _, key in sorted(incident[node])[:top_k]:
            keep.add(key)
    return keep


def assemble_graph(
    corr: Iterable[Edge],
    sem: Iterable[Edge],
    knw: Iterable[Edge],
    top_k: int = 10,
    *,
    nodes: Mapping[str, NodeKind] | None = None,
    date: dt.date | None = None,
    weight_floor: float | None = None,
) -> FinGraph:
    """Keep each node's ``top_k`` strongest edges per kind; an edge survives if either endpoint keeps it.

    ``nodes`` fixes the node set (isolated nodes allowed); by default every
    edge endpoint becomes an asset node.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    survivors = []
    endpoints = set()
    for kind, edges in ((EdgeKind.CORRELATION, corr), (EdgeKind.SEMANTIC, sem), (EdgeKind.KNOWLEDGE, knw)):
        edges = [e for e in edges if e.kind is kind]
        if weight_floor is not None:
            edges = [e for e in edges if e.weight >= weight_floor]
        keep = _select_top_k(edges, top_k)
        for e in edges:
            if e.key in keep:
                survivors.append(e)
                endpoints.update(e.key)
    if nodes is None:
        nodes = {n: NodeKind.ASSET for n in endpoints}
    else:
        unknown = endpoints - set(nodes)
        if unknown:
            raise DataError(f"edges reference nodes outside the day's universe: {sorted(unknown)}")
    return FinGraph(date, tuple(nodes.items()), tuple(survivors))


def node_stress(frame: MarketFrame) -> dict[str, float]:
    """Per-entity stress: positive volatility z-score plus negative sentiment."""
    return {e: max(0.0, fv.realised_vol) + max(0.0, -fv.sentiment) for e, fv in frame.features.items()}


def stress_reweight(graph: FinGraph, stress: Mapping[str, float], gamma: float) -> FinGraph:
    """Scale each edge by ``1 + gamma * (stress_u + stress_v) / 2``; topology is unchanged."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return graph
    edges = []
    for e in graph.edges:
        s = (stress.get(e.u, 0.0) + stress.get(e.v, 0.0)) / 2.0
        edges.append(Edge(e.u, e.v, e.kind, e.weight * (1.0 + gamma * s)))
    return FinGraph(graph.date, graph.nodes, tuple(edges))


def graph_to_dict(graph: FinGraph) -> dict:
    return {
        "date": graph.date.isoformat() if graph.date else None,
        "nodes": [[n, k.value] for n, k in graph.nodes],
        "edges": [[e.u, e.v, e.kind.value, e.weight] for e in graph.edges],
    }


def graph_from_dict(doc: Mapping) -> FinGraph:
    date = dt.date.fromisoformat(doc["date"]) if doc.get("date") else None
    nodes = tuple((n, NodeKind(k)) for n, k in doc["nodes"])
    edges = tuple(Edge(u, v, EdgeKind(k), float(w)) for u, v, k, w in doc["edges"])
    return FinGraph(date, nodes, edges)


def load_knowledge(path) -> list[KnowledgeLink]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    links = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:4]] != KNOWLEDGE_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(KNOWLEDGE_HEADER)}")
        extra = [c.strip() for c in header[4:]]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                weight = float(row[3])
                opt = dict(zip(extra, row[4:]))
                vf = dt.date.fromisoformat(opt["valid_from"]) if opt.get("valid_from") else None
                vt = dt.date.fromisoformat(opt["valid_to"]) if opt.get("valid_to") else None
                links.append(KnowledgeLink(row[0].strip(), row[1].strip(), row[2].strip(), weight, vf, vt))
            except (ValueError, IndexError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return links


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Whitespace-separated lines: entity id followed by d floats."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    table: dict[str, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric embedding entry") from None
        if dim is None:
            dim = len(vec)
        if len(vec) != dim or dim == 0:
            raise DataError(f"{path}:{lineno}: expected {dim} floats, got {len(vec)}")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{path}:{lineno}: non-finite embedding entry")
        table[parts[0]] = vec
    return table


def load_comention(path) -> dict[dt.date, set[tuple[str, str]]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    out: dict[dt.date, set[tuple[str, str]]] = defaultdict(set)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != COMENTION_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(COMENTION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields")
            try:
                d = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad date {row[0]!r}") from None
            a, b = row[1].strip(), row[2].strip()
            if a != b:
                out[d].add(edge_key(a, b))
    return dict(out)
