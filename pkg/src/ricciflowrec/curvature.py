"""Discrete Ricci curvature on edges: Ollivier (exact optimal transport) and Forman.

Ollivier curvature compares lazy random-walk measures of the two endpoints,
``kappa(u, v) = 1 - W1(mu_u, mu_v) / d(u, v)``, with W1 under the unweighted
hop metric. Edge weights only shape the measures.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import networkx as nx

from .errors import DataError
from .graph_builder import FinGraph, edge_key

logger = logging.getLogger(__name__)

_MASS_TOL = 1e-14


class CurvatureKind(str, Enum):
    OLLIVIER = "ollivier"
    FORMAN = "forman"


@dataclass(frozen=True)
class NeighborhoodMeasure:
    base: str
    masses: Mapping[str, float]
    p_idle: float

    def __post_init__(self):
        total = math.fsum(self.masses.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"measure masses sum to {total}, expected 1")
        if any(m < 0 for m in self.masses.values()):
            raise ValueError("negative mass")


@dataclass(frozen=True)
class CurvatureMap:
    date: dt.date | None
    kind: CurvatureKind
    values: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __getitem__(self, edge: tuple[str, str]) -> float:
        return self.values[edge_key(*edge)]

    def __len__(self):
        return len(self.values)

    def edges(self) -> list[tuple[str, str]]:
        return list(self.values)


def _nx(graph) -> nx.Graph:
    return graph.simple if isinstance(graph, FinGraph) else graph


def neighborhood_measure(graph, node: str, p_idle: float = 0.5) -> NeighborhoodMeasure:
    """Keep ``p_idle`` on the node and spread the rest over neighbors in proportion to edge weight."""
    if not 0.0 <= p_idle < 1.0:
        raise ValueError("p_idle must lie in [0, 1)")
    g = _nx(graph)
    if node not in g:
        raise KeyError(f"node {node!r} not in graph")
    nbrs = sorted(g.neighbors(node))
    if not nbrs:
        return NeighborhoodMeasure(node, {node: 1.0}, p_idle)
    weights = [g[node][n].get("weight", 1.0) for n in nbrs]
    total = math.fsum(weights)
    masses = {n: (1.0 - p_idle) * w / total for n, w in zip(nbrs, weights)}
    if p_idle > 0:
        masses[node] = p_idle
    return NeighborhoodMeasure(node, masses, p_idle)


def transport_cost(supply, demand, cost) -> float:
    """Exact min-cost transport between two mass vectors.

    Successive shortest paths on the bipartite residual network. Costs are
    non-negative; total supply and demand must agree.
    """
    m, n = len(supply), len(demand)
    ra, rb = [float(s) for s in supply], [float(d) for d in demand]
    flow = [[0.0] * n for _ in range(m)]
    inf = math.inf
    for _ in range(4 * (m + 1) * (n + 1) + 10):
        dist = [inf] * (m + n)
        pred = [-1] * (m + n)
        for i in range(m):
            if ra[i] > _MASS_TOL:
                dist[i] = 0.0
        if all(d == inf for d in dist[:m]):
            break
        changed = True
        while changed:
            changed = False
            for i in range(m):
                di = dist[i]
                if di == inf:
                    continue
                row = cost[i]
                for j in range(n):
                    nd = di + row[j]
                    if nd < dist[m + j]:
                        dist[m + j] = nd
                        pred[m + j] = i
                        changed = True
            for j in range(n):
                dj = dist[m + j]
                if dj == inf:
                    continue
                for i in range(m):
                    if flow[i][j] > _MASS_TOL:
                        nd = dj - cost[i][j]
                        if nd < dist[i]:
                            dist[i] = nd
                            pred[i] = m + j
                            changed = True
        best = -1
        for j in range(n):
            if rb[j] > _MASS_TOL and dist[m + j] < inf and (best < 0 or dist[m + j] < dist[m + best]):
                best = j
        if best < 0:
            break
        path = []
        node = m + best
        while pred[node] >= 0:
            path.append((pred[node], node))
            node = pred[node]
        start = node
        delta = min(ra[start], rb[best])
        for p, q in path:
            if p >= m:
                delta = min(delta, flow[q][p - m])
        for p, q in path:
            if p < m:
                flow[p][q - m] += delta
            else:
                flow[q][p - m] -= delta
        ra[start] -= delta
        rb[best] -= delta
    else:
        raise RuntimeError("transport solver did not converge")
    return math.fsum(cost[i][j] * flow[i][j] for i in range(m) for j in range(n) if flow[i][j] > 0)


def _hop_lookup(g: nx.Graph, hops, a: str, b: str) -> float:
    if hops is not None:
        row = hops.get(a)
        if row is not None:
            return row.get(b, math.inf)
    try:
        return float(nx.shortest_path_length(g, a, b))
    except nx.NetworkXNoPath:
        return math.inf


def wasserstein1(mu: NeighborhoodMeasure | Mapping[str, float], nu: NeighborhoodMeasure | Mapping[str, float],
                 graph, hops: Mapping[str, Mapping[str, int]] | None = None) -> float:
    """Exact W1 between two measures under the hop metric of ``graph``.

    Mass shared by both measures stays in place, which is optimal for a metric
    ground cost, so only the excess is transported.
    """
    g = _nx(graph)
    pm = mu.masses if isinstance(mu, NeighborhoodMeasure) else mu
    qm = nu.masses if isinstance(nu, NeighborhoodMeasure) else nu
    for node in list(pm) + list(qm):
        if node not in g:
            raise KeyError(f"support node {node!r} not in graph")
    support = sorted(set(pm) | set(qm))
    src, dst = [], []
    for x in support:
        diff = pm.get(x, 0.0) - qm.get(x, 0.0)
        if diff > 0:
            src.append((x, diff))
        elif diff < 0:
            dst.append((x, -diff))
    if not src or not dst:
        return 0.0
    cost = []
    for x, _ in src:
        row = []
        for y, _ in dst:
            d = _hop_lookup(g, hops, x, y)
            if math.isinf(d):
                raise DataError(f"supports are disconnected: no path between {x!r} and {y!r}")
            row.append(float(d))
        cost.append(row)
    return transport_cost([m for _, m in src], [m for _, m in dst], cost)


def ollivier_curvature(graph, edge: tuple[str, str], p_idle: float = 0.5,
                       hops: Mapping[str, Mapping[str, int]] | None = None) -> float:
    g = _nx(graph)
    u, v = edge
    if not g.has_edge(u, v):
        raise KeyError(f"edge {edge} not in graph")
    mu = neighborhood_measure(g, u, p_idle)
    nu = neighborhood_measure(g, v, p_idle)
    # hop distance between adjacent endpoints is 1
    return 1.0 - wasserstein1(mu, nu, g, hops)


def forman_curvature(graph, edge: tuple[str, str], variant: str = "1d") -> float:
    """Weighted Forman curvature with unit node weights.

    ``variant="augmented"`` adds triangle (2-cell) contributions with unit face weight.
    """
    g = _nx(graph)
    u, v = edge
    if not g.has_edge(u, v):
        raise KeyError(f"edge {edge} not in graph")
    w_e = g[u][v].get("weight", 1.0)
    nu_ = set(g.neighbors(u)) - {v}
    nv_ = set(g.neighbors(v)) - {u}
    if variant == "1d":
        su = math.fsum(1.0 / math.sqrt(w_e * g[u][x].get("weight", 1.0)) for x in sorted(nu_))
        sv = math.fsum(1.0 / math.sqrt(w_e * g[v][x].get("weight", 1.0)) for x in sorted(nv_))
        return w_e * (1.0 / w_e + 1.0 / w_e - (su + sv))
    if variant == "augmented":
        face = nu_ & nv_
        sum_ef = len(face) * w_e
        sum_ve = 2.0 / w_e
        sum_veeh = math.fsum(
            [1.0 / math.sqrt(w_e * g[u][x].get("weight", 1.0)) for x in sorted(nu_ - face)]
            + [1.0 / math.sqrt(w_e * g[v][x].get("weight", 1.0)) for x in sorted(nv_ - face)])
        return w_e * (sum_ef + sum_ve - abs(0.0 - sum_veeh))
    raise ValueError(f"unknown Forman variant {variant!r}")


def hop_table(graph) -> dict[str, dict[str, int]]:
    """Hop distances up to 3, enough for supports of adjacent nodes' measures."""
    g = _nx(graph)
    return {n: dict(nx.single_source_shortest_path_length(g, n, cutoff=3)) for n in g}


def curvature_values(g: nx.Graph, kind: CurvatureKind | str, p_idle: float = 0.5, *,
                     forman_variant: str = "1d", hops=None) -> dict[tuple[str, str], float]:
    kind = CurvatureKind(kind)
    if kind is CurvatureKind.OLLIVIER and hops is None:
        hops = hop_table(g)
    out = {}
    errors = []
    for u, v in sorted(edge_key(a, b) for a, b in g.edges()):
        try:
            if kind is CurvatureKind.OLLIVIER:
                out[(u, v)] = ollivier_curvature(g, (u, v), p_idle, hops)
            else:
                out[(u, v)] = forman_curvature(g, (u, v), forman_variant)
        except (DataError, ValueError, RuntimeError) as exc:
            errors.append(f"({u}, {v}): {exc}")
    if errors:
        raise DataError("curvature failed on edges: " + "; ".join(errors))
    return out


def curvature_map(graph, kind: CurvatureKind | str = CurvatureKind.OLLIVIER, p_idle: float = 0.5, *,
                  forman_variant: str = "1d") -> CurvatureMap:
    """Curvature of every edge of the collapsed graph, keyed by canonical edge."""
    kind = CurvatureKind(kind)
    date = graph.date if isinstance(graph, FinGraph) else None
    values = curvature_values(_nx(graph), kind, p_idle, forman_variant=forman_variant)
    return CurvatureMap(date, kind, values)
