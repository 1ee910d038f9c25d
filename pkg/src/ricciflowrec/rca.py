"""Root-cause paths from ranked assets back to stress sources.

A node is unstable when the signed mean curvature shift of its incident edges
falls below ``theta``. Paths are traced from an asset over edges whose
``|delta kappa|`` exceeds ``|theta|``; the threshold is negative by
convention, so its magnitude is what filters edges. A path ends at the first
target (unstable or externally perturbed node) it reaches.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .graph_builder import FinGraph, edge_key

REASON_PERTURBED = "perturbed"
REASON_UNSTABLE = "unstable"
REASON_HOP_LIMIT = "hop_limit"
REASON_DECAY = "decay"
REASON_NO_ROUTE = "no_route"


@dataclass(frozen=True)
class RcaParams:
    theta: float = -0.05
    h_max: int = 6
    epsilon: float = 0.01

    def __post_init__(self):
        if self.h_max < 1:
            raise ValueError("h_max must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class UnstableZone:
    date: dt.date | None
    nodes: frozenset[str]
    values: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RcaPath:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...]
    cumulative: float
    terminal: str

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def end(self) -> str:
        return self.nodes[-1]


@dataclass(frozen=True)
class RcaResult:
    asset: str
    path: RcaPath | None
    reason: str


def avg_curv_change(node: str, delta: Mapping[tuple[str, str], float], graph: FinGraph) -> float | None:
    """Signed mean shift over the node's incident edges; ``None`` if it has none in ``delta``."""
    vals = [delta[edge_key(node, n)] for n in sorted(graph.simple.neighbors(node))
            if edge_key(node, n) in delta]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


def unstable_zone(graph: FinGraph, delta: Mapping[tuple[str, str], float], theta: float) -> UnstableZone:
    values = {}
    for n in graph.node_ids:
        a = avg_curv_change(n, delta, graph)
        if a is not None:
            values[n] = a
    nodes = frozenset(n for n, a in values.items() if a < theta)
    return UnstableZone(graph.date, nodes, values)


def admissible(dk: float, params: RcaParams) -> bool:
    d = abs(dk)
    return d > abs(params.theta) and not d < params.epsilon


def _better(key, best_key) -> bool:
    return best_key is None or key < best_key


def backward_search(asset: str, targets: Iterable[str], graph: FinGraph,
                    delta: Mapping[tuple[str, str], float], params: RcaParams = RcaParams(),
                    perturbed: Iterable[str] = ()) -> RcaResult:
    """Breadth-first search over simple paths from ``asset`` to any target within ``h_max`` hops.

    Returns the path with the largest summed ``|delta kappa|``; ties prefer the
    shorter path, then the lexicographically smaller node sequence.
    """
    g = graph.simple
    if asset not in g:
        raise KeyError(f"asset {asset!r} not in graph")
    targets = set(targets)
    perturbed = set(perturbed)
    limit = abs(params.theta)
    nbrs = {n: sorted(g.neighbors(n)) for n in g}

    best = None
    best_key = None
    decayed = False
    frontier: list[tuple[tuple[str, ...], tuple[float, ...], float]] = [((asset,), (), 0.0)]
    for _ in range(params.h_max):
        nxt = []
        for path, dks, cum in frontier:
            last = path[-1]
            for nb in nbrs[last]:
                if nb in path:
                    continue
                dk = delta.get(edge_key(last, nb), 0.0)
                d = abs(dk)
                if not d > limit:
                    continue
                if d < params.epsilon:
                    decayed = True
                    continue
                npath, ndks, ncum = path + (nb,), dks + (dk,), cum + d
                if nb in targets:
                    key = (-ncum, len(npath), npath)
                    if _better(key, best_key):
                        best, best_key = (npath, ndks, ncum), key
                else:
                    nxt.append((npath, ndks, ncum))
        frontier = nxt
        if not frontier:
            break

    if best is not None:
        npath, ndks, ncum = best
        edges = tuple((a, b, dk) for a, b, dk in zip(npath, npath[1:], ndks))
        terminal = REASON_PERTURBED if npath[-1] in perturbed else REASON_UNSTABLE
        return RcaResult(asset, RcaPath(npath, edges, ncum, terminal), terminal)

    hop_limited = any(
        nb not in path and admissible(delta.get(edge_key(path[-1], nb), 0.0), params)
        for path, _, _ in frontier for nb in nbrs[path[-1]])
    if hop_limited:
        reason = REASON_HOP_LIMIT
    elif decayed:
        reason = REASON_DECAY
    else:
        reason = REASON_NO_ROUTE
    return RcaResult(asset, None, reason)


def rca_report(top_assets: Sequence[str], zone: UnstableZone, graph: FinGraph,
               delta: Mapping[tuple[str, str], float], params: RcaParams = RcaParams(),
               perturbed: Iterable[str] = ()) -> dict[str, RcaResult]:
    """One search per top asset; targets are the unstable zone plus the perturbed nodes."""
    perturbed = set(perturbed) & set(graph.node_ids)
    targets = set(zone.nodes) | perturbed
    return {a: backward_search(a, targets, graph, delta, params, perturbed) for a in top_assets}


def rca_fidelity(trials: Iterable[tuple[Mapping[str, RcaResult], Iterable[str]]]) -> float | None:
    """Fraction of trials where some returned path ends at a truly perturbed node."""
    hits = n = 0
    for results, truth in trials:
        truth = set(truth)
        n += 1
        if any(r.path is not None and r.path.end in truth for r in results.values()):
            hits += 1
    if n == 0:
        return None
    return hits / n


def validate_path(path: RcaPath, graph: FinGraph, delta: Mapping[tuple[str, str], float],
                  params: RcaParams) -> list[str]:
    """Re-check path invariants; returns a list of violations (empty when valid)."""
    problems = []
    if len(set(path.nodes)) != len(path.nodes):
        problems.append("repeated node")
    if path.hops > params.h_max:
        problems.append(f"{path.hops} hops exceeds h_max={params.h_max}")
    total = 0.0
    for a, b, dk in path.edges:
        if not graph.simple.has_edge(a, b):
            problems.append(f"({a}, {b}) is not an edge")
            continue
        if dk != delta.get(edge_key(a, b)):
            problems.append(f"({a}, {b}) delta mismatch")
        if not admissible(dk, params):
            problems.append(f"({a}, {b}) |delta|={abs(dk)} not above threshold")
        total += abs(dk)
    if total != path.cumulative:
        problems.append("cumulative mismatch")
    return problems


def result_to_dict(res: RcaResult) -> dict:
    if res.path is None:
        return {"asset": res.asset, "path": [], "edges": [], "cumulative": 0.0, "reason": res.reason}
    return {
        "asset": res.asset,
        "path": list(res.path.nodes),
        "edges": [[a, b, dk] for a, b, dk in res.path.edges],
        "cumulative": res.path.cumulative,
        "reason": res.reason,
    }


def result_from_dict(doc: Mapping) -> RcaResult:
    if not doc["path"]:
        return RcaResult(doc["asset"], None, doc["reason"])
    edges = tuple((a, b, float(dk)) for a, b, dk in doc["edges"])
    path = RcaPath(tuple(doc["path"]), edges, float(doc["cumulative"]), doc["reason"])
    return RcaResult(doc["asset"], path, doc["reason"])


def rca_to_dot(results: Mapping[str, RcaResult], graph: FinGraph, name: str = "rca") -> str:
    """DOT text for the union of all RCA paths; edges labeled with their curvature shift."""
    lines = [f"graph {name} {{", "  node [shape=ellipse];"]
    nodes = set()
    edges = {}
    for res in results.values():
        if res.path is None:
            continue
        nodes.update(res.path.nodes)
        for a, b, dk in res.path.edges:
            edges[edge_key(a, b)] = dk
    for n in sorted(nodes):
        attrs = [f'label="{n}"', f'kind="{graph.node_kind(n).value}"']
        if n in results:
            attrs.append("shape=box")
        lines.append(f'  "{n}" [{", ".join(attrs)}];')
    for (a, b), dk in sorted(edges.items()):
        color = "red" if dk < 0 else "blue"
        lines.append(f'  "{a}" -- "{b}" [label="{dk:.4f}", color={color}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
