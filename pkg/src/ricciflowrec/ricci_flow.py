"""Discrete Ricci flow on edge weights and the resulting curvature shifts.

Each iteration applies an explicit Euler step of ``dw/dt = -kappa * w``:
positively curved edges shrink, negatively curved ones grow. With
renormalization the total edge weight is held at its initial value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

from .curvature import CurvatureKind, CurvatureMap, curvature_values, hop_table
from .errors import DataError
from .graph_builder import FinGraph

logger = logging.getLogger(__name__)

Weights = dict[tuple[str, str], float]


class FlowError(DataError):
    """Raised when a flow step would leave the admissible region."""


@dataclass(frozen=True)
class FlowConfig:
    eta: float = 0.1
    iterations: int = 50
    renormalize: bool = True
    kind: CurvatureKind = CurvatureKind.OLLIVIER
    p_idle: float = 0.5
    frozen_curvature: bool = False
    forman_variant: str = "1d"

    def __post_init__(self):
        object.__setattr__(self, "kind", CurvatureKind(self.kind))
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 <= self.p_idle < 1.0:
            raise ValueError("p_idle must lie in [0, 1)")


@dataclass(frozen=True)
class FlowState:
    iteration: int
    weights: Mapping[tuple[str, str], float]
    kappa: Mapping[tuple[str, str], float]


@dataclass(frozen=True)
class FlowTrace:
    states: tuple[FlowState, ...]
    initial: CurvatureMap
    final: CurvatureMap
    delta: Mapping[tuple[str, str], float] = field(default_factory=dict)

    @property
    def final_weights(self) -> Mapping[tuple[str, str], float]:
        return self.states[-1].weights


def flow_step(weights: Mapping[tuple[str, str], float], curvatures: Mapping[tuple[str, str], float],
              eta: float) -> Weights:
    """One Euler step ``w' = w * (1 - eta * kappa)``; requires ``eta * |kappa| < 1`` on every edge."""
    out = {}
    for e, w in weights.items():
        k = curvatures[e]
        if not eta * abs(k) < 1.0:
            raise FlowError(f"step size violation on edge {e}: eta={eta}, kappa={k}, eta*|kappa| >= 1")
        out[e] = w * (1.0 - eta * k)
    return out


def renormalize_weights(weights: Mapping[tuple[str, str], float], target_total: float | None = None) -> Weights:
    """Scale all weights by one factor so they sum to ``target_total``."""
    total = math.fsum(weights.values())
    if not total > 0:
        raise FlowError("total weight must be > 0 to renormalize")
    if target_total is None or total == target_total:
        return dict(weights)
    scale = target_total / total
    return {e: w * scale for e, w in weights.items()}


def simulate_flow(graph: FinGraph, cfg: FlowConfig = FlowConfig()) -> FlowTrace:
    """Run ``cfg.iterations`` flow steps on the graph's combined weights.

    ``states[0]`` holds the initial weights; ``states[i]`` the weights after
    step i together with their curvature. The curvature shift is the final
    curvature minus the initial one.
    """
    g = graph.to_networkx()
    if g.number_of_edges() == 0:
        raise DataError("flow needs a graph with at least one edge")
    weights: Weights = dict(graph.combined_weights)
    total0 = math.fsum(weights.values())
    hops = hop_table(g) if cfg.kind is CurvatureKind.OLLIVIER else None

    def curv(w: Mapping[tuple[str, str], float]) -> dict:
        for (u, v), val in w.items():
            g[u][v]["weight"] = val
        return curvature_values(g, cfg.kind, cfg.p_idle, forman_variant=cfg.forman_variant, hops=hops)

    kappa0 = curv(weights)
    kappa = kappa0
    states = [FlowState(0, dict(weights), kappa0)]
    for it in range(1, cfg.iterations + 1):
        try:
            weights = flow_step(weights, kappa0 if cfg.frozen_curvature else kappa, cfg.eta)
        except FlowError as exc:
            raise FlowError(f"iteration {it}: {exc}") from None
        if cfg.renormalize:
            weights = renormalize_weights(weights, total0)
        bad = [e for e, w in weights.items() if not (math.isfinite(w) and w > 0)]
        if bad:
            raise FlowError(f"iteration {it}: non-finite or non-positive weight on {bad[0]}")
        if cfg.frozen_curvature and it < cfg.iterations:
            kappa = kappa0
        else:
            kappa = curv(weights)
        states.append(FlowState(it, dict(weights), kappa))
    final = states[-1].kappa
    delta = {e: final[e] - kappa0[e] for e in kappa0}
    return FlowTrace(tuple(states), CurvatureMap(graph.date, cfg.kind, kappa0),
                     CurvatureMap(graph.date, cfg.kind, final), delta)


@dataclass(frozen=True)
class CrossShift:
    delta: Mapping[tuple[str, str], float]
    born: tuple[tuple[str, str], ...]
    died: tuple[tuple[str, str], ...]


def cross_day_shift(prev: CurvatureMap, curr: CurvatureMap) -> CrossShift:
    """Curvature change on edges present in both snapshots; the rest are reported as born or died."""
    if prev.kind != curr.kind:
        raise ValueError(f"curvature kind mismatch: {prev.kind.value} vs {curr.kind.value}")
    common = sorted(set(prev.values) & set(curr.values))
    delta = {e: curr.values[e] - prev.values[e] for e in common}
    born = tuple(sorted(set(curr.values) - set(prev.values)))
    died = tuple(sorted(set(prev.values) - set(curr.values)))
    return CrossShift(delta, born, died)


def trace_to_dict(trace: FlowTrace) -> dict:
    return {
        "kind": trace.initial.kind.value,
        "iterations": [
            {"iter": s.iteration,
             "edges": [[u, v, s.weights[(u, v)], s.kappa[(u, v)]] for (u, v) in sorted(s.weights)]}
            for s in trace.states
        ],
        "delta_kappa": [[u, v, d] for (u, v), d in sorted(trace.delta.items())],
    }
