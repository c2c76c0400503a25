"""The entropy functional of a flooding and its per-territory restrictions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ComponentNotArmAligned, FormMismatch
from .flooding import CoveredSet, Flooding
from .metric_graph import TOL, Component, GraphPoint, MetricGraph


def xlogx(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = z[pos] * np.log(z[pos])
    return out


@dataclass(frozen=True)
class StageEntropy:
    duration: float
    rates: tuple[float, ...]
    contribution: float


@dataclass(frozen=True)
class BetaReport:
    beta: float
    per_stage: tuple[StageEntropy, ...]
    expanded: float  # same quantity from the product form, as a cross-check


def beta(f: Flooding) -> BetaReport:
    """Entropy of ``f``: minus the sum over stages of duration times sum z log z.

    Also evaluates the expanded form built from per-arm covered lengths
    (duration*log(duration) minus the sum of l*log(l) over arms); the two
    agree exactly when every stage's rates sum to one.
    """
    per_stage, expanded = [], []
    for s in f.stages:
        z = s.rates
        dt = s.duration
        c = -dt * float(xlogx(z).sum())
        per_stage.append(StageEntropy(dt, tuple(z.tolist()), c))
        expanded.append(float(xlogx(dt) - xlogx(z * dt).sum()))
    total = math.fsum(p.contribution for p in per_stage)
    alt = math.fsum(expanded)
    scale = max(1.0, f.end_time)
    if abs(total - alt) > 1e-9 * scale:
        raise FormMismatch(f"compact form {total!r} disagrees with expanded form {alt!r}")
    return BetaReport(total, tuple(per_stage), alt)


def beta_upper_bound(g: MetricGraph, n_sources: int) -> float:
    """Max-entropy bound: no stage can have more than 2(|E| + sources) arms."""
    return g.total_length * math.log(2 * (len(g.edges) + n_sources))


def _overlap(comp: Component, edge: int, a: float, b: float) -> tuple[float, bool]:
    """Length of [a, b] on ``edge`` inside the component, and whether [a, b] lies in one piece."""
    lo, hi = min(a, b), max(a, b)
    shared, inside = 0.0, False
    for p in comp.pieces:
        if p.edge == edge:
            shared += max(0.0, min(hi, p.hi) - max(lo, p.lo))
            inside |= p.lo - 1e-7 <= lo and hi <= p.hi + 1e-7
    return shared, inside


def beta_restricted(f: Flooding, component: Component) -> float:
    """Entropy contribution of the arms whose trajectories lie in ``component``."""
    total = []
    for s in f.stages:
        for arm in s.arms:
            if arm.rate <= 0:
                continue
            end = arm.position(s.duration)
            shared, inside = _overlap(component, arm.edge, arm.offset, end)
            if shared <= TOL:
                continue
            if not inside:
                raise ComponentNotArmAligned(
                    f"arm on edge {arm.edge} from {arm.offset} to {end} crosses the component boundary"
                )
            total.append(-s.duration * arm.rate * math.log(arm.rate))
    return math.fsum(total)


def territories(f: Flooding) -> list[Component]:
    """Closure of the region swept from each source.

    An arm belongs to the source whose covered component holds its anchor at
    the start of its stage; if components have merged, the lowest-index
    source in the merged component wins.
    """
    g = f._require_graph()
    segments: list[list[tuple[int, float, float]]] = [[] for _ in f.sources]
    for s in f.stages:
        comps = f.covered_at(s.t_start).components()
        owner = []
        for comp in comps:
            idx = [i for i, p in enumerate(f.sources) if comp.contains(g, p)]
            owner.append(idx[0] if idx else None)
        for arm in s.arms:
            if arm.rate <= 0:
                continue
            for comp, i in zip(comps, owner):
                if i is not None and comp.contains(g, arm.anchor):
                    segments[i].append((arm.edge, arm.offset, arm.position(s.duration)))
                    break
    out = []
    for src, segs in zip(f.sources, segments):
        cs = CoveredSet.from_points(g, [src]).with_segments(segs)
        comps = cs.components()
        if len(comps) == 1:
            out.append(comps[0])
        else:  # only reachable for floodings whose components merged
            out.append(Component(tuple(p for c in comps for p in c.pieces),
                                 tuple(q for c in comps for q in c.points)))
    return out


def source_betas(f: Flooding) -> list[float]:
    return [beta_restricted(f, comp) for comp in territories(f)]

