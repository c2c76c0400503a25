"""Staged piecewise-linear growth of closed subsets of a metric graph.

A flooding starts from finitely many source points.  During a stage every
boundary point of the covered set (an *arm*) moves along its edge at a
constant rate, and the rates of all arms sum to one, so the covered measure
at time ``t`` is exactly ``t``.  A stage ends when an arm reaches a vertex or
two arms facing each other meet; the rate policy is then consulted again.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .errors import (
    BadPolicy,
    CoincidentPoints,
    GraphMismatch,
    StallDetected,
    TimeOutOfRange,
)
from .metric_graph import TOL, Component, GraphPoint, MetricGraph, Piece

RATE_TOL = 1e-9


@dataclass(frozen=True)
class Arm:
    edge: int
    offset: float  # anchor position at the start of the stage
    direction: int
    rate: float

    @property
    def anchor(self) -> GraphPoint:
        return GraphPoint(self.edge, self.offset)

    def position(self, elapsed: float) -> float:
        return self.offset + self.direction * self.rate * elapsed


@dataclass(frozen=True)
class Stage:
    t_start: float
    t_end: float
    arms: tuple[Arm, ...]

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def rates(self) -> np.ndarray:
        return np.array([a.rate for a in self.arms])


@dataclass(frozen=True)
class ArmSlot:
    """An outward normal of the covered set, before a rate is assigned."""

    edge: int
    offset: float
    direction: int


@dataclass(frozen=True)
class Gap:
    """A maximal uncovered open interval of an edge."""

    edge: int
    lo: float
    hi: float
    lo_covered: bool
    hi_covered: bool


class CoveredSet:
    """Closed subset of S: sorted disjoint closed intervals per edge plus covered vertices.

    Degenerate intervals ``[x, x]`` hold isolated interior points.
    """

    def __init__(self, graph: MetricGraph, intervals: Mapping[int, Iterable[tuple[float, float]]],
                 vertices: Iterable[int] = ()):
        self.graph = graph
        covered = set(vertices)
        clean: dict[int, tuple[tuple[float, float], ...]] = {}
        for edge, ivs in intervals.items():
            length = graph.edges[edge].length
            merged: list[list[float]] = []
            for lo, hi in sorted(_snap(lo, hi, length) for lo, hi in ivs):
                if merged and lo <= merged[-1][1] + TOL:
                    merged[-1][1] = max(merged[-1][1], hi)
                else:
                    merged.append([lo, hi])
            kept = []
            for lo, hi in merged:
                if lo == 0.0:
                    covered.add(graph.edges[edge].tail)
                if hi == length:
                    covered.add(graph.edges[edge].head)
                if hi == 0.0 or lo == length:
                    continue  # a bare vertex, recorded in `covered`
                kept.append((lo, hi))
            if kept:
                clean[edge] = tuple(kept)
        self.intervals = clean
        self.vertices = frozenset(covered)

    @classmethod
    def from_points(cls, graph: MetricGraph, points: Iterable[GraphPoint]) -> "CoveredSet":
        intervals: dict[int, list[tuple[float, float]]] = {}
        vertices = set()
        for p in points:
            v = graph.vertex_at(p)
            if v is not None:
                vertices.add(v)
            else:
                intervals.setdefault(p.edge, []).append((p.offset, p.offset))
        return cls(graph, intervals, vertices)

    def with_segments(self, segments: Iterable[tuple[int, float, float]]) -> "CoveredSet":
        intervals = {e: list(ivs) for e, ivs in self.intervals.items()}
        for edge, a, b in segments:
            intervals.setdefault(edge, []).append((min(a, b), max(a, b)))
        return CoveredSet(self.graph, intervals, self.vertices)

    @property
    def measure(self) -> float:
        return math.fsum(hi - lo for ivs in self.intervals.values() for lo, hi in ivs)

    def is_full(self) -> bool:
        return not self.gaps()

    def gaps(self) -> list[Gap]:
        out = []
        for e in self.graph.edges:
            start, start_cov = 0.0, e.tail in self.vertices
            for lo, hi in self.intervals.get(e.id, ()):
                if lo > start + TOL:
                    out.append(Gap(e.id, start, lo, start_cov, True))
                start, start_cov = hi, True
            if e.length > start + TOL:
                out.append(Gap(e.id, start, e.length, start_cov, e.head in self.vertices))
        return out

    def normals(self) -> list[ArmSlot]:
        slots = []
        for gap in self.gaps():
            if gap.lo_covered:
                slots.append(ArmSlot(gap.edge, gap.lo, +1))
            if gap.hi_covered:
                slots.append(ArmSlot(gap.edge, gap.hi, -1))
        return slots

    def contains(self, p: GraphPoint) -> bool:
        v = self.graph.vertex_at(p)
        if v is not None:
            return v in self.vertices
        return any(lo - TOL <= p.offset <= hi + TOL for lo, hi in self.intervals.get(p.edge, ()))

    def issubset(self, other: "CoveredSet") -> bool:
        if not self.vertices <= other.vertices:
            return False
        for edge, ivs in self.intervals.items():
            theirs = other.intervals.get(edge, ())
            for lo, hi in ivs:
                if not any(a - TOL <= lo and hi <= b + TOL for a, b in theirs):
                    return False
        return True

    def _pieces(self) -> list[Piece]:
        pieces = []
        for edge, ivs in self.intervals.items():
            length = self.graph.edges[edge].length
            for lo, hi in ivs:
                pieces.append(Piece(edge, lo, hi, lo == 0.0, hi == length))
        return pieces

    def components(self) -> list[Component]:
        pieces = self._pieces()
        ds = DisjointSet(range(len(pieces)))
        anchor: dict[int, int] = {}
        for i, p in enumerate(pieces):
            e = self.graph.edges[p.edge]
            for attached, v in ((p.attach_lo, e.tail), (p.attach_hi, e.head)):
                if attached:
                    if v in anchor:
                        ds.merge(anchor[v], i)
                    else:
                        anchor[v] = i
        groups: dict[int, list[Piece]] = {}
        for i, p in enumerate(pieces):
            groups.setdefault(ds[i], []).append(p)
        comps = []
        for ps in groups.values():
            solid = tuple(p for p in ps if p.hi > p.lo)
            points = tuple(GraphPoint(p.edge, p.lo) for p in ps if p.hi == p.lo)
            comps.append(Component(solid, points, closed=True))
        for v in sorted(self.vertices - set(anchor)):
            comps.append(Component((), (self.graph.vertex_point(v),), closed=True))
        return comps

    def component_count(self) -> int:
        return len(self.components())

    def has_loop(self) -> bool:
        """True if fully covered edges close a cycle (the only way a closed set contains a loop)."""
        ds = DisjointSet(range(len(self.graph.vertices)))
        for edge, ivs in self.intervals.items():
            e = self.graph.edges[edge]
            if ivs == ((0.0, e.length),):
                if ds.connected(e.tail, e.head):
                    return True
                ds.merge(e.tail, e.head)
        return False

    def net(self, delta: float) -> tuple[np.ndarray, np.ndarray]:
        """Points of the set spaced at most ``delta`` apart along each interval."""
        edges, offsets = [], []
        for edge, ivs in self.intervals.items():
            for lo, hi in ivs:
                xs = np.linspace(lo, hi, max(2, math.ceil((hi - lo) / delta) + 1)) if hi > lo else [lo]
                edges.extend([edge] * len(xs))
                offsets.extend(xs)
        for v in sorted(self.vertices):
            p = self.graph.vertex_point(v)
            edges.append(p.edge)
            offsets.append(p.offset)
        return np.asarray(edges, dtype=int), np.asarray(offsets, dtype=float)

    def distance_from(self, edges: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Distance from each query point to this set (exact, not net-based)."""
        te, tx = [], []
        for edge, ivs in self.intervals.items():
            for lo, hi in ivs:
                te += [edge, edge]
                tx += [lo, hi]
        for v in self.vertices:
            p = self.graph.vertex_point(v)
            te.append(p.edge)
            tx.append(p.offset)
        if not te:
            return np.full(len(edges), np.inf)
        d = self.graph.pairwise_distances(edges, offsets, np.array(te), np.array(tx)).min(axis=1)
        for edge, ivs in self.intervals.items():
            on = edges == edge
            for lo, hi in ivs:
                d[on & (offsets >= lo) & (offsets <= hi)] = 0.0
        return d

    def __repr__(self) -> str:
        return f"CoveredSet(intervals={self.intervals}, vertices={sorted(self.vertices)})"


def _snap(lo: float, hi: float, length: float) -> tuple[float, float]:
    lo, hi = max(lo, 0.0), min(hi, length)
    if lo <= TOL:
        lo = 0.0
    if hi <= TOL:
        hi = 0.0
    if hi >= length - TOL:
        hi = length
    if lo >= length - TOL:
        lo = length
    return lo, max(lo, hi)


def measure(cs: CoveredSet) -> float:
    return cs.measure


def hausdorff(a: CoveredSet, b: CoveredSet, delta: float) -> float:
    """Hausdorff distance evaluated on ``delta``-nets of both sets (error at most delta/2)."""
    ea, xa = a.net(delta)
    eb, xb = b.net(delta)
    return float(max(b.distance_from(ea, xa).max(initial=0.0), a.distance_from(eb, xb).max(initial=0.0)))


# -- policies -------------------------------------------------------------------


@dataclass
class StageView:
    graph: MetricGraph
    time: float
    index: int
    slots: list[ArmSlot]
    covered: CoveredSet | None


class RatePolicy(Protocol):
    def __call__(self, view: StageView) -> Sequence[float]: ...


def uniform_policy(view: StageView) -> list[float]:
    m = len(view.slots)
    return [1.0 / m] * m


@dataclass
class WeightPolicy:
    """Rates proportional to fixed positive weights keyed by ``(edge, direction)``."""

    weights: Mapping[tuple[int, int], float]
    default: float = 1.0

    def __call__(self, view: StageView) -> list[float]:
        w = np.array([self.weights.get((s.edge, s.direction), self.default) for s in view.slots])
        return list(w / w.sum())

    @classmethod
    def random(cls, graph: MetricGraph, rng: np.random.Generator, low: float = 0.05) -> "WeightPolicy":
        keys = [(e.id, d) for e in graph.edges for d in (+1, -1)]
        return cls(dict(zip(keys, rng.uniform(low, 1.0, size=len(keys)))))


@dataclass
class OverridePolicy:
    """Use ``base`` except at the listed stage indices."""

    base: RatePolicy
    overrides: Mapping[int, Callable[[StageView, list[float]], Sequence[float]]]

    def __call__(self, view: StageView) -> Sequence[float]:
        rates = list(self.base(view))
        hook = self.overrides.get(view.index)
        return hook(view, rates) if hook else rates


def park_first_arm(view: StageView, rates: list[float]) -> list[float]:
    """Override hook: freeze arm 0 for the stage and renormalize the rest."""
    rates = list(rates)
    rates[0] = 0.0
    s = sum(rates)
    return [r / s for r in rates] if s > 0 else rates


# -- floodings ------------------------------------------------------------------


@dataclass(frozen=True)
class Flooding:
    graph: MetricGraph | None
    sources: tuple[GraphPoint, ...]
    stages: tuple[Stage, ...]

    @property
    def K(self) -> int:
        return len(self.stages)

    @property
    def end_time(self) -> float:
        return self.stages[-1].t_end if self.stages else 0.0

    @property
    def times(self) -> list[float]:
        return [0.0] + [s.t_end for s in self.stages]

    def _require_graph(self) -> MetricGraph:
        if self.graph is None:
            raise GraphMismatch("flooding has no graph attached")
        return self.graph

    def covered_at(self, t: float) -> CoveredSet:
        g = self._require_graph()
        if not (-TOL <= t <= self.end_time + 1e-7):
            raise TimeOutOfRange(f"t={t} outside [0, {self.end_time}]")
        segments = []
        for stage in self.stages:
            if stage.t_start >= t:
                break
            elapsed = min(t, stage.t_end) - stage.t_start
            for arm in stage.arms:
                if arm.rate > 0:
                    segments.append((arm.edge, arm.offset, arm.position(elapsed)))
        return CoveredSet.from_points(g, self.sources).with_segments(segments)

    def stage_index(self, t: float) -> int:
        """Index of the stage active at ``t``; at a boundary, the stage that starts there."""
        if not (-TOL <= t < self.end_time - TOL):
            raise TimeOutOfRange(f"t={t} outside [0, {self.end_time})")
        starts = [s.t_start for s in self.stages]
        return max(0, bisect.bisect_right(starts, t + TOL) - 1)

    def boundary_arms(self, t: float) -> list[tuple[GraphPoint, int]]:
        stage = self.stages[self.stage_index(t)]
        elapsed = max(0.0, t - stage.t_start)
        return [(GraphPoint(a.edge, a.position(elapsed)), a.direction) for a in stage.arms]


def covered_at(f: Flooding, t: float) -> CoveredSet:
    return f.covered_at(t)


def boundary_arms(f: Flooding, t: float) -> list[tuple[GraphPoint, int]]:
    return f.boundary_arms(t)


def _check_rates(rates: Sequence[float], m: int) -> np.ndarray:
    z = np.asarray(rates, dtype=float)
    if z.shape != (m,) or not np.all(np.isfinite(z)):
        raise BadPolicy(f"policy returned {len(z)} rates for {m} arms")
    if np.any(z < -RATE_TOL):
        raise BadPolicy(f"negative rate {z.min()}")
    z = np.clip(z, 0.0, None)
    if abs(z.sum() - 1.0) > RATE_TOL:
        raise BadPolicy(f"rates sum to {z.sum()!r}, not 1")
    return z


def simulate(graph: MetricGraph, sources: Sequence[GraphPoint], policy: RatePolicy) -> Flooding:
    """Run a flooding to completion with exact event times."""
    sources = tuple(graph.canonical(p) for p in sources)
    if not sources:
        raise CoincidentPoints("at least one source is required")
    for i, p in enumerate(sources):
        for q in sources[:i]:
            if graph.same_point(p, q):
                raise CoincidentPoints(f"sources {q} and {p} coincide")
    covered = CoveredSet.from_points(graph, sources)
    stages: list[Stage] = []
    t = 0.0
    max_stages = 4 * (len(graph.vertices) + len(graph.edges) + len(sources)) + 8
    while True:
        gaps = covered.gaps()
        if not gaps:
            break
        slots, ends = [], []
        for gap in gaps:
            left = right = None
            if gap.lo_covered:
                left = len(slots)
                slots.append(ArmSlot(gap.edge, gap.lo, +1))
            if gap.hi_covered:
                right = len(slots)
                slots.append(ArmSlot(gap.edge, gap.hi, -1))
            ends.append((left, right))
        if not slots:
            raise StallDetected("uncovered region with no boundary arms")
        z = _check_rates(policy(StageView(graph, t, len(stages), slots, covered)), len(slots))
        dt = math.inf
        for gap, (left, right) in zip(gaps, ends):
            speed = float((z[left] if left is not None else 0.0) + (z[right] if right is not None else 0.0))
            if speed > 0:
                dt = min(dt, (gap.hi - gap.lo) / speed)
        if not math.isfinite(dt):
            raise StallDetected(f"all arms bordering uncovered gaps have rate 0 at t={t}")
        arms = tuple(Arm(s.edge, s.offset, s.direction, float(r)) for s, r in zip(slots, z))
        covered = covered.with_segments(
            (a.edge, a.offset, a.position(dt)) for a in arms if a.rate > 0
        )
        stages.append(Stage(t, t + dt, arms))
        t += dt
        if len(stages) > max_stages:
            raise StallDetected(f"more than {max_stages} stages; event handling is not converging")
    return Flooding(graph, sources, tuple(stages))


def same_graph(a: MetricGraph, b: MetricGraph) -> bool:
    return a is b or (a.vertices == b.vertices and a.edges == b.edges)


def flooding_distance(f: Flooding, g: Flooding, delta: float | None = None) -> float:
    """Sup over a time grid of the Hausdorff distance between ``f(t)`` and ``g(t)``.

    With grid spacing and net spacing ``delta`` (default zeta/1000) the error is
    at most ``2 * delta`` because both floodings are 1-Lipschitz in time.
    """
    graph = f._require_graph()
    if g.graph is None or not same_graph(graph, g.graph):
        raise GraphMismatch("floodings live on different graphs")
    zeta = graph.total_length
    delta = zeta / 1000 if delta is None else delta
    end = min(f.end_time, g.end_time)
    grid = np.append(np.arange(0.0, end, delta), end)
    return max(hausdorff(f.covered_at(t), g.covered_at(t), delta) for t in grid)


# -- structure ------------------------------------------------------------------


@dataclass
class StructureReport:
    arm_counts: list[int]
    component_counts: list[int]  # at each stage midpoint
    has_loop: list[bool]  # at each stage midpoint
    dormant_arms: list[tuple[int, int]]  # (stage index, arm index)
    early_leaves: list[tuple[int, float]] = field(default_factory=list)  # (vertex, time), before the end


def structure_checks(f: Flooding) -> StructureReport:
    g = f._require_graph()
    counts, loops, dormant = [], [], []
    for k, stage in enumerate(f.stages):
        cs = f.covered_at(0.5 * (stage.t_start + stage.t_end))
        counts.append(cs.component_count())
        loops.append(cs.has_loop())
        if k == 0:
            continue
        previous = f.stages[k - 1].arms
        for j, arm in enumerate(stage.arms):
            if arm.rate > 0 and any(g.same_point(arm.anchor, b.anchor) for b in previous):
                dormant.append((k, j))
    leaves = {v for v in range(len(g.vertices)) if g.degree(v) == 1}
    early: dict[int, float] = {}
    for t in f.times[:-1]:
        for v in f.covered_at(t).vertices & leaves:
            early.setdefault(v, t)
    return StructureReport(
        arm_counts=[len(s.arms) for s in f.stages],
        component_counts=counts,
        has_loop=loops,
        dormant_arms=dormant,
        early_leaves=sorted(early.items()),
    )


# -- trace format ---------------------------------------------------------------


def to_trace(f: Flooding) -> str:
    lines = ["# sources " + " ".join(f"{p.edge}:{p.offset!r}" for p in f.sources)]
    for k, stage in enumerate(f.stages, start=1):
        lines.append(f"stage {k} {stage.t_start!r} {stage.t_end!r}")
        lines.extend(f"{a.edge} {a.offset!r} {a.direction:+d} {a.rate!r}" for a in stage.arms)
    return "\n".join(lines) + "\n"


def read_trace(text: str, graph: MetricGraph | None = None) -> Flooding:
    """Parse a trace; rates must sum to one in every stage."""
    from .errors import ParseError

    sources: list[GraphPoint] = []
    stages: list[Stage] = []
    current: tuple[float, float] | None = None
    arms: list[Arm] = []

    def close(lineno: int) -> None:
        if current is None:
            return
        if current[1] <= current[0]:
            raise ParseError(f"line {lineno}: stage has nonpositive duration")
        _check_rates([a.rate for a in arms], len(arms))
        stages.append(Stage(current[0], current[1], tuple(arms)))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("# sources"):
            for tok in line.split()[2:]:
                e, x = tok.split(":")
                sources.append(GraphPoint(int(e), float(x)))
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields_ = line.split()
        try:
            if fields_[0] == "stage":
                close(lineno)
                current, arms = (float(fields_[2]), float(fields_[3])), []
            elif len(fields_) == 4 and current is not None:
                arms.append(Arm(int(fields_[0]), float(fields_[1]), int(fields_[2]), float(fields_[3])))
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise ParseError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
    close(len(text.splitlines()))
    if not stages:
        raise ParseError("trace has no stages")
    return Flooding(graph, tuple(sources), tuple(stages))
