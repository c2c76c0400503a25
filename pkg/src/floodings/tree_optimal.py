"""Entropy-maximal floodings on metric trees.

With one source the optimum starts at the centroid and gives every arm a
rate proportional to the length still waiting beyond it.  With several
sources the tree is cut into parts, each part is flooded from its own
centroid, and the cut positions are searched numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .entropy import beta, territories
from .errors import BadPolicy, DisconnectedGraph, InfeasibleM, NotATree
from .flooding import Flooding, StageView, simulate, structure_checks
from .metric_graph import (
    HEAD,
    TAIL,
    TOL,
    Component,
    GraphPoint,
    MetricGraph,
    Restriction,
    split_edges,
)

GOLDEN = (math.sqrt(5) - 1) / 2
CUT_TOL = 1e-7
BOUNDARY_TOL = 1e-6
RATE_CHECK_TOL = 1e-6  # optimizer cuts are accurate to ~1e-7 in offset


def centroid(tree: MetricGraph) -> GraphPoint:
    """The unique point whose removal leaves parts of length at most half the total."""
    tree.require_tree()
    half = tree.total_length / 2
    for v in range(len(tree.vertices)):
        heaviest = max(
            tree.edges[e].length + tree.beyond(e, HEAD if end == TAIL else TAIL)
            for e, end in tree.incident[v]
        )
        if heaviest <= half + TOL:
            return tree.vertex_point(v)
    for e in tree.edges:
        x = half - tree.beyond(e.id, TAIL)
        if TOL < x < e.length - TOL:
            return GraphPoint(e.id, x)
    raise AssertionError("no centroid found")  # pragma: no cover


def discrete_centroids(adjacency: Sequence[Sequence[int]]) -> set[int]:
    """Vertices of a combinatorial tree whose removal leaves parts of at most N/2 vertices."""
    n = len(adjacency)
    if sum(len(a) for a in adjacency) != 2 * (n - 1):
        raise NotATree("adjacency does not describe a tree")
    parent, order, stack = [-1] * n, [], [0]
    seen = [False] * n
    seen[0] = True
    while stack:
        v = stack.pop()
        order.append(v)
        for u in adjacency[v]:
            if not seen[u]:
                seen[u] = True
                parent[u] = v
                stack.append(u)
    size = [1] * n
    for v in reversed(order):
        if parent[v] >= 0:
            size[parent[v]] += size[v]
    out = set()
    for v in range(n):
        parts = [size[u] for u in adjacency[v] if parent[u] == v]
        if parent[v] >= 0:
            parts.append(n - size[v])
        if max(parts, default=0) * 2 <= n:
            out.add(v)
    return out


class ProportionalPolicy:
    """Each arm's rate is proportional to the length beyond it inside its territory.

    Without territories the whole tree is one territory, which is the
    single-source rule.  The length beyond an arm is measured geometrically;
    for floodings generated by this policy it is exactly the uncovered length
    ahead of the arm.
    """

    def __init__(self, tree: MetricGraph, territories: Sequence[Component] | None = None):
        tree.require_tree()
        self.tree = tree
        self.restrictions = [Restriction.build(tree, c) for c in territories] if territories else None

    def mass(self, edge: int, offset: float, direction: int) -> float:
        if self.restrictions is None:
            return self.tree.branch_mass(edge, offset, direction)
        for r in self.restrictions:
            loc = r.to_local(edge, offset, direction)
            if loc is not None:
                return r.graph.branch_mass(loc.edge, loc.offset, direction)
        return 0.0

    def __call__(self, view: StageView) -> list[float]:
        masses = np.array([max(self.mass(s.edge, s.offset, s.direction), 0.0) for s in view.slots])
        if masses.sum() <= 0:
            raise BadPolicy("no arm has any length left beyond it")
        return list(masses / masses.sum())


def proportional_rate_policy(tree: MetricGraph, territories: Sequence[Component] | None = None) -> ProportionalPolicy:
    return ProportionalPolicy(tree, territories)


def _xlogx_minus_x(u: float) -> float:
    return u * math.log(u) - u if u > 0 else 0.0


def integral_log_side_mass(tree: MetricGraph, v: GraphPoint) -> float:
    """Integral over the tree of log(side_mass(v, y)) dy, evaluated edge by edge."""
    tree.require_tree()
    F = _xlogx_minus_x
    vert = [tree.vertex_point(u) for u in range(len(tree.vertices))]
    dist = tree.pairwise_distances(
        [v.edge], [v.offset], [p.edge for p in vert], [p.offset for p in vert]
    )[0]
    parts = []
    for e in tree.edges:
        o = tree.offset_on(v, e.id)
        if o is not None and TOL < o < e.length - TOL:
            wt, wh = tree.beyond(e.id, TAIL), tree.beyond(e.id, HEAD)
            parts += [F(wt + o) - F(wt), F(wh + e.length - o) - F(wh)]
            continue
        if o is not None:
            far = HEAD if o <= TOL else TAIL
        else:
            far = HEAD if dist[e.head] > dist[e.tail] else TAIL
        w = tree.beyond(e.id, far)
        parts.append(F(w + e.length) - F(w))
    return math.fsum(parts)


def beta_star_single(tree: MetricGraph, v: GraphPoint) -> float:
    """Largest entropy of a one-source flooding started at ``v``."""
    zeta = tree.total_length
    return -zeta + zeta * math.log(zeta) - integral_log_side_mass(tree, v)


# -- multi-source partitions ----------------------------------------------------


@dataclass
class PartitionPlan:
    cuts: list[tuple[int, float]]  # (edge, offset); offset 0 or length marks a vertex cut
    components: list[Component]
    sources: list[GraphPoint]
    objective: float
    part_betas: list[float] = field(default_factory=list)
    boundary_cut: bool = False
    ties: int = 1


@dataclass
class OptimalFlooding:
    flooding: Flooding
    plan: PartitionPlan
    beta_star: float


def partition_value(tree: MetricGraph, cuts: Sequence[tuple[int, float]], M: int):
    """Objective of a cut configuration, or None if it does not give M parts.

    The value is the cross-part entropy of the lengths plus each part's
    single-source optimum at its centroid.
    """
    comps = split_edges(tree, cuts)
    if len(comps) != M:
        return None
    zeta = tree.total_length
    lengths, sources, betas = [], [], []
    for comp in comps:
        r = Restriction.build(tree, comp)
        c = centroid(r.graph)
        lengths.append(r.graph.total_length)
        betas.append(beta_star_single(r.graph, c))
        sources.append(r.to_parent(c))
    value = zeta * math.log(zeta) - math.fsum(l * math.log(l) for l in lengths) + math.fsum(betas)
    return value, comps, sources, betas


def _golden_max(fn, a: float, b: float, tol: float) -> tuple[float, float]:
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    return (c, fc) if fc >= fd else (d, fd)


def maximize_1d(fn, lo: float, hi: float, grid: int = 20, tol: float = CUT_TOL) -> tuple[float, float]:
    """Coarse grid seeding followed by golden-section refinement around the best grid point."""
    if hi - lo <= tol:
        x = 0.5 * (lo + hi)
        return x, fn(x)
    xs = np.linspace(lo, hi, grid)
    vals = [fn(x) for x in xs]
    i = int(np.argmax(vals))
    x, v = _golden_max(fn, xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)], tol)
    return (float(x), v) if v > vals[i] else (float(xs[i]), vals[i])


def _search_combo(tree: MetricGraph, combo: tuple[int, ...], M: int) -> tuple[float, list[tuple[int, float]]]:
    def best_from(level: int, fixed: list[tuple[int, float]]) -> tuple[float, list[tuple[int, float]]]:
        if level == len(combo):
            res = partition_value(tree, fixed, M)
            return (-math.inf if res is None else res[0]), fixed
        edge = combo[level]
        lo = fixed[-1][1] if level > 0 and combo[level - 1] == edge else 0.0
        hi = tree.edges[edge].length
        x, _ = maximize_1d(lambda x: best_from(level + 1, fixed + [(edge, x)])[0], lo, hi)
        return best_from(level + 1, fixed + [(edge, x)])

    return best_from(0, [])


def _snap_cuts(tree: MetricGraph, cuts: list[tuple[int, float]]) -> tuple[list[tuple[int, float]], bool]:
    out, boundary = [], False
    for edge, x in cuts:
        length = tree.edges[edge].length
        if x < BOUNDARY_TOL:
            x, boundary = 0.0, True
        elif x > length - BOUNDARY_TOL:
            x, boundary = length, True
        out.append((edge, x))
    return out, boundary


def optimal_partition(tree: MetricGraph, M: int) -> PartitionPlan:
    tree.require_tree()
    if M < 1:
        raise InfeasibleM(f"M must be positive, got {M}")
    if M == 1:
        c = centroid(tree)
        b = beta_star_single(tree, c)
        whole = split_edges(tree, [])
        return PartitionPlan([], whole, [c], b, [b])
    results = []
    for combo in combinations_with_replacement(range(len(tree.edges)), M - 1):
        value, cuts = _search_combo(tree, combo, M)
        if math.isfinite(value):
            results.append((value, cuts))
    if not results:
        raise InfeasibleM(f"no cut configuration splits the tree into {M} parts")
    top = max(v for v, _ in results)
    ties = sum(1 for v, _ in results if v >= top - 1e-9)
    # first combination (lexicographic) within noise of the maximum wins
    value, cuts = next((v, c) for v, c in results if v >= top - 1e-10)
    cuts, boundary = _snap_cuts(tree, cuts)
    res = partition_value(tree, cuts, M)
    if res is None or res[0] < value - 1e-9:
        cuts, boundary = next((c for v, c in results if v >= top - 1e-10)), False
        res = partition_value(tree, cuts, M)
    value, comps, sources, betas = res
    return PartitionPlan(cuts, comps, sources, value, betas, boundary, ties)


def optimal_flooding(tree: MetricGraph, M: int = 1) -> OptimalFlooding:
    """Best flooding with M sources found by the partition search (exact for M=1)."""
    plan = optimal_partition(tree, M)
    policy = ProportionalPolicy(tree, plan.components if M > 1 else None)
    f = simulate(tree, plan.sources, policy)
    return OptimalFlooding(f, plan, plan.objective)


# -- optimality checklist -------------------------------------------------------


@dataclass
class CheckResult:
    passed: bool
    witness: str = ""


@dataclass
class OptimalityReport:
    checks: dict[str, CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]


def _first(items, fmt) -> CheckResult:
    items = list(items)
    return CheckResult(not items, fmt(items[0]) if items else "")


def verify_optimality_properties(f: Flooding, M: int) -> OptimalityReport:
    """Check the structural properties every optimal M-source tree flooding has."""
    g = f._require_graph()
    rep = structure_checks(f)
    m = rep.arm_counts
    checks: dict[str, CheckResult] = {}
    checks["arm_count_nondecreasing"] = _first(
        (k for k in range(len(m) - 1) if m[k + 1] < m[k]),
        lambda k: f"stage {k + 1} has {m[k + 1]} arms after {m[k]}",
    )
    checks["no_dormant_arms"] = _first(rep.dormant_arms, lambda w: f"stage {w[0]} arm {w[1]} resumes")
    checks["no_leaf_before_end"] = _first(rep.early_leaves, lambda w: f"leaf {g.vertices[w[0]]} covered at t={w[1]:.6g}")
    bad = [(k, c) for k, c in enumerate(rep.component_counts) if c != M]
    if len(f.sources) != M:
        bad.insert(0, (-1, len(f.sources)))
    checks["exactly_M_components"] = _first(bad, lambda w: f"stage {w[0]} has {w[1]} components")
    checks["no_loops"] = _first((k for k, h in enumerate(rep.has_loop) if h), lambda k: f"loop in stage {k}")
    if not g.is_tree:
        return OptimalityReport(checks)

    off_centroid = []
    for k, s in enumerate(f.stages):
        for comp in f.covered_at(0.5 * (s.t_start + s.t_end)).components():
            if comp.length <= TOL:
                continue
            inside = [p for p in f.sources if comp.contains(g, p)]
            if len(inside) != 1:
                off_centroid.append((k, f"{len(inside)} sources in one component"))
                continue
            r = Restriction.build(g, comp)
            c = r.to_parent(centroid(r.graph))
            if g.distance(c, inside[0]) > 1e-7 * max(1.0, g.total_length):
                off_centroid.append((k, f"source {inside[0]} but centroid {c}"))
    checks["sources_are_centroids"] = _first(off_centroid, lambda w: f"stage {w[0]}: {w[1]}")

    try:
        policy = ProportionalPolicy(g, territories(f))
    except DisconnectedGraph:
        checks["rates_proportional"] = CheckResult(False, "source territories are not connected")
        checks["equal_meeting_speeds"] = checks["constant_rate_along_edge"] = CheckResult(True)
        return OptimalityReport(checks)
    wrong_rates = []
    for k, s in enumerate(f.stages):
        half = 0.5 * s.duration
        masses = np.array([policy.mass(a.edge, a.position(half), a.direction) for a in s.arms])
        z = s.rates
        if masses.sum() <= 0:
            continue
        gap = np.abs(z / z.sum() - masses / masses.sum())
        if gap.max() > RATE_CHECK_TOL:
            j = int(gap.argmax())
            wrong_rates.append((k, j, z[j], masses[j] / masses.sum()))
    checks["rates_proportional"] = _first(
        wrong_rates, lambda w: f"stage {w[0]} arm {w[1]} rate {w[2]:.6g}, expected {w[3]:.6g}"
    )

    unequal = []
    last = f.stages[-1]
    for a in last.arms:
        for b in last.arms:
            if a.edge == b.edge and a.direction > 0 > b.direction and a.offset < b.offset:
                if abs(a.position(last.duration) - b.position(last.duration)) <= 1e-7 and abs(a.rate - b.rate) > RATE_CHECK_TOL:
                    unequal.append((a, b))
    checks["equal_meeting_speeds"] = _first(unequal, lambda w: f"arms meet with rates {w[0].rate:.6g} and {w[1].rate:.6g}")

    jumps = []
    for k in range(len(f.stages) - 1):
        s, nxt = f.stages[k], f.stages[k + 1]
        for a in s.arms:
            end = a.position(s.duration)
            for b in nxt.arms:
                if b.edge == a.edge and b.direction == a.direction and abs(b.offset - end) <= 1e-7:
                    if abs(a.rate - b.rate) > RATE_CHECK_TOL and a.rate > 0:
                        jumps.append((k, a.rate, b.rate))
    checks["constant_rate_along_edge"] = _first(jumps, lambda w: f"stage {w[0]}: rate {w[1]:.6g} -> {w[2]:.6g}")
    return OptimalityReport(checks)


def beta_of(f: Flooding) -> float:
    return beta(f).beta
