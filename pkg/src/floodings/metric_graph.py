"""Finite metric graphs, points on them, distances and subdivisions.

A metric graph is a simple connected graph whose edges are closed intervals
glued at shared vertices.  Points are addressed as ``(edge, offset)`` where
the offset is measured from the edge's tail.  A point with offset ``0`` or
``length`` is a vertex; its canonical form uses the incident edge with the
smallest id.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.cluster.hierarchy import DisjointSet
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import (
    DisconnectedGraph,
    EmptyGraph,
    InvalidPoint,
    NonpositiveLength,
    NotATree,
    ParallelEdge,
    ParseError,
    SelfLoop,
)

TOL = 1e-9
TAIL, HEAD = 0, 1


@dataclass(frozen=True, order=True)
class GraphPoint:
    """A location ``offset`` along ``edge``, measured from the edge's tail.

    Instances are not canonicalized on construction; use
    :meth:`MetricGraph.point` or :meth:`MetricGraph.canonical` for that.
    """

    edge: int
    offset: float


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    length: float


class MetricGraph:
    """Immutable simple connected metric graph."""

    def __init__(self, vertices: Sequence[Hashable], edges: Sequence[Edge]):
        self.vertices = list(vertices)
        self.edges = list(edges)
        self.index = {name: i for i, name in enumerate(self.vertices)}
        self.incident: list[list[tuple[int, int]]] = [[] for _ in self.vertices]
        for e in self.edges:
            self.incident[e.tail].append((e.id, TAIL))
            self.incident[e.head].append((e.id, HEAD))
        self.lengths = np.array([e.length for e in self.edges], dtype=float)
        self.tails = np.array([e.tail for e in self.edges], dtype=int)
        self.heads = np.array([e.head for e in self.edges], dtype=int)
        self.total_length = math.fsum(e.length for e in self.edges)

    def __repr__(self) -> str:
        return f"MetricGraph(|V|={len(self.vertices)}, |E|={len(self.edges)}, zeta={self.total_length:g})"

    @property
    def zeta(self) -> float:
        return self.total_length

    @property
    def is_tree(self) -> bool:
        return len(self.edges) == len(self.vertices) - 1

    def require_tree(self) -> None:
        if not self.is_tree:
            raise NotATree(f"graph has {len(self.edges)} edges and {len(self.vertices)} vertices")

    def degree(self, v: int) -> int:
        return len(self.incident[v])

    def endpoint(self, edge: int, end: int) -> int:
        e = self.edges[edge]
        return e.tail if end == TAIL else e.head

    def other_end(self, edge: int, v: int) -> int:
        e = self.edges[edge]
        return e.head if e.tail == v else e.tail

    # -- points ---------------------------------------------------------

    def point(self, edge: int, offset: float) -> GraphPoint:
        """Validated, canonical point."""
        return self.canonical(GraphPoint(edge, offset))

    def vertex_point(self, v: int) -> GraphPoint:
        edge, end = min(self.incident[v])
        return GraphPoint(edge, 0.0 if end == TAIL else self.edges[edge].length)

    def vertex_at(self, p: GraphPoint) -> int | None:
        """Vertex index if ``p`` sits on a vertex, else None."""
        length = self._check(p)
        if p.offset <= TOL:
            return self.edges[p.edge].tail
        if p.offset >= length - TOL:
            return self.edges[p.edge].head
        return None

    def canonical(self, p: GraphPoint) -> GraphPoint:
        v = self.vertex_at(p)
        if v is not None:
            return self.vertex_point(v)
        return GraphPoint(p.edge, float(p.offset))

    def same_point(self, p: GraphPoint, q: GraphPoint) -> bool:
        p, q = self.canonical(p), self.canonical(q)
        return p.edge == q.edge and abs(p.offset - q.offset) <= TOL

    def offset_on(self, p: GraphPoint, edge: int) -> float | None:
        """Offset of ``p`` along ``edge`` if ``p`` lies on that closed edge."""
        if p.edge == edge:
            return p.offset
        v = self.vertex_at(p)
        if v is None:
            return None
        e = self.edges[edge]
        if v == e.tail:
            return 0.0
        if v == e.head:
            return e.length
        return None

    def _check(self, p: GraphPoint) -> float:
        if not 0 <= p.edge < len(self.edges):
            raise InvalidPoint(f"edge {p.edge} does not exist")
        length = self.edges[p.edge].length
        if not (-TOL <= p.offset <= length + TOL) or not math.isfinite(p.offset):
            raise InvalidPoint(f"offset {p.offset} outside [0, {length}] on edge {p.edge}")
        return length

    # -- distances ------------------------------------------------------

    @cached_property
    def vertex_distances(self) -> np.ndarray:
        n = len(self.vertices)
        rows = np.concatenate([self.tails, self.heads])
        cols = np.concatenate([self.heads, self.tails])
        data = np.concatenate([self.lengths, self.lengths])
        adj = csr_matrix((data, (rows, cols)), shape=(n, n))
        return shortest_path(adj, method="D", directed=False)

    def distance(self, p: GraphPoint, q: GraphPoint) -> float:
        self._check(p)
        self._check(q)
        d = self.pairwise_distances(
            np.array([p.edge]), np.array([p.offset]), np.array([q.edge]), np.array([q.offset])
        )
        return float(d[0, 0])

    def pairwise_distances(self, e1, x1, e2, x2) -> np.ndarray:
        """Distance matrix between points ``(e1[i], x1[i])`` and ``(e2[j], x2[j])``.

        Routes leave each point through one of its two edge endpoints; for two
        points on the same edge the direct route ``|x - y|`` is also admitted.
        """
        e1, e2 = np.asarray(e1, dtype=int), np.asarray(e2, dtype=int)
        x1 = np.asarray(x1, dtype=float)[:, None]
        x2 = np.asarray(x2, dtype=float)[None, :]
        L1 = self.lengths[e1][:, None]
        L2 = self.lengths[e2][None, :]
        D = self.vertex_distances
        t1, h1, t2, h2 = self.tails[e1], self.heads[e1], self.tails[e2], self.heads[e2]
        best = x1 + D[np.ix_(t1, t2)] + x2
        best = np.minimum(best, x1 + D[np.ix_(t1, h2)] + (L2 - x2))
        best = np.minimum(best, (L1 - x1) + D[np.ix_(h1, t2)] + x2)
        best = np.minimum(best, (L1 - x1) + D[np.ix_(h1, h2)] + (L2 - x2))
        same = e1[:, None] == e2[None, :]
        return np.where(same, np.minimum(best, np.abs(x1 - x2)), best)

    # -- tree masses ----------------------------------------------------

    @cached_property
    def _down_mass(self) -> tuple[np.ndarray, np.ndarray]:
        """Rooted at vertex 0: mass below each vertex and each vertex's parent edge."""
        self.require_tree()
        n = len(self.vertices)
        parent_edge = np.full(n, -1, dtype=int)
        order, seen, stack = [], [False] * n, [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            order.append(v)
            for edge, _ in self.incident[v]:
                u = self.other_end(edge, v)
                if not seen[u]:
                    seen[u] = True
                    parent_edge[u] = edge
                    stack.append(u)
        down = np.zeros(n)
        for v in reversed(order):
            pe = parent_edge[v]
            if pe >= 0:
                down[self.other_end(pe, v)] += down[v] + self.edges[pe].length
        return down, parent_edge

    def beyond(self, edge: int, end: int) -> float:
        """Length of the tree on the far side of ``edge``'s ``end`` vertex, excluding the edge."""
        down, parent_edge = self._down_mass
        v = self.endpoint(edge, end)
        if parent_edge[v] == edge:
            return float(down[v])
        child = self.other_end(edge, v)
        return self.total_length - self.edges[edge].length - float(down[child])

    def branch_mass(self, edge: int, offset: float, direction: int) -> float:
        """Length reached from ``(edge, offset)`` when leaving in ``direction`` (tree only)."""
        length = self.edges[edge].length
        if direction > 0:
            return (length - offset) + self.beyond(edge, HEAD)
        return offset + self.beyond(edge, TAIL)

    def side_mass(self, v: GraphPoint, y: GraphPoint) -> float:
        """Total length of points whose geodesic from ``v`` passes through ``y``."""
        self.require_tree()
        if self.same_point(v, y):
            return self.total_length
        w = self.vertex_at(y)
        if w is None:
            e = self.edges[y.edge]
            off = self.offset_on(v, y.edge)
            if off is not None:
                return self.branch_mass(y.edge, y.offset, +1 if off < y.offset else -1)
            to_tail = self.distance(v, self.vertex_point(e.tail)) + y.offset
            to_head = self.distance(v, self.vertex_point(e.head)) + (e.length - y.offset)
            return self.branch_mass(y.edge, y.offset, +1 if to_tail <= to_head else -1)
        # y is a vertex: subtract the branch at w that contains v
        dvw = self.distance(v, y)
        for edge, end in self.incident[w]:
            length = self.edges[edge].length
            if self.offset_on(v, edge) is not None:
                branch = edge
            else:
                u = self.other_end(edge, w)
                if abs(self.distance(v, self.vertex_point(u)) + length - dvw) > 1e-7:
                    continue
                branch = edge
            far_end = HEAD if end == TAIL else TAIL
            return self.total_length - (length + self.beyond(branch, far_end))
        raise InvalidPoint("could not locate the branch containing v")  # pragma: no cover


def build_graph(edge_list: Iterable[tuple[Hashable, Hashable, float]]) -> MetricGraph:
    """Validate an edge list ``(u, v, length)`` and build the graph.

    Vertex ids are kept in first-appearance order; edge ids follow input order.
    """
    names: list[Hashable] = []
    index: dict[Hashable, int] = {}
    edges: list[Edge] = []
    seen_pairs: set[frozenset] = set()
    for u, v, length in edge_list:
        length = float(length)
        if u == v:
            raise SelfLoop(f"self-loop at vertex {u}")
        if not (length > 0) or not math.isfinite(length):
            raise NonpositiveLength(f"edge {u}-{v} has length {length}")
        pair = frozenset((u, v))
        if pair in seen_pairs:
            raise ParallelEdge(f"parallel edge {u}-{v}")
        seen_pairs.add(pair)
        for name in (u, v):
            if name not in index:
                index[name] = len(names)
                names.append(name)
        edges.append(Edge(len(edges), index[u], index[v], length))
    if not edges:
        raise EmptyGraph("graph has no edges")
    ds = DisjointSet(range(len(names)))
    for e in edges:
        ds.merge(e.tail, e.head)
    if ds.n_subsets != 1:
        raise DisconnectedGraph(f"graph has {ds.n_subsets} connected components")
    return MetricGraph(names, edges)


def parse_graph(text: str) -> MetricGraph:
    """Parse ``u v length`` lines; ``#`` starts a comment."""
    edge_list = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"line {lineno}: expected 'u v length', got {raw.strip()!r}")
        try:
            length = float(fields[2])
        except ValueError:
            raise ParseError(f"line {lineno}: bad length {fields[2]!r}") from None
        edge_list.append((fields[0], fields[1], length))
    return build_graph(edge_list)


def load_graph(path) -> MetricGraph:
    with open(path) as fh:
        return parse_graph(fh.read())


def format_graph(g: MetricGraph) -> str:
    return "".join(
        f"{g.vertices[e.tail]} {g.vertices[e.head]} {e.length!r}\n" for e in g.edges
    )


def distance(g: MetricGraph, p: GraphPoint, q: GraphPoint) -> float:
    return g.distance(p, q)


def side_mass(g: MetricGraph, v: GraphPoint, y: GraphPoint) -> float:
    return g.side_mass(v, y)


# -- regions ----------------------------------------------------------------


@dataclass(frozen=True)
class Piece:
    """Sub-interval ``[lo, hi]`` of an edge.

    ``attach_lo``/``attach_hi`` say whether the piece is glued to the edge's
    tail/head vertex at that end (only meaningful when ``lo == 0`` or
    ``hi == length``).
    """

    edge: int
    lo: float
    hi: float
    attach_lo: bool
    attach_hi: bool

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Component:
    """A connected region of S given as edge pieces.

    ``closed`` components contain their free piece ends (covered sets,
    partition parts); open ones (complements of a cut) do not.
    """

    pieces: tuple[Piece, ...]
    points: tuple[GraphPoint, ...] = ()
    closed: bool = True

    @property
    def length(self) -> float:
        return math.fsum(p.length for p in self.pieces)

    def intervals(self) -> dict[int, list[tuple[float, float]]]:
        out: dict[int, list[tuple[float, float]]] = {}
        for p in sorted(self.pieces, key=lambda p: (p.edge, p.lo)):
            out.setdefault(p.edge, []).append((p.lo, p.hi))
        return out

    def contains(self, g: MetricGraph, p: GraphPoint) -> bool:
        v = g.vertex_at(p)
        if any(g.same_point(p, q) for q in self.points):
            return True
        for piece in self.pieces:
            e = g.edges[piece.edge]
            if v is not None:
                if v == e.tail and piece.lo <= TOL and (piece.attach_lo or self.closed):
                    return True
                if v == e.head and piece.hi >= e.length - TOL and (piece.attach_hi or self.closed):
                    return True
                continue
            if piece.edge != p.edge:
                continue
            if piece.lo + TOL < p.offset < piece.hi - TOL:
                return True
            if self.closed and piece.lo - TOL <= p.offset <= piece.hi + TOL:
                return True
        return False

    def restrict(self, g: MetricGraph) -> "Restriction":
        return Restriction.build(g, self)


@dataclass
class Restriction:
    """A component rebuilt as a standalone metric graph.

    Sub-edge ``i`` is ``pieces[i]`` with the parent's orientation, so local
    offsets are parent offsets minus ``piece.lo``.
    """

    parent: MetricGraph
    graph: MetricGraph
    pieces: list[Piece]

    @classmethod
    def build(cls, g: MetricGraph, comp: Component) -> "Restriction":
        pieces = [p for p in comp.pieces if p.length > TOL]
        edge_list = []
        for i, p in enumerate(pieces):
            e = g.edges[p.edge]
            a = ("v", e.tail) if p.lo <= TOL and p.attach_lo else ("free", i, 0)
            b = ("v", e.head) if p.hi >= e.length - TOL and p.attach_hi else ("free", i, 1)
            edge_list.append((a, b, p.length))
        return cls(g, build_graph(edge_list), pieces)

    def to_parent(self, p: GraphPoint) -> GraphPoint:
        piece = self.pieces[p.edge]
        return self.parent.point(piece.edge, piece.lo + p.offset)

    def to_local(self, edge: int, offset: float, direction: int = 0) -> GraphPoint | None:
        """Map a parent location (optionally an arm leaving in ``direction``)."""
        g = self.parent
        length = g.edges[edge].length
        for i, p in enumerate(self.pieces):
            if p.edge != edge or not (p.lo - TOL <= offset <= p.hi + TOL):
                continue
            if direction > 0 and offset >= p.hi - TOL:
                continue
            if direction < 0 and offset <= p.lo + TOL:
                continue
            if offset <= TOL and direction >= 0 and not p.attach_lo:
                continue
            if offset >= length - TOL and direction <= 0 and not p.attach_hi:
                continue
            return GraphPoint(i, min(max(offset - p.lo, 0.0), p.length))
        if direction == 0:
            v = g.vertex_at(GraphPoint(edge, offset))
            if v is not None:
                for i, p in enumerate(self.pieces):
                    e = g.edges[p.edge]
                    if e.tail == v and p.lo <= TOL and p.attach_lo:
                        return GraphPoint(i, 0.0)
                    if e.head == v and p.hi >= e.length - TOL and p.attach_hi:
                        return GraphPoint(i, p.length)
        return None


def _group(g: MetricGraph, pieces: list[Piece]) -> list[list[Piece]]:
    ds = DisjointSet(range(len(pieces)))
    at_vertex: dict[int, int] = {}
    for i, p in enumerate(pieces):
        e = g.edges[p.edge]
        for attached, v in ((p.attach_lo, e.tail), (p.attach_hi, e.head)):
            if attached:
                if v in at_vertex:
                    ds.merge(at_vertex[v], i)
                else:
                    at_vertex[v] = i
    groups: dict[int, list[Piece]] = {}
    for i, p in enumerate(pieces):
        groups.setdefault(ds[i], []).append(p)
    return sorted(groups.values(), key=lambda ps: (ps[0].edge, ps[0].lo))


def components_after_removal(g: MetricGraph, cut: Iterable[GraphPoint]) -> list[Component]:
    """Connected components of ``S`` minus the finite point set ``cut``."""
    cut_vertices: set[int] = set()
    cut_offsets: dict[int, list[float]] = {}
    for p in cut:
        v = g.vertex_at(p)
        if v is not None:
            cut_vertices.add(v)
        else:
            cut_offsets.setdefault(p.edge, []).append(float(p.offset))
    pieces = []
    for e in g.edges:
        marks = [0.0, *sorted(set(cut_offsets.get(e.id, []))), e.length]
        for j, (lo, hi) in enumerate(zip(marks, marks[1:])):
            pieces.append(Piece(
                e.id, lo, hi,
                attach_lo=j == 0 and e.tail not in cut_vertices,
                attach_hi=j == len(marks) - 2 and e.head not in cut_vertices,
            ))
    return [Component(tuple(ps), closed=False) for ps in _group(g, pieces)]


def split_edges(g: MetricGraph, cuts: Iterable[tuple[int, float]]) -> list[Component]:
    """Partition S by cutting edges at the given offsets.

    A cut at offset 0 (or the edge length) separates the edge from its tail
    (head) vertex, so vertex cuts keep the grouping of the interior limit.
    Zero-length parts are dropped.
    """
    per_edge: dict[int, list[float]] = {}
    for edge, offset in cuts:
        per_edge.setdefault(edge, []).append(float(offset))
    pieces = []
    for e in g.edges:
        marks = [0.0, *sorted(per_edge.get(e.id, [])), e.length]
        for j, (lo, hi) in enumerate(zip(marks, marks[1:])):
            if hi - lo <= TOL:
                continue
            pieces.append(Piece(e.id, lo, hi, attach_lo=j == 0, attach_hi=j == len(marks) - 2))
    return [Component(tuple(ps), closed=True) for ps in _group(g, pieces)]


# -- subdivision --------------------------------------------------------------


class SubdivisionGraph:
    """Combinatorial graph replacing each edge by a path of equal sub-edges.

    Vertices ``0..|V|-1`` are the parent vertices; interior chain vertices
    follow edge by edge.
    """

    def __init__(self, parent: MetricGraph, n: int):
        if n < 1:
            raise ValueError("subdivision level must be positive")
        self.parent = parent
        self.n = n
        nv = len(parent.vertices)
        self.counts = [max(1, math.ceil(n * e.length - TOL)) for e in parent.edges]
        self.sub_lengths = [e.length / c for e, c in zip(parent.edges, self.counts)]
        self.chains: list[list[int]] = []
        self.locations: list[tuple[int, float]] = [
            (p.edge, p.offset) for p in map(parent.vertex_point, range(nv))
        ]
        nxt = nv
        for e, c in zip(parent.edges, self.counts):
            inner = list(range(nxt, nxt + c - 1))
            nxt += c - 1
            self.chains.append([e.tail, *inner, e.head])
            self.locations.extend((e.id, i * e.length / c) for i in range(1, c))
        self.N = nxt
        adjacency: list[list[int]] = [[] for _ in range(self.N)]
        for chain in self.chains:
            for a, b in zip(chain, chain[1:]):
                adjacency[a].append(b)
                adjacency[b].append(a)
        self.adjacency = adjacency

    def is_parent_vertex(self, i: int) -> bool:
        return i < len(self.parent.vertices)

    def point(self, i: int) -> GraphPoint:
        return self.parent.point(*self.locations[i])

    def offset_in_chain(self, edge: int, j: int) -> float:
        e = self.parent.edges[edge]
        return e.length if j == self.counts[edge] else j * e.length / self.counts[edge]

    @property
    def total_length(self) -> float:
        return math.fsum(c * h for c, h in zip(self.counts, self.sub_lengths))

    def as_metric_graph(self) -> MetricGraph:
        edge_list = []
        for chain, h in zip(self.chains, self.sub_lengths):
            edge_list.extend((a, b, h) for a, b in zip(chain, chain[1:]))
        return build_graph(edge_list)


def subdivide(g: MetricGraph, n: int) -> SubdivisionGraph:
    return SubdivisionGraph(g, n)
