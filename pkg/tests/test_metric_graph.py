import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodings import generators
from floodings.errors import (DisconnectedGraph, EmptyGraph, InvalidPoint, NonpositiveLength, NotATree,
                              ParallelEdge, ParseError, SelfLoop)
from floodings.metric_graph import (GraphPoint, build_graph, components_after_removal, format_graph,
                                    parse_graph, side_mass, split_edges, subdivide)

seeds = st.integers(0, 10_000)


def small_graph(seed: int):
    rng = np.random.default_rng(seed)
    return generators.random_graph(rng, int(rng.integers(2, 6)), int(rng.integers(0, 4)))


def random_point(g, rng):
    e = int(rng.integers(len(g.edges)))
    return GraphPoint(e, float(rng.uniform(0, g.edges[e].length)))


def test_build_graph_basic():
    g = build_graph([("a", "b", 1.0)])
    assert g.total_length == 1.0 and g.is_tree
    star = build_graph([("c", "a", 1), ("c", "b", 1), ("c", "d", 1)])
    assert star.total_length == 3 and star.degree(0) == 3


@pytest.mark.parametrize("edges, error", [
    ([("a", "b", 1), ("b", "a", 2)], ParallelEdge),
    ([("a", "a", 1)], SelfLoop),
    ([("a", "b", 0)], NonpositiveLength),
    ([("a", "b", -1)], NonpositiveLength),
    ([("a", "b", 1), ("c", "d", 1)], DisconnectedGraph),
    ([], EmptyGraph),
])
def test_build_graph_rejects(edges, error):
    with pytest.raises(error):
        build_graph(edges)


def test_parse_graph_round_trip_and_line_numbers():
    g = parse_graph("# star\nc a 1\nc b 2.5\n\nc d 0.5\n")
    assert [e.length for e in g.edges] == [1.0, 2.5, 0.5]
    assert parse_graph(format_graph(g)).edges == g.edges
    with pytest.raises(ParseError, match="line 2"):
        parse_graph("a b 1\nb c\n")


def test_distance_examples():
    seg = generators.segment()
    assert seg.distance(GraphPoint(0, 0.2), GraphPoint(0, 0.9)) == pytest.approx(0.7)
    star = generators.star(1, 1, 1)
    assert star.distance(GraphPoint(0, 1.0), GraphPoint(1, 1.0)) == pytest.approx(2.0)
    # unit circle as a triangle: arc positions 0.1 and 0.9 are 0.2 apart the short way
    tri = generators.cycle(3, 1.0)
    assert tri.distance(GraphPoint(0, 0.1), GraphPoint(2, 0.9 - 2 / 3)) == pytest.approx(0.2)
    assert tri.distance(GraphPoint(0, 0.01), GraphPoint(0, 0.32)) == pytest.approx(0.31)


def test_invalid_point():
    g = generators.segment()
    with pytest.raises(InvalidPoint):
        g.distance(GraphPoint(0, 1.5), GraphPoint(0, 0.0))
    with pytest.raises(InvalidPoint):
        g.distance(GraphPoint(3, 0.5), GraphPoint(0, 0.0))


def test_vertex_canonical_form():
    star = generators.star(1, 2, 3)
    center_on_e2 = GraphPoint(2, 0.0)
    assert star.canonical(center_on_e2) == GraphPoint(0, 0.0)
    assert star.same_point(center_on_e2, GraphPoint(1, 0.0))


def floyd_warshall(n, edges):
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for a, b, w in edges:
        d[a, b] = d[b, a] = min(d[a, b], w)
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_distance_matches_discretized_oracle(seed):
    g = small_graph(seed)
    k = 4
    ids, pts, edges = {}, [], []

    def node(e, j):
        p = g.canonical(GraphPoint(e, g.edges[e].length * j / k))
        key = (p.edge, round(p.offset, 12))
        if key not in ids:
            ids[key] = len(pts)
            pts.append(p)
        return ids[key]

    for e in g.edges:
        for j in range(k):
            edges.append((node(e.id, j), node(e.id, j + 1), e.length / k))
    oracle = floyd_warshall(len(pts), edges)
    for i, p in enumerate(pts):
        for j, q in enumerate(pts):
            assert g.distance(p, q) == pytest.approx(oracle[i, j], abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_distance_is_a_metric(seed):
    g = small_graph(seed)
    rng = np.random.default_rng(seed + 1)
    p, q, r = (random_point(g, rng) for _ in range(3))
    assert g.distance(p, q) == pytest.approx(g.distance(q, p), abs=1e-12)
    assert g.distance(p, r) <= g.distance(p, q) + g.distance(q, r) + 1e-9
    assert g.distance(p, p) == 0.0
    if g.distance(p, q) == 0:
        assert g.canonical(p) == g.canonical(q)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_pairwise_matches_scalar(seed):
    g = small_graph(seed)
    rng = np.random.default_rng(seed)
    a = [random_point(g, rng) for _ in range(5)]
    b = [random_point(g, rng) for _ in range(4)]
    mat = g.pairwise_distances(np.array([p.edge for p in a]), np.array([p.offset for p in a]),
                               np.array([p.edge for p in b]), np.array([p.offset for p in b]))
    for i, p in enumerate(a):
        for j, q in enumerate(b):
            assert mat[i, j] == pytest.approx(g.distance(p, q), abs=1e-12)


def test_subdivide_examples():
    sub = subdivide(generators.segment(), 3)
    assert sub.counts == [3] and sub.N == 4
    assert sub.sub_lengths[0] == pytest.approx(1 / 3)
    sub = subdivide(generators.segment(0.7), 2)
    assert sub.counts == [2] and sub.sub_lengths[0] == pytest.approx(0.35)
    sub = subdivide(generators.star(1, 1, 1), 2)
    assert sum(sub.counts) == 6 and sub.N == 7
    with pytest.raises(ValueError):
        subdivide(generators.segment(), 0)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 9))
def test_subdivide_preserves_length_and_points(seed, n):
    g = small_graph(seed)
    sub = subdivide(g, n)
    assert abs(sub.total_length - g.total_length) <= 1e-12
    assert sub.as_metric_graph().total_length == pytest.approx(g.total_length, abs=1e-12)
    keys = {(p.edge, round(p.offset, 12)) for p in map(sub.point, range(sub.N))}
    assert len(keys) == sub.N
    for e, chain in enumerate(sub.chains):
        assert len(chain) == sub.counts[e] + 1


def test_side_mass_examples():
    seg = generators.segment()
    assert side_mass(seg, GraphPoint(0, 0.0), GraphPoint(0, 0.3)) == pytest.approx(0.7)
    star = generators.star(1, 1, 1)
    assert side_mass(star, star.vertex_point(0), GraphPoint(0, 0.5)) == pytest.approx(0.5)
    assert side_mass(star, star.vertex_point(1), star.vertex_point(0)) == pytest.approx(2.0)
    with pytest.raises(NotATree):
        side_mass(generators.cycle(3), GraphPoint(0, 0.1), GraphPoint(1, 0.1))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_side_mass_complement(seed):
    rng = np.random.default_rng(seed)
    tree = generators.random_tree(rng, int(rng.integers(1, 8)))
    e = int(rng.integers(len(tree.edges)))
    length = tree.edges[e].length
    x, y, w = sorted(rng.uniform(0.05, 0.95, 3) * length)
    here, there, mid = GraphPoint(e, float(x)), GraphPoint(e, float(w)), GraphPoint(e, float(y))
    # the two sides of an interior point partition the tree
    total = side_mass(tree, here, mid) + side_mass(tree, there, mid)
    assert total == pytest.approx(tree.total_length, abs=1e-9)


def test_components_after_removal_examples():
    seg = generators.segment()
    comps = components_after_removal(seg, [GraphPoint(0, 0.4)])
    assert sorted(round(c.length, 12) for c in comps) == [0.4, 0.6]
    star = generators.star(1, 1, 1)
    comps = components_after_removal(star, [star.vertex_point(0)])
    assert [c.length for c in comps] == pytest.approx([1, 1, 1])
    tri = generators.cycle(3, 1.0)
    comps = components_after_removal(tri, [GraphPoint(0, 0.0), GraphPoint(1, 1 / 6)])
    assert sorted(c.length for c in comps) == pytest.approx([0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4))
def test_component_lengths_sum_to_total(seed, cuts):
    g = small_graph(seed)
    rng = np.random.default_rng(seed)
    pts = [random_point(g, rng) for _ in range(cuts)]
    comps = components_after_removal(g, pts)
    assert math.fsum(c.length for c in comps) == pytest.approx(g.total_length, abs=1e-12)
    split = split_edges(g, [(p.edge, p.offset) for p in pts])
    assert math.fsum(c.length for c in split) == pytest.approx(g.total_length, abs=1e-12)


def test_restriction_maps_back_to_parent():
    star = generators.star(3, 1, 1)
    (left, right) = sorted(split_edges(star, [(0, 1.0)]), key=lambda c: c.length)
    r = right.restrict(star)
    assert r.graph.total_length == pytest.approx(3.0)
    for e in r.graph.edges:
        p = r.to_parent(GraphPoint(e.id, e.length / 2))
        assert right.contains(star, p)
    assert left.length == pytest.approx(2.0)
