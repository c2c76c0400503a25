"""Standard metric graphs used by the experiments and tests."""
from __future__ import annotations

import numpy as np

from .metric_graph import MetricGraph, build_graph


def segment(length: float = 1.0) -> MetricGraph:
    return build_graph([(0, 1, length)])


def star(*arm_lengths: float) -> MetricGraph:
    """Star with center 0 and leaf i+1 at the end of arm i."""
    return build_graph([(0, i + 1, r) for i, r in enumerate(arm_lengths)])


def path(lengths) -> MetricGraph:
    return build_graph([(i, i + 1, r) for i, r in enumerate(lengths)])


def cycle(k: int = 3, total: float = 1.0) -> MetricGraph:
    """Cycle with k equal edges; k >= 3 keeps the graph simple."""
    return build_graph([(i, (i + 1) % k, total / k) for i in range(k)])


def regular_tree(d: int, depth: int) -> MetricGraph:
    """Unit-length tree whose internal vertices have degree d+1 and whose leaves are all at ``depth`` from the root 0."""
    edges, frontier, nxt = [], [0], 1
    for level in range(depth):
        new = []
        for v in frontier:
            for _ in range(d + 1 if level == 0 else d):
                edges.append((v, nxt, 1.0))
                new.append(nxt)
                nxt += 1
        frontier = new
    return build_graph(edges)


def grid(rows: int, cols: int) -> MetricGraph:
    name = lambda r, c: r * cols + c  # noqa: E731
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((name(r, c), name(r, c + 1), 1.0))
            if r + 1 < rows:
                edges.append((name(r, c), name(r + 1, c), 1.0))
    return build_graph(edges)


def random_tree(rng: np.random.Generator, n_edges: int, low: float = 0.1, high: float = 3.0) -> MetricGraph:
    """Random recursive tree: vertex i attaches to a uniform earlier vertex."""
    lengths = rng.uniform(low, high, n_edges)
    parents = [int(rng.integers(0, i + 1)) for i in range(n_edges)]
    return build_graph([(p, i + 1, r) for i, (p, r) in enumerate(zip(parents, lengths))])


def random_graph(rng: np.random.Generator, n_vertices: int, extra_edges: int,
                 low: float = 0.1, high: float = 3.0) -> MetricGraph:
    """Random spanning tree plus up to ``extra_edges`` chords (simple, connected)."""
    pairs = {(int(rng.integers(0, i)), i) for i in range(1, n_vertices)}
    tries = 0
    target = len(pairs) + extra_edges
    while len(pairs) < target and tries < 50 * (extra_edges + 1):
        u, v = sorted(int(x) for x in rng.choice(n_vertices, 2, replace=False))
        pairs.add((u, v))
        tries += 1
    pairs = sorted(pairs)
    lengths = rng.uniform(low, high, len(pairs))
    return build_graph([(u, v, r) for (u, v), r in zip(pairs, lengths)])
