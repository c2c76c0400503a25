"""Random labelings of graphs, their peaks, and the floodings they induce.

A labeling is a bijection from the vertices to ``1..N``; a peak is a vertex
whose label beats every neighbour.  Adding vertices in decreasing label
order grows clusters from the peaks, and on a subdivision graph that growth
traces out an empirical flooding of the parent metric graph.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import islice, permutations
from typing import Iterator, Sequence

import numpy as np

from .errors import BudgetExhausted, NotATree, PartsMismatch, TooLarge
from .flooding import Arm, CoveredSet, Flooding, Stage
from .metric_graph import TAIL, SubdivisionGraph

Adjacency = Sequence[Sequence[int]]
MAX_ENUMERATION = 12
DEFAULT_BUDGET = 10**7
BLOCK = 1024  # trials per random stream in the rejection sampler


def adjacency_of(graph) -> list[list[int]]:
    adj = getattr(graph, "adjacency", graph)
    return [list(a) for a in adj]


def path_adjacency(n: int) -> list[list[int]]:
    return [[u for u in (v - 1, v + 1) if 0 <= u < n] for v in range(n)]


def cycle_adjacency(n: int) -> list[list[int]]:
    return [[(v - 1) % n, (v + 1) % n] for v in range(n)]


def star_adjacency(leaves: int) -> list[list[int]]:
    return [list(range(1, leaves + 1))] + [[0] for _ in range(leaves)]


def binary_tree_adjacency(depth: int) -> list[list[int]]:
    """Complete binary tree with ``depth`` levels below the root (heap numbering)."""
    n = 2 ** (depth + 1) - 1
    adj: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        p = (v - 1) // 2
        adj[v].append(p)
        adj[p].append(v)
    return adj


def is_tree(adj: Adjacency) -> bool:
    n = len(adj)
    if sum(len(a) for a in adj) != 2 * (n - 1):
        return False
    seen, stack = {0}, [0]
    while stack:
        for u in adj[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == n


@dataclass(frozen=True)
class Labeling:
    labels: tuple[int, ...]  # labels[v] in 1..N

    @property
    def N(self) -> int:
        return len(self.labels)

    @property
    def R(self) -> tuple[int, ...]:
        """R[k - 1] is the vertex carrying label k."""
        inv = [0] * self.N
        for v, lab in enumerate(self.labels):
            inv[lab - 1] = v
        return tuple(inv)

    @classmethod
    def from_order(cls, descending: Sequence[int]) -> "Labeling":
        """Labeling whose vertices, from the highest label down, are ``descending``."""
        n = len(descending)
        labels = [0] * n
        for i, v in enumerate(descending):
            labels[v] = n - i
        return cls(tuple(labels))


def _neighbor_table(adj: Adjacency) -> np.ndarray:
    n = len(adj)
    width = max((len(a) for a in adj), default=0) or 1
    table = np.full((n, width), n, dtype=int)  # column n holds label 0
    for v, nbrs in enumerate(adj):
        table[v, : len(nbrs)] = nbrs
    return table


def peak_mask(adj: Adjacency, labels: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
    """Boolean peak indicator for a batch of label arrays of shape (B, N)."""
    labels = np.atleast_2d(labels)
    table = _neighbor_table(adj) if table is None else table
    padded = np.concatenate([labels, np.zeros((labels.shape[0], 1), dtype=labels.dtype)], axis=1)
    return labels > padded[:, table].max(axis=2)


def find_peaks(adj: Adjacency, lab: Labeling) -> frozenset[int]:
    mask = peak_mask(adjacency_of(adj), np.array([lab.labels]))[0]
    return frozenset(np.flatnonzero(mask).tolist())


# -- exhaustive enumeration -----------------------------------------------------


@dataclass
class Enumeration:
    total: int
    by_peak_count: dict[int, int]
    peak_location: dict[int, np.ndarray]  # M -> per-vertex count of M-peak labelings with v a peak


def _all_labelings(n: int, chunk: int = 40320) -> Iterator[np.ndarray]:
    it = permutations(range(1, n + 1))
    while True:
        block = list(islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.int16)


def enumerate_labelings(adj: Adjacency) -> Enumeration:
    """Peak statistics over all N! labelings (N at most 12)."""
    adj = adjacency_of(adj)
    n = len(adj)
    if n > MAX_ENUMERATION:
        raise TooLarge(f"N={n} exceeds the enumeration limit {MAX_ENUMERATION}")
    table = _neighbor_table(adj)
    counts: Counter = Counter()
    location: dict[int, np.ndarray] = {}
    for block in _all_labelings(n):
        mask = peak_mask(adj, block, table)
        k = mask.sum(axis=1)
        for m in np.unique(k):
            sel = k == m
            counts[int(m)] += int(sel.sum())
            location.setdefault(int(m), np.zeros(n, dtype=np.int64))
            location[int(m)] += mask[sel].sum(axis=0)
    return Enumeration(math.factorial(n), dict(counts), location)


def enumerate_by_peak_count(adj: Adjacency, M: int) -> int:
    return enumerate_labelings(adj).by_peak_count.get(M, 0)


def iter_labelings_with_peaks(adj: Adjacency, M: int) -> Iterator[Labeling]:
    adj = adjacency_of(adj)
    if len(adj) > MAX_ENUMERATION:
        raise TooLarge(f"N={len(adj)} exceeds the enumeration limit {MAX_ENUMERATION}")
    table = _neighbor_table(adj)
    for block in _all_labelings(len(adj)):
        keep = peak_mask(adj, block, table).sum(axis=1) == M
        for row in block[keep]:
            yield Labeling(tuple(int(x) for x in row))


# -- sampling -------------------------------------------------------------------


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for a trial (or block) index."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass
class SampleResult:
    labels: np.ndarray  # (trials, N), row i is trial i
    M: int
    seed: int
    draws: int
    method: str
    accepted: int | None = None  # before truncation to the requested count

    @property
    def acceptance_rate(self) -> float:
        hits = len(self.labels) if self.accepted is None else self.accepted
        return hits / self.draws if self.draws else float("nan")

    def labelings(self) -> list[Labeling]:
        return [Labeling(tuple(int(x) for x in row)) for row in self.labels]


def sample_uniform(adj, trials: int, seed: int = 0) -> np.ndarray:
    """Unconditioned uniform labelings, one row per trial."""
    n = len(adjacency_of(adj))
    blocks = [stream(seed, b).random((min(BLOCK, trials - a), n)) for b, a in enumerate(range(0, trials, BLOCK))]
    if not blocks:
        return np.empty((0, n), dtype=np.int32)
    return np.concatenate(blocks).argsort(axis=1).astype(np.int32) + 1


def _reject_block(args) -> tuple[np.ndarray, int, int]:
    adj, M, seed, block, quota, budget = args
    rng = stream(seed, block)
    n = len(adj)
    table = _neighbor_table(adj)
    accepted: list[np.ndarray] = []
    have, draws, batch = 0, 0, 1024
    while have < quota:
        if draws >= budget:
            return np.empty((0, n), dtype=np.int32), draws, have
        size = int(min(batch, budget - draws))
        labels = rng.random((size, n)).argsort(axis=1).astype(np.int32) + 1
        draws += size
        good = labels[peak_mask(adj, labels, table).sum(axis=1) == M]
        accepted.append(good)
        have += len(good)
        rate = max(have, 1) / draws
        batch = int(min(max(1024, 2 * (quota - have) / rate), 1 << 16))
    out = np.concatenate(accepted)[:quota]
    return out, draws, have


def _exact_tree_block(args) -> np.ndarray:
    adj, seed, start, stop = args
    sampler = _SinglePeakTreeSampler(adj)
    return np.array([sampler.draw(stream(seed, i)) for i in range(start, stop)], dtype=np.int32)


def sample_conditioned(adj, M: int, trials: int, seed: int = 0, budget: int = DEFAULT_BUDGET,
                       method: str = "rejection", jobs: int = 1) -> SampleResult:
    """Uniform labelings with exactly ``M`` peaks.

    ``rejection`` draws uniform permutations and keeps those with M peaks;
    each block of trials has its own stream, so results do not depend on
    ``jobs``.  ``tree`` samples exactly for one peak on a tree through the
    hook-length product, and ``auto`` picks it whenever it applies.
    """
    adj = adjacency_of(adj)
    if method == "auto":
        method = "tree" if M == 1 and is_tree(adj) else "rejection"
    if method == "tree":
        if M != 1 or not is_tree(adj):
            raise NotATree("the exact sampler needs a tree and M = 1")
        chunks = [(adj, seed, a, min(a + BLOCK, trials)) for a in range(0, trials, BLOCK)]
        parts = _map(_exact_tree_block, chunks, jobs)
        labels = np.concatenate(parts) if parts else np.empty((0, len(adj)), dtype=np.int32)
        return SampleResult(labels, M, seed, trials, "tree")
    if method != "rejection":
        raise ValueError(f"unknown sampling method {method!r}")
    blocks = [(a // BLOCK, min(BLOCK, trials - a)) for a in range(0, trials, BLOCK)]
    tasks = [(adj, M, seed, b, q, max(1, budget * q // max(trials, 1))) for b, q in blocks]
    results = _map(_reject_block, tasks, jobs)
    draws = sum(d for _, d, _ in results)
    hits = sum(h for _, _, h in results)
    got = sum(len(r) for r, _, _ in results)
    if got < trials:
        raise BudgetExhausted(
            f"accepted {got} of {trials} after {draws} draws (acceptance rate {hits / max(draws, 1):.3g})",
            draws=draws, accepted=got,
        )
    labels = np.concatenate([r for r, _, _ in results]) if results else np.empty((0, len(adj)), dtype=np.int32)
    return SampleResult(labels, M, seed, draws, "rejection", hits)


def _map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def rooted_sizes(adj: Adjacency, root: int) -> np.ndarray:
    """Number of descendants (including itself) of every vertex when rooted at ``root``."""
    n = len(adj)
    parent = [-1] * n
    order, stack = [], [root]
    parent[root] = root
    while stack:
        v = stack.pop()
        order.append(v)
        for u in adj[v]:
            if parent[u] == -1:
                parent[u] = v
                stack.append(u)
    size = np.ones(n, dtype=np.int64)
    for v in reversed(order):
        if v != root:
            size[parent[v]] += size[v]
    return size


class _SinglePeakTreeSampler:
    """Exact uniform sampler of one-peak labelings of a tree.

    A labeling with its only peak at v decreases away from v, so it is a
    linear extension of the tree rooted at v.  There are N!/prod(sizes) of
    them, and one is drawn uniformly by repeatedly taking a frontier vertex
    with probability proportional to its subtree size.
    """

    def __init__(self, adj: Adjacency):
        self.adj = adj
        n = len(adj)
        self.sizes = [rooted_sizes(adj, v) for v in range(n)]
        logw = np.array([-np.log(s.astype(float)).sum() for s in self.sizes])
        w = np.exp(logw - logw.max())
        self.root_prob = w / w.sum()

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        n = len(self.adj)
        root = int(rng.choice(n, p=self.root_prob))
        size = self.sizes[root]
        labels = np.zeros(n, dtype=np.int32)
        labels[root] = n
        frontier = list(self.adj[root])
        for lab in range(n - 1, 0, -1):
            w = size[frontier].astype(float)
            i = int(rng.choice(len(frontier), p=w / w.sum()))
            v = frontier.pop(i)
            labels[v] = lab
            frontier.extend(u for u in self.adj[v] if labels[u] == 0)
        return labels


def peak_location_counts(sample: SampleResult, adj) -> np.ndarray:
    return peak_mask(adjacency_of(adj), sample.labels).sum(axis=0)


@dataclass
class PeakRatio:
    odds: Fraction | float  # P(single peak at v) / P(single peak at y)
    descendant_ratio: Fraction  # n_y(v) / n_v(y)
    exact: bool

    @property
    def equal(self) -> bool:
        return self.odds == self.descendant_ratio if self.exact else math.isclose(self.odds, float(self.descendant_ratio), rel_tol=0.05)


def peak_ratio_check(adj, v: int, y: int, sample: SampleResult | None = None) -> PeakRatio:
    """Compare single-peak odds at adjacent v, y with the ratio of rooted subtree sizes."""
    adj = adjacency_of(adj)
    if not is_tree(adj):
        raise NotATree("peak ratio identity holds on trees")
    if y not in adj[v]:
        raise ValueError("v and y must be adjacent")
    ratio = Fraction(int(rooted_sizes(adj, y)[v]), int(rooted_sizes(adj, v)[y]))
    if sample is None:
        loc = enumerate_labelings(adj).peak_location.get(1, np.zeros(len(adj), dtype=np.int64))
        return PeakRatio(Fraction(int(loc[v]), int(loc[y])), ratio, True)
    loc = peak_location_counts(sample, adj)
    return PeakRatio(float(loc[v]) / float(loc[y]), ratio, False)


# -- empirical flooding ----------------------------------------------------------


@dataclass
class EmpiricalFlooding:
    flooding: Flooding
    event_indices: list[int]
    peaks: list[int] = field(default_factory=list)


def empirical_flooding(sub: SubdivisionGraph, lab: Labeling) -> EmpiricalFlooding:
    """Flooding of the parent graph traced by adding vertices in decreasing label order.

    Stage boundaries fall where the added vertex is a parent vertex, completes
    a parent edge, or is a peak.  Within a stage each arm's rate is the share
    of newly covered sub-edges it accounts for.
    """
    g = sub.parent
    labels = np.asarray(lab.labels)
    order = np.argsort(-labels, kind="stable")
    peaks = sorted(find_peaks(sub.adjacency, lab))
    sources = tuple(sub.point(p) for p in peaks)
    member: list[list[tuple[int, int]]] = [[] for _ in range(sub.N)]
    for e, chain in enumerate(sub.chains):
        for j, v in enumerate(chain):
            member[v].append((e, j))
    in_c = np.zeros(sub.N, dtype=bool)
    covered = [np.zeros(c, dtype=bool) for c in sub.counts]
    missing = [c + 1 for c in sub.counts]
    peak_set = set(peaks)
    prev_in_c, prev_cov = in_c.copy(), [c.copy() for c in covered]
    stages: list[Stage] = []
    events: list[int] = []
    t = 0.0
    for k, v in enumerate(order):
        in_c[v] = True
        finished = False
        for e, j in member[v]:
            chain = sub.chains[e]
            if j > 0 and in_c[chain[j - 1]]:
                covered[e][j - 1] = True
            if j < sub.counts[e] and in_c[chain[j + 1]]:
                covered[e][j] = True
            missing[e] -= 1
            finished |= missing[e] == 0
        if not (sub.is_parent_vertex(v) or finished or v in peak_set):
            continue
        events.append(k)
        stage = _stage_between(sub, sources, prev_in_c, prev_cov, covered, labels, t)
        if stage is not None:
            stages.append(stage)
            t = stage.t_end
        prev_in_c, prev_cov = in_c.copy(), [c.copy() for c in covered]
    return EmpiricalFlooding(Flooding(g, sources, tuple(stages)), events, peaks)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    stops = np.concatenate([idx[breaks], [idx[-1]]])
    return list(zip(starts.tolist(), stops.tolist()))


def _split_runs(runs, marked) -> list[tuple[int, int]]:
    """Cut runs of sub-edges at interior vertices that were already covered."""
    out = []
    for i0, i1 in runs:
        start = i0
        for j in range(i0 + 1, i1 + 1):
            if marked[j]:
                out.append((start, j - 1))
                start = j
        out.append((start, i1))
    return out


def _stage_between(sub, sources, prev_in_c, prev_cov, covered, labels, t) -> Stage | None:
    g = sub.parent
    grown: dict[tuple[int, float, int], float] = {}
    for e, (old, new) in enumerate(zip(prev_cov, covered)):
        chain, h = sub.chains[e], sub.sub_lengths[e]
        for i0, i1 in _split_runs(_runs(new & ~old), [bool(prev_in_c[v]) for v in chain]):
            left, right = prev_in_c[chain[i0]], prev_in_c[chain[i1 + 1]]
            if left and right:
                m = min(range(i0 + 1, i1 + 1), key=lambda j: labels[chain[j]])
                grown[(e, sub.offset_in_chain(e, i0), +1)] = (m - i0) * h
                grown[(e, sub.offset_in_chain(e, i1 + 1), -1)] = (i1 + 1 - m) * h
            elif left:
                grown[(e, sub.offset_in_chain(e, i0), +1)] = (i1 + 1 - i0) * h
            elif right:
                grown[(e, sub.offset_in_chain(e, i1 + 1), -1)] = (i1 + 1 - i0) * h
            else:
                raise AssertionError("newly covered run touches no earlier cluster")
    if not grown:
        return None
    segs = []
    for e, old in enumerate(prev_cov):
        for i0, i1 in _runs(old):
            segs.append((e, sub.offset_in_chain(e, i0), sub.offset_in_chain(e, i1 + 1)))
    slots = CoveredSet.from_points(g, sources).with_segments(segs).normals()
    total = math.fsum(grown.values())
    arms, used = [], 0
    for s in slots:
        length = next(
            (l for (e, x, d), l in grown.items() if e == s.edge and d == s.direction and abs(x - s.offset) <= 1e-9),
            0.0,
        )
        used += length > 0
        arms.append(Arm(s.edge, s.offset, s.direction, length / total))
    if used != len(grown):
        raise AssertionError("grown run does not start at a boundary normal")
    return Stage(t, t + total, tuple(arms))


# -- counting -------------------------------------------------------------------


def multinomial_count(N: int, parts: Sequence[int]) -> int:
    if any(p < 0 for p in parts) or sum(parts) != N:
        raise PartsMismatch(f"parts {list(parts)} do not sum to {N}")
    out = math.factorial(N)
    for p in parts:
        out //= math.factorial(p)
    return out


def log_multinomial_asymptotic(n: float, a: Sequence[float]) -> float:
    """Leading order of log multinomial(n*sum(a); n*a_1, ...)."""
    total = math.fsum(a)
    xlx = lambda x: x * math.log(x) if x > 0 else 0.0  # noqa: E731
    return n * (xlx(total) - math.fsum(xlx(x) for x in a))


def occupancy_lln_check(N: int, parts: Sequence[int], rng: np.random.Generator,
                        grid: Sequence[float] | None = None) -> float:
    """Max over boxes j and times t of |#(first ceil(N t) labels in box j) - N_j t|.

    Vertices are split into boxes of sizes ``parts``; the labels of a uniform
    labeling are read from the top down.
    """
    if sum(parts) != N:
        raise PartsMismatch(f"parts {list(parts)} do not sum to {N}")
    boxes = np.repeat(np.arange(len(parts)), parts)
    seq = rng.permutation(boxes)
    counts = np.zeros((N + 1, len(parts)))
    counts[1:] = np.cumsum(np.eye(len(parts))[seq], axis=0)
    ts = np.arange(1, N + 1) / N if grid is None else np.asarray(grid, dtype=float)
    steps = np.ceil(N * ts - 1e-12).astype(int)
    dev = np.abs(counts[steps] - np.outer(ts, parts))
    return float(dev.max())
