import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodings import generators
from floodings.errors import BadPolicy, CoincidentPoints, GraphMismatch, ParseError, TimeOutOfRange
from floodings.flooding import (CoveredSet, OverridePolicy, WeightPolicy, flooding_distance, hausdorff, measure,
                                park_first_arm, read_trace, simulate, structure_checks, to_trace, uniform_policy)
from floodings.metric_graph import GraphPoint
from oracles import SteppedFlooding, set_discrepancy

seeds = st.integers(0, 10_000)


def random_setup(seed: int):
    rng = np.random.default_rng(seed)
    g = generators.random_graph(rng, int(rng.integers(2, 7)), int(rng.integers(0, 4)))
    sources, k = [], int(rng.integers(1, 4))
    for _ in range(200):
        if len(sources) == k:
            break
        if rng.random() < 0.3:
            p = g.vertex_point(int(rng.integers(len(g.vertices))))
        else:
            e = int(rng.integers(len(g.edges)))
            p = GraphPoint(e, float(rng.uniform(0.05, 0.95)) * g.edges[e].length)
        if all(g.distance(p, q) > 1e-3 for q in sources):
            sources.append(p)
    return g, sources or [g.vertex_point(0)], WeightPolicy.random(g, rng)


def test_segment_symmetric_source():
    g = generators.segment()
    f = simulate(g, [GraphPoint(0, 0.5)], uniform_policy)
    assert f.K == 1 and f.end_time == pytest.approx(1.0)
    assert list(f.stages[0].rates) == [0.5, 0.5]
    assert f.covered_at(0.4).intervals == {0: ((0.3, 0.7),)}
    assert measure(f.covered_at(0.4)) == pytest.approx(0.4)


def test_star_center_source():
    g = generators.star(1, 1, 1)
    f = simulate(g, [g.vertex_point(0)], uniform_policy)
    assert f.K == 1 and f.end_time == pytest.approx(3.0)
    assert np.allclose(f.stages[0].rates, 1 / 3)
    cs = f.covered_at(1.5)
    assert all(ivs == ((0.0, 0.5),) for ivs in cs.intervals.values())
    assert f.covered_at(3.0).is_full()


def test_circle_single_source():
    g = generators.cycle(3, 1.0)
    f = simulate(g, [g.vertex_point(0)], uniform_policy)
    assert f.end_time == pytest.approx(1.0)
    assert all(np.allclose(s.rates, 0.5) for s in f.stages)
    # the two arms meet antipodally at t = 1
    last = f.stages[-1]
    tips = [GraphPoint(a.edge, a.position(last.duration)) for a in last.arms]
    assert g.distance(*tips) == pytest.approx(0.0, abs=1e-12)
    assert g.distance(tips[0], g.vertex_point(0)) == pytest.approx(0.5)


def test_measure_examples():
    g = generators.segment()
    assert measure(CoveredSet(g, {})) == 0
    assert measure(CoveredSet(g, {0: [(0.0, 1.0)]})) == 1.0
    assert measure(CoveredSet(g, {0: [(0.3, 0.7)]})) == pytest.approx(0.4)


def test_errors():
    g = generators.segment()
    with pytest.raises(CoincidentPoints):
        simulate(g, [GraphPoint(0, 0.5), GraphPoint(0, 0.5)], uniform_policy)
    with pytest.raises(BadPolicy):
        simulate(g, [GraphPoint(0, 0.5)], lambda view: [0.7, 0.7])
    with pytest.raises(BadPolicy):
        simulate(g, [GraphPoint(0, 0.5)], lambda view: [1.5, -0.5])
    f = simulate(g, [GraphPoint(0, 0.5)], uniform_policy)
    with pytest.raises(TimeOutOfRange):
        f.covered_at(1.5)
    with pytest.raises(TimeOutOfRange):
        f.boundary_arms(1.0)
    other = simulate(generators.segment(2.0), [GraphPoint(0, 0.5)], uniform_policy)
    with pytest.raises(GraphMismatch):
        flooding_distance(f, other)


def test_flooding_distance_examples():
    g = generators.segment()
    f = simulate(g, [GraphPoint(0, 0.5)], uniform_policy)
    h = simulate(g, [GraphPoint(0, 0.6)], uniform_policy)
    delta = g.total_length / 1000
    assert flooding_distance(f, f) == 0.0
    assert abs(flooding_distance(f, h) - 0.1) <= 2 * delta


def test_flooding_distance_circle_parked_arm():
    g = generators.cycle(3, 1.0)
    src = g.vertex_point(0)
    even = simulate(g, [src], uniform_policy)
    one_way = simulate(g, [src], WeightPolicy({(0, +1): 1.0, (1, +1): 1.0, (2, +1): 1.0}, default=0.0))
    assert one_way.stages[0].rates.tolist() in ([1.0, 0.0], [0.0, 1.0])
    assert abs(flooding_distance(even, one_way) - 0.25) <= 2 * g.total_length / 1000


def test_boundary_arms_examples():
    seg = generators.segment()
    assert len(simulate(seg, [GraphPoint(0, 0.3)], uniform_policy).boundary_arms(1e-6)) == 2
    star = generators.star(1, 1, 1)
    assert len(simulate(star, [star.vertex_point(0)], uniform_policy).boundary_arms(1e-6)) == 3
    # off-centre so the leaf-ward arm is still running when the other reaches the center
    f = simulate(star, [GraphPoint(0, 0.3)], uniform_policy)
    hit = f.stages[0].t_end
    assert hit == pytest.approx(0.6)
    arms = f.boundary_arms(hit)
    assert sorted((p.edge, d) for p, d in arms) == [(0, +1), (1, +1), (2, +1)]


def test_structure_checks_examples():
    tri = generators.cycle(3, 1.0)
    rep = structure_checks(simulate(tri, [tri.vertex_point(0)], uniform_policy))
    assert set(rep.component_counts) == {1} and not any(rep.has_loop) and not rep.dormant_arms

    star = generators.star(1, 1, 1)
    parked = simulate(star, [star.vertex_point(0)], OverridePolicy(uniform_policy, {0: park_first_arm}))
    assert structure_checks(parked).dormant_arms

    seg = generators.segment()
    two = simulate(seg, [GraphPoint(0, 0.25), GraphPoint(0, 0.75)], uniform_policy)
    assert structure_checks(two).component_counts[0] == 2


def test_trace_round_trip():
    star = generators.star(3, 1, 1)
    f = simulate(star, [GraphPoint(0, 0.5)], uniform_policy)
    back = read_trace(to_trace(f), star)
    assert back.sources == f.sources
    assert [(s.t_start, s.t_end) for s in back.stages] == [(s.t_start, s.t_end) for s in f.stages]
    assert [s.arms for s in back.stages] == [s.arms for s in f.stages]
    with pytest.raises(BadPolicy):
        read_trace("stage 1 0.0 1.0\n0 0.5 +1 0.7\n0 0.5 -1 0.7\n")
    with pytest.raises(ParseError, match="line 2"):
        read_trace("stage 1 0.0 1.0\n0 0.5 +1\n")


def test_hausdorff_of_translates():
    g = generators.segment(2.0)
    a = CoveredSet(g, {0: [(0.2, 0.6)]})
    b = CoveredSet(g, {0: [(0.3, 0.7)]})
    assert hausdorff(a, b, 0.001) == pytest.approx(0.1, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_stage_invariants(seed):
    g, sources, policy = random_setup(seed)
    f = simulate(g, sources, policy)
    assert f.end_time == pytest.approx(g.total_length, abs=1e-9)
    assert f.K <= len(g.vertices) + len(g.edges) + len(sources)
    for s in f.stages:
        assert abs(s.rates.sum() - 1.0) <= 1e-9
        assert s.t_end > s.t_start
    ts = np.linspace(0, g.total_length, 9)
    sets = [f.covered_at(t) for t in ts]
    for t, cs in zip(ts, sets):
        assert cs.measure == pytest.approx(t, abs=1e-9 * f.K)
    for a, b in zip(sets, sets[1:]):
        assert a.issubset(b)
    delta = g.total_length / 200
    for (s, a), (t, b) in zip(zip(ts, sets), zip(ts[1:], sets[1:])):
        assert hausdorff(a, b, delta) <= (t - s) + 2 * delta


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_matches_stepped_oracle(seed):
    g, sources, policy = random_setup(seed)
    f = simulate(g, sources, policy)
    oracle = SteppedFlooding(g, sources, dict(policy.weights), steps=2000)
    for t in np.linspace(0, g.total_length, 5):
        oracle.run_until(t)
        snap = oracle.snapshot()
        assert set_discrepancy(g, f.covered_at(t), snap, g.total_length / 300) <= 1e-6
        assert snap.measure() == pytest.approx(t, abs=1e-6)


def test_refinement_leaves_trace_consistent():
    # splitting a stage at an interior time keeps covered sets unchanged
    from floodings.flooding import Flooding, Stage
    g = generators.segment()
    f = simulate(g, [GraphPoint(0, 0.3)], uniform_policy)
    s = f.stages[0]
    mid = 0.5 * (s.t_start + s.t_end)
    second = tuple(type(a)(a.edge, a.position(mid - s.t_start), a.direction, a.rate) for a in s.arms)
    split = Flooding(g, f.sources, (Stage(s.t_start, mid, s.arms), Stage(mid, s.t_end, second)) + f.stages[1:])
    for t in np.linspace(0, 1, 11):
        assert hausdorff(split.covered_at(t), f.covered_at(t), 1e-3) <= 1e-12
    assert math.isclose(split.end_time, f.end_time)
