import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodings import generators
from floodings.entropy import beta
from floodings.errors import BudgetExhausted, NotATree, PartsMismatch, TooLarge
from floodings.labeling import (Labeling, binary_tree_adjacency, cycle_adjacency, empirical_flooding,
                                enumerate_by_peak_count, enumerate_labelings, find_peaks,
                                iter_labelings_with_peaks, log_multinomial_asymptotic, multinomial_count,
                                occupancy_lln_check, path_adjacency, peak_location_counts, peak_mask,
                                peak_ratio_check, sample_conditioned, sample_uniform, star_adjacency)
from floodings.metric_graph import subdivide

seeds = st.integers(0, 10_000)


def test_find_peaks_examples():
    path = path_adjacency(3)
    assert find_peaks(path, Labeling((1, 3, 2))) == {1}
    assert find_peaks(path, Labeling((2, 1, 3))) == {0, 2}


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), seeds)
def test_peaks_contain_global_max_and_are_independent(n, seed):
    adj = cycle_adjacency(n) if n >= 3 and seed % 2 else path_adjacency(n)
    labels = np.random.default_rng(seed).permutation(n) + 1
    lab = Labeling(tuple(int(x) for x in labels))
    peaks = find_peaks(adj, lab)
    assert lab.R[-1] in peaks
    assert all(u not in adj[v] for v in peaks for u in peaks)


def test_labeling_inverse():
    lab = Labeling.from_order([2, 0, 1])
    assert lab.labels == (2, 1, 3)
    assert lab.R == (1, 0, 2)


def test_enumeration_examples():
    path = path_adjacency(3)
    assert enumerate_by_peak_count(path, 1) == 4
    assert enumerate_by_peak_count(path, 2) == 2
    assert sum(1 for _ in iter_labelings_with_peaks(path, 2)) == 2
    # one peak on a tree: labelings are N! / prod over the root's subtree sizes, summed over roots
    star = star_adjacency(3)
    assert enumerate_by_peak_count(star, 1) == 24 // 4 + 3 * (24 // (4 * 3))
    with pytest.raises(TooLarge):
        enumerate_labelings(path_adjacency(13))


def test_rejection_acceptance_matches_enumeration():
    res = sample_conditioned(path_adjacency(3), 1, 20_000, seed=1)
    p = 4 / 6
    sigma = math.sqrt(p * (1 - p) / res.draws)
    assert abs(res.acceptance_rate - p) <= 3 * sigma
    assert (peak_mask(path_adjacency(3), res.labels).sum(axis=1) == 1).all()


def test_star_single_peak_locations_match_enumeration():
    star = star_adjacency(3)
    ex = enumerate_labelings(star)
    res = sample_conditioned(star, 1, 20_000, seed=2)
    expected = ex.peak_location[1] / ex.by_peak_count[1]
    freq = peak_location_counts(res, star) / len(res.labels)
    sigma = np.sqrt(expected * (1 - expected) / len(res.labels))
    assert (np.abs(freq - expected) <= 3 * sigma).all()


def test_tree_sampler_matches_enumeration():
    tree = binary_tree_adjacency(2)
    ex = enumerate_labelings(tree)
    res = sample_conditioned(tree, 1, 20_000, seed=3, method="tree")
    assert res.method == "tree"
    assert (peak_mask(tree, res.labels).sum(axis=1) == 1).all()
    expected = ex.peak_location[1] / ex.by_peak_count[1]
    freq = peak_location_counts(res, tree) / len(res.labels)
    sigma = np.sqrt(expected * (1 - expected) / len(res.labels))
    assert (np.abs(freq - expected) <= 3 * sigma + 1e-12).all()


def test_sampling_is_reproducible_across_jobs():
    adj = path_adjacency(6)
    a = sample_conditioned(adj, 2, 3000, seed=5, jobs=1)
    b = sample_conditioned(adj, 2, 3000, seed=5, jobs=3)
    assert np.array_equal(a.labels, b.labels) and a.draws == b.draws
    assert np.array_equal(sample_uniform(adj, 2000, seed=5), sample_uniform(adj, 2000, seed=5))


def test_budget_exhausted_reports_draws():
    with pytest.raises(BudgetExhausted) as info:
        sample_conditioned(path_adjacency(9), 5, 100, seed=0, budget=2000)
    assert info.value.draws <= 2000


def test_peak_ratio_examples():
    r = peak_ratio_check(path_adjacency(4), 1, 0)
    assert r.exact and r.descendant_ratio == 3 and r.odds == 3
    sym = peak_ratio_check(path_adjacency(4), 1, 2)
    assert sym.odds == 1 and sym.equal
    center = peak_ratio_check(path_adjacency(5), 2, 1)
    assert center.descendant_ratio == Fraction(3, 2) and center.odds == Fraction(3, 2)
    with pytest.raises(NotATree):
        peak_ratio_check(cycle_adjacency(4), 0, 1)


def test_multinomial_examples():
    assert multinomial_count(4, [2, 2]) == 6
    assert multinomial_count(7, [7]) == 1
    assert multinomial_count(10, [3, 3, 4]) == 4200
    with pytest.raises(PartsMismatch):
        multinomial_count(5, [2, 2])


def test_multinomial_asymptotics():
    lead = log_multinomial_asymptotic(1000, [0.5, 0.5])
    assert lead == pytest.approx(1000 * math.log(2))
    exact = math.log(multinomial_count(1000, [500, 500]))
    assert exact == pytest.approx(689.4672, abs=1e-3)
    assert abs(exact - lead) <= 3 * math.log(1000)
    assert log_multinomial_asymptotic(50, [2.0]) == 0.0
    assert log_multinomial_asymptotic(100, [1, 1, 1]) == pytest.approx(300 * math.log(3))


def test_occupancy_law_of_large_numbers():
    rng = np.random.default_rng(0)
    assert occupancy_lln_check(50, [50], rng) <= 1
    N, eps = 10_000, 0.05
    devs = [occupancy_lln_check(N, [N // 2, N // 2], rng, grid=np.linspace(0, 1, 101)) for _ in range(200)]
    assert np.mean(np.array(devs) <= eps * N) >= 1 - eps
    assert occupancy_lln_check(N, [3000, 7000], rng, grid=[1.0]) == 0.0


def _alternating_from_middle(sub):
    chain = sub.chains[0]
    mid = len(chain) // 2
    order = [chain[mid]]
    for d in range(1, mid + 1):
        order += [chain[mid - d], chain[mid + d]]
    return Labeling.from_order(order)


def test_empirical_flooding_examples():
    seg = generators.segment()
    sub = subdivide(seg, 4)
    ef = empirical_flooding(sub, _alternating_from_middle(sub))
    f = ef.flooding
    assert f.end_time == pytest.approx(1.0, abs=1e-9)
    assert ef.peaks == [sub.chains[0][2]]
    # two arms leave the midpoint; each grows within one sub-edge of an even split
    first = f.stages[0]
    assert len(first.arms) == 2 and all(arm.offset == pytest.approx(0.5) for arm in first.arms)
    h = sub.sub_lengths[0]
    assert all(abs(z * first.duration - first.duration / 2) <= h + 1e-12 for z in first.rates)

    chain = sub.chains[0]
    one_way = empirical_flooding(sub, Labeling.from_order(chain))
    assert beta(one_way.flooding).beta == 0.0
    assert one_way.flooding.covered_at(1.0).is_full()


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 6))
def test_empirical_flooding_invariants(seed, n):
    rng = np.random.default_rng(seed)
    g = generators.random_graph(rng, int(rng.integers(2, 6)), int(rng.integers(0, 3)))
    sub = subdivide(g, n)
    lab = Labeling(tuple(int(x) for x in rng.permutation(sub.N) + 1))
    ef = empirical_flooding(sub, lab)
    times = [s.t_end for s in ef.flooding.stages]
    assert all(b > a for a, b in zip(times, times[1:]))
    assert ef.flooding.end_time == pytest.approx(g.total_length, abs=1e-9)
    assert ef.event_indices == sorted(ef.event_indices)
    for s in ef.flooding.stages:
        assert s.rates.sum() == pytest.approx(1.0, abs=1e-12)
    assert len(ef.peaks) == len(find_peaks(sub.adjacency, lab))
