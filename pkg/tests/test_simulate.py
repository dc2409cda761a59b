import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from fastsir.analysis import chi_square_gof
from fastsir.distributions import EpidemicParams, table_for_degrees
from fastsir.graph import (Network, generate_m_ary_tree, generate_scale_free, generate_test_graph,
                           reachable_from)
from fastsir.simulate import (RngStream, SimCounters, TableMismatchError, run_fast, run_naive,
                              sample_infection_count, sample_subset, simulate_batch)

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def _reference_doubles(master, index, count):
    x = _mix((_mix(master) + (index + 1) * GOLDEN) & MASK)
    s = []
    for _ in range(4):
        x = (x + GOLDEN) & MASK
        s.append(_mix(x))
    rotl = lambda v, k: ((v << k) | (v >> (64 - k))) & MASK
    out = []
    for _ in range(count):
        result = (rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]; s[3] ^= s[1]; s[1] ^= s[2]; s[0] ^= s[3]; s[2] ^= t
        s[3] = rotl(s[3], 45)
        out.append((result >> 11) * 2.0 ** -53)
    return out


@pytest.mark.parametrize("master,index", [(0, 0), (42, 7), (MASK, 123456)])
def test_rng_matches_reference(master, index):
    assert RngStream(master, index).randoms(50).tolist() == _reference_doubles(master, index, 50)


def test_rng_streams_differ_and_repeat():
    a = RngStream(1, 0).randoms(1000)
    assert np.array_equal(a, RngStream(1, 0).randoms(1000))
    b = RngStream(1, 1).randoms(1000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.1
    with pytest.raises(ValueError):
        RngStream(-1)


def _path3_table(p, q):
    return table_for_degrees(EpidemicParams(p, q), [1, 2])


def test_p_zero_infects_only_seed():
    net = generate_test_graph("complete", 6)
    params = EpidemicParams(0.0, 0.4)
    table = table_for_degrees(params, [5])
    for run in (lambda r: run_naive(net, params, [2], r), lambda r: run_fast(net, params, table, [2], r)):
        out = run(RngStream(3))
        assert out.total_infected == 1 and out.recovered_nodes().tolist() == [2]


def test_p_one_floods_connected_graph():
    net = generate_m_ary_tree(3, 3)
    params = EpidemicParams(1.0, 0.3)
    table = table_for_degrees(params, np.unique(net.degrees))
    assert run_naive(net, params, [0], RngStream(0)).total_infected == net.node_count
    assert run_fast(net, params, table, [0], RngStream(0)).total_infected == net.node_count


@pytest.mark.parametrize("algorithm", ["naive", "fast"])
def test_path_of_three_distribution(algorithm):
    net = generate_test_graph("path", 3)
    params = EpidemicParams(0.5, 1.0)
    totals, _, _ = simulate_batch(net, params, [1], algorithm, 9, 0, 100_000, _path3_table(0.5, 1.0))
    freq = np.bincount(totals, minlength=4)[1:] / totals.size
    assert freq == pytest.approx([0.25, 0.5, 0.25], abs=0.01)


def test_inverse_transform_convention():
    row = [0.25, 0.75, 1.0]
    assert [sample_infection_count(row, r) for r in (0.0, 0.5, 0.75, 0.999)] == [0, 1, 2, 2]
    with pytest.raises(ValueError):
        sample_infection_count([0.2, 0.9], 0.5)
    with pytest.raises(ValueError):
        sample_infection_count(row, 1.0)


def test_subset_edges():
    rng = RngStream(0)
    assert sample_subset(5, 0, rng) == frozenset()
    assert sample_subset(5, 5, rng) == frozenset(range(5))
    with pytest.raises(ValueError):
        sample_subset(5, 6, rng)


def test_two_subsets_of_four_uniform():
    rng = RngStream(77)
    counts = dict.fromkeys(itertools.combinations(range(4), 2), 0)
    for _ in range(60_000):
        counts[tuple(sorted(sample_subset(4, 2, rng)))] += 1
    assert chisquare(list(counts.values())).pvalue >= 0.001


@given(st.integers(0, 60), st.data())
def test_subset_draw_count(k, data):
    k1 = data.draw(st.integers(0, k))
    c = SimCounters()
    s = sample_subset(k, k1, RngStream(data.draw(st.integers(0, 1000))), c)
    assert len(s) == k1 and all(0 <= i < k for i in s)
    assert c.rng_draws == min(k1, k - k1)


def test_seed_validation():
    net = generate_test_graph("path", 3)
    with pytest.raises(IndexError):
        run_naive(net, EpidemicParams(0.5, 0.5), [3], RngStream(0))
    with pytest.raises(ValueError):
        run_naive(net, EpidemicParams(0.5, 0.5), [], RngStream(0))


def test_table_mismatch():
    net = generate_test_graph("star", 5)
    params = EpidemicParams(0.5, 0.5)
    with pytest.raises(TableMismatchError, match="degree 4"):
        run_fast(net, params, table_for_degrees(params, [1, 3]), [0], RngStream(0))
    with pytest.raises(TableMismatchError):
        run_fast(net, params, table_for_degrees(EpidemicParams(0.4, 0.5), [1, 4]), [0], RngStream(0))


@pytest.mark.parametrize("algorithm", ["naive", "fast"])
def test_batch_equals_single_runs(algorithm):
    net = generate_scale_free(500, seed=1)
    params = EpidemicParams(0.3, 0.4)
    table = table_for_degrees(params, np.unique(net.degrees))
    seed = net.max_degree_node()
    totals, durations, counters = simulate_batch(net, params, [seed], algorithm, 5, 10, 20, table)
    work = SimCounters()
    for i in range(20):
        rng = RngStream(5, 10 + i)
        out = (run_naive(net, params, [seed], rng) if algorithm == "naive"
               else run_fast(net, params, table, [seed], rng))
        assert (out.total_infected, out.duration) == (totals[i], durations[i])
        work.dequeues += out.counters.dequeues
        work.rng_draws += out.counters.rng_draws
    assert (work.dequeues, work.rng_draws) == (counters.dequeues, counters.rng_draws)


random_graphs = st.lists(st.tuples(st.integers(0, 14), st.integers(0, 14)), min_size=1, max_size=40)


@given(random_graphs, st.floats(0.0, 1.0), st.floats(0.05, 1.0), st.integers(0, 2**32), st.integers(0, 14))
def test_determinism_reachability_and_counters(edges, p, q, master, seed):
    net = Network.from_edges([(u, v) for u, v in edges if u != v], node_count=15)
    params = EpidemicParams(p, q)
    table = table_for_degrees(params, np.unique(net.degrees))
    reach = reachable_from(net, [seed])
    for run in (lambda r: run_naive(net, params, [seed], r),
                lambda r: run_fast(net, params, table, [seed], r)):
        a, b = run(RngStream(master, 3)), run(RngStream(master, 3))
        assert a == b
        mask = a.recovered_mask()
        assert a.total_infected == mask.sum() >= 1
        assert not np.any(mask & ~reach)
    fast = run_fast(net, params, table, [seed], RngStream(master, 4))
    assert fast.counters.dequeues == fast.total_infected


def test_naive_dequeues_scale_with_one_over_q():
    net = generate_scale_free(2000, seed=3)
    for q in (0.1, 0.5, 1.0):
        params = EpidemicParams(0.2, q)
        totals, _, c = simulate_batch(net, params, [net.max_degree_node()], "naive", 1, 0, 200)
        ratio = c.dequeues / totals.sum()
        assert ratio == pytest.approx(1 / q, rel=0.05)


def test_multiple_seeds_are_generation_zero():
    net = generate_test_graph("path", 5)
    params = EpidemicParams(0.0, 1.0)
    out = run_naive(net, params, [0, 4, 4], RngStream(0))
    assert out.total_infected == 2 and out.duration == 1


def _mean(net, p, q, alg, reps=100_000):
    params = EpidemicParams(p, q)
    table = table_for_degrees(params, np.unique(net.degrees))
    t, _, _ = simulate_batch(net, params, [0], alg, 21, 0, reps, table)
    return t.mean(), t.std() / math.sqrt(reps)


@pytest.mark.parametrize("alg", ["naive", "fast"])
def test_monotone_in_p_and_q(alg):
    net = generate_test_graph("cycle", 6)
    grid = [0.2, 0.5, 0.8]
    for q in grid:
        means = [_mean(net, p, q, alg) for p in grid]
        for (m0, s0), (m1, s1) in zip(means, means[1:]):
            assert m1 >= m0 - 3 * math.hypot(s0, s1)
    for p in grid:
        means = [_mean(net, p, q, alg) for q in grid]
        for (m0, s0), (m1, s1) in zip(means, means[1:]):
            assert m1 <= m0 + 3 * math.hypot(s0, s1)


@pytest.mark.parametrize("p,q", [(0.3, 1.0), (0.3, 0.3)])
def test_medium_graph_two_sample(p, q):
    net = generate_scale_free(1000, exponent=2.5, min_degree=1, seed=8)
    params = EpidemicParams(p, q)
    table = table_for_degrees(params, np.unique(net.degrees))
    seed = net.max_degree_node()
    hists = []
    for alg in ("naive", "fast"):
        t, _, _ = simulate_batch(net, params, [seed], alg, 2, 0, 20_000, table)
        v, c = np.unique(t, return_counts=True)
        hists.append(dict(zip(v.tolist(), c.tolist())))
    assert chi_square_gof(hists[0], hists[1], alpha=0.001).passed
