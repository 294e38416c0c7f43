import itertools
from collections import deque

import networkx as nx
import numpy as np
import pytest

from conftest import random_small_graphs
from sensornet.graph import (DegreeDistribution, GraphError, IdMap, betweenness, build_graph,
                             connected_components, degree_histogram, fit_power_law, generate_ba,
                             generate_er, ks_distance, read_edge_list, tv_distance, write_edge_list)


def test_duplicates_collapsed_and_counted():
    g, rep = build_graph([(0, 1), (1, 2), (0, 1)], "undirected", return_report=True)
    assert (g.node_count, g.edge_count) == (3, 2)
    assert rep.duplicates_dropped == 1


def test_reversed_duplicate_is_a_duplicate_when_undirected():
    g, rep = build_graph([(0, 1), (1, 0)], "undirected", return_report=True)
    assert g.edge_count == 1 and rep.duplicates_dropped == 1
    d, rep = build_graph([(0, 1), (1, 0)], "directed", return_report=True)
    assert d.edge_count == 2 and rep.duplicates_dropped == 0


def test_self_loop_dropped():
    g, rep = build_graph([(0, 0), (0, 1)], "directed", return_report=True)
    assert (g.node_count, g.edge_count, rep.self_loops_dropped) == (2, 1, 1)


def test_star_degrees(star):
    assert star.degrees().tolist() == [3, 1, 1, 1]


@pytest.mark.parametrize("edges", [[], [(-1, 2)], [(0, 2**41)]])
def test_bad_edge_lists(edges):
    with pytest.raises(GraphError):
        build_graph(edges, "undirected")


def test_degree_sums_and_symmetry():
    for g in random_small_graphs(30, 10, seed=1):
        assert g.degrees().sum() == 2 * g.edge_count
        for u in range(g.node_count):
            for v in g.out_neighbors(u):
                assert u in g.out_neighbors(v)
    for g in random_small_graphs(30, 10, seed=2, directed=True):
        assert g.degrees("out").sum() == g.edge_count == g.degrees("in").sum()


def test_histogram_matches_hand_count_exhaustively():
    # every graph on 4 labelled nodes
    pairs = list(itertools.combinations(range(4), 2))
    for mask in range(1, 2 ** len(pairs)):
        edges = [p for i, p in enumerate(pairs) if mask >> i & 1]
        g = build_graph(edges, "undirected", node_count=4)
        counts = [0] * 4
        for u, v in edges:
            counts[u] += 1
            counts[v] += 1
        dist = degree_histogram(g)
        for k in set(counts):
            assert dist.pmf(k) == pytest.approx(counts.count(k) / 4, abs=1e-12)
        assert dist.mu == pytest.approx(2 * len(edges) / 4, abs=1e-9)


def test_star_histogram(star):
    d = degree_histogram(star)
    assert d.support.tolist() == [1, 3]
    assert d.mass.tolist() == pytest.approx([0.75, 0.25])
    assert d.mu == pytest.approx(1.5)


def test_directed_two_cycle_in_degree():
    d = degree_histogram(build_graph([(0, 1), (1, 0)], "directed"), "in")
    assert d.support.tolist() == [1] and d.mass.tolist() == [1.0]


def test_mean_degree_is_twice_edges_over_nodes():
    g = generate_er(300, 0.05, seed=3)
    d = degree_histogram(g)
    assert abs(d.mu - 2 * g.edge_count / g.node_count) < 1e-9
    assert abs(d.mass.sum() - 1) < 1e-9


def test_distribution_moments_recompute():
    d = DegreeDistribution([2, 5, 9], [0.2, 0.5, 0.3])
    mu = 2 * 0.2 + 5 * 0.5 + 9 * 0.3
    assert d.mu == pytest.approx(mu, abs=1e-12)
    assert d.sigma2 == pytest.approx(sum(p * (k - mu) ** 2 for k, p in [(2, .2), (5, .5), (9, .3)]), abs=1e-12)
    with pytest.raises(GraphError):
        DegreeDistribution([1, 2], [0.5, 0.6])


def test_ks_and_tv():
    a = DegreeDistribution([1, 2], [0.5, 0.5])
    b = DegreeDistribution([1, 3], [0.25, 0.75])
    assert ks_distance(a, b) == pytest.approx(0.75)
    assert tv_distance(a, b) == pytest.approx(0.75)
    assert ks_distance(a, a) == 0.0


def test_ba_forced_attachment():
    g = generate_ba(6, 5, seed=0)
    assert sorted(g.out_neighbors(5).tolist()) == [0, 1, 2, 3, 4]
    assert g.edge_count == 5


def test_ba_edge_count_and_reproducible():
    g = generate_ba(2000, 5, seed=11)
    assert g.edge_count == (2000 - 5) * 5
    assert np.array_equal(g.edges(), generate_ba(2000, 5, seed=11).edges())
    assert not np.array_equal(g.edges(), generate_ba(2000, 5, seed=12).edges())
    assert np.all(g.degrees()[5:] >= 5)


def test_ba_tail_exponent():
    g = generate_ba(10_000, 5, seed=5)
    assert 2.5 <= fit_power_law(g.degrees(), 10) <= 3.5


def test_ba_rejects_bad_sizes():
    with pytest.raises(GraphError):
        generate_ba(5, 5, seed=0)


def test_power_law_fit_recovers_exponent():
    rng = np.random.default_rng(0)
    # continuous Pareto with alpha=2.5 rounded down still fits close on a high cutoff
    x = np.floor(10 * (1 - rng.random(200_000)) ** (-1 / 1.5))
    assert fit_power_law(x, 20) == pytest.approx(2.5, abs=0.1)


def test_components():
    tri = build_graph([(0, 1), (1, 2), (0, 2)], "undirected")
    r = connected_components(tri)
    assert (r.component_count, r.component_sizes, r.giant_fraction) == (1, [3], 1.0)
    r = connected_components(build_graph([(0, 1), (1, 2), (0, 2)], "undirected", node_count=4))
    assert r.component_sizes == [3, 1] and r.giant_fraction == 0.75
    cliques = [e for base in (0, 5) for e in itertools.combinations(range(base, base + 5), 2)]
    r = connected_components(build_graph(cliques, "undirected"))
    assert r.component_count == 2 and r.component_sizes == [5, 5]


def test_components_weak_for_directed():
    r = connected_components(build_graph([(0, 1), (2, 1)], "directed"))
    assert r.component_sizes == [3]


def test_component_sizes_sum():
    for g in random_small_graphs(40, 12, seed=4, p=0.15):
        assert sum(connected_components(g).component_sizes) == g.node_count


def test_betweenness_examples(path3, star):
    assert betweenness(path3) == {0: 0.0, 1: 1.0, 2: 0.0}
    k4 = build_graph(list(itertools.combinations(range(4), 2)), "undirected")
    assert set(betweenness(k4).values()) == {0.0}
    assert betweenness(star) == {0: 3.0, 1: 0.0, 2: 0.0, 3: 0.0}


def _brute_betweenness(g):
    """Pair-by-pair path counting: sigma_st(v) = sigma_sv * sigma_vt when v lies on a geodesic."""
    n = g.node_count
    dist = [[None] * n for _ in range(n)]
    sigma = [[0] * n for _ in range(n)]
    for s in range(n):
        dist[s][s], sigma[s][s] = 0, 1
        q = deque([s])
        while q:
            v = q.popleft()
            for w in g.out_neighbors(v).tolist():
                if dist[s][w] is None:
                    dist[s][w] = dist[s][v] + 1
                    q.append(w)
                if dist[s][w] == dist[s][v] + 1:
                    sigma[s][w] += sigma[s][v]
    score = [0.0] * n
    for s, t in itertools.permutations(range(n), 2):
        if dist[s][t] is None:
            continue
        for v in range(n):
            if v in (s, t) or dist[s][v] is None or dist[v][t] is None:
                continue
            if dist[s][v] + dist[v][t] == dist[s][t]:
                score[v] += sigma[s][v] * sigma[v][t] / sigma[s][t]
    if not g.directed:
        score = [x / 2 for x in score]
    return score


@pytest.mark.parametrize("directed", [False, True])
def test_betweenness_matches_brute_force(directed):
    for g in random_small_graphs(40, 8, seed=7 + directed, directed=directed):
        got = betweenness(g)
        want = _brute_betweenness(g)
        assert [got[v] for v in range(g.node_count)] == pytest.approx(want, abs=1e-9)


def test_betweenness_agrees_with_networkx_on_ba():
    g = generate_ba(200, 3, seed=1)
    ref = nx.betweenness_centrality(nx.Graph(g.edges().tolist()), normalized=False)
    got = betweenness(g)
    assert all(abs(got[v] - ref[v]) < 1e-6 for v in ref)


def test_betweenness_cap():
    with pytest.raises(GraphError, match="subsample"):
        betweenness(generate_ba(50, 2, seed=0), cap=10)


def test_edge_file_roundtrip(tmp_path):
    f = tmp_path / "edges.tsv"
    f.write_text("# follows\nalice\tbob\nbob\tcarol\nalice\tbob\ncarol\tcarol\n", encoding="utf-8")
    g, ids, rep = read_edge_list(f, "directed")
    assert (g.node_count, g.edge_count) == (3, 2)
    assert (rep.duplicates_dropped, rep.self_loops_dropped) == (1, 1)
    assert g.has_edge(ids["alice"], ids["bob"]) and not g.has_edge(ids["bob"], ids["alice"])
    ids.save(tmp_path / "ids.tsv")
    again = IdMap.load(tmp_path / "ids.tsv")
    assert [again.external(i) for i in range(3)] == ["alice", "bob", "carol"]
    write_edge_list(g, tmp_path / "out.tsv", ids)
    g2, _, _ = read_edge_list(tmp_path / "out.tsv", "directed", IdMap.load(tmp_path / "ids.tsv"))
    assert np.array_equal(g2.edges(), g.edges())


def test_subgraph():
    g = build_graph([(0, 1), (1, 2), (2, 3), (3, 0)], "directed")
    sub, ids = g.subgraph([0, 1, 3])
    assert ids.tolist() == [0, 1, 3]
    assert sorted(map(tuple, sub.edges().tolist())) == [(0, 1), (2, 0)]
