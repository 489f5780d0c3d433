import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cliquemc import graph_model as gm
from cliquemc.errors import InvalidParameterError


def test_planted_all_vertices_gives_complete_graph():
    g = gm.generate(4, 4, 123)
    assert g.adjacency.sum() == 12
    assert g.planted == {0, 1, 2, 3}


def test_k_equals_n_degrees():
    g = gm.generate(10, 10, 9)
    assert np.all(g.degrees() == 9)


def test_k_above_n_rejected():
    with pytest.raises(InvalidParameterError):
        gm.generate(5, 6, 0)
    with pytest.raises(InvalidParameterError):
        gm.generate(0, 0, 0)


def test_edge_frequency_three_vertices():
    hits = 0
    trials = 100_000
    for s in range(trials):
        g = gm.generate(3, 0, s)
        hits += int(g.adjacency[0, 1]) + int(g.adjacency[0, 2]) + int(g.adjacency[1, 2])
    assert abs(hits / (3 * trials) - 0.5) < 0.01


def test_edge_marginals_outside_plant_within_three_se():
    n, k, reps = 30, 6, 400
    total_pairs = 0
    total_edges = 0
    for s in range(reps):
        g = gm.generate(n, k, 10_000 + s)
        p = set(g.planted)
        iu = np.triu_indices(n, 1)
        outside = np.array([not (a in p and b in p) for a, b in zip(*iu)])
        total_pairs += outside.sum()
        total_edges += g.adjacency[iu][outside].sum()
    freq = total_edges / total_pairs
    se = math.sqrt(0.25 / total_pairs)
    assert total_pairs >= 10_000
    assert abs(freq - 0.5) < 3 * se


@given(n=st.integers(1, 40), k=st.integers(0, 40), seed=st.integers(0, 2**64 - 1))
def test_generate_invariants_and_determinism(n, k, seed):
    k = min(k, n)
    g = gm.generate(n, k, seed)
    a = g.adjacency
    assert np.array_equal(a, a.T)
    assert not np.any(np.diag(a))
    assert len(g.planted) == k
    assert g.is_clique(g.planted)
    assert g == gm.generate(n, k, seed)


def test_adjacency_read_only():
    g = gm.generate(8, 2, 1)
    with pytest.raises(ValueError):
        g.adjacency[0, 1] = True


def test_from_adjacency_validation():
    with pytest.raises(InvalidParameterError):
        gm.from_adjacency(np.ones((3, 3), dtype=bool))
    asym = np.zeros((3, 3), dtype=bool)
    asym[0, 1] = True
    with pytest.raises(InvalidParameterError):
        gm.from_adjacency(asym)
    with pytest.raises(InvalidParameterError):
        gm.from_adjacency(np.zeros((3, 3), dtype=bool), planted=[0, 1])


# --- VertexSet ------------------------------------------------------------


@given(st.sets(st.integers(0, 99)), st.sets(st.integers(0, 99)))
def test_vertex_set_matches_python_sets(a, b):
    va, vb = gm.VertexSet.of(100, a), gm.VertexSet.of(100, b)
    assert len(va) == len(a)
    assert list(va) == sorted(a)
    assert (va & vb) == a & b
    assert (va | vb) == a | b
    assert (va - vb) == a - b
    assert va.issubset(va | vb)
    for v in (0, 50, 99):
        assert (v in va) == (v in a)
        assert va.toggle(v) == (a ^ {v})


def test_vertex_set_rejects_out_of_range():
    with pytest.raises(InvalidParameterError):
        gm.VertexSet.of(4, [4])


# --- common neighbours ---------------------------------------------------------


def test_common_neighbors_empty_is_everything():
    g = gm.generate(9, 2, 3)
    assert gm.common_neighbors(g, gm.VertexSet(9)) == set(range(9))


def test_common_neighbors_k4():
    g = gm.generate(4, 4, 0)
    assert gm.common_neighbors(g, gm.VertexSet.of(4, [0, 1])) == {2, 3}


@given(seed=st.integers(0, 10_000), data=st.data())
def test_common_neighbors_brute_force(seed, data):
    g = gm.generate(12, 3, seed)
    u = data.draw(st.sets(st.integers(0, 11), max_size=4))
    got = gm.common_neighbors(g, gm.VertexSet.of(12, u))
    want = {v for v in range(12) if v not in u and all(g.adjacency[x, v] for x in u)}
    assert got == want


@given(seed=st.integers(0, 10_000))
def test_common_neighbor_extends_clique(seed):
    g = gm.generate(14, 4, seed)
    graph = nx.from_numpy_array(g.adjacency.astype(int))
    for c in nx.enumerate_all_cliques(graph):
        cs = gm.VertexSet.of(14, c)
        for v in gm.common_neighbors(g, cs):
            assert g.is_clique(cs.toggle(v))
        if len(c) > 3:
            break


# --- expansion -------------------------------------------------------------------


def test_expansion_complete_graph():
    g = gm.generate(8, 8, 0)
    rep = gm.check_expansion(g, 0.5)
    assert rep.ok and rep.exhaustive
    assert rep.violation_count == 0
    # window is sizes 0..1: the empty clique gives 8/8, singletons 7 * 2 / 8
    assert rep.max_size == 1 and rep.cliques_checked == 9
    assert rep.min_ratio == 1.0 and rep.min_ratio_size == 0


def test_expansion_isolated_vertex_flagged():
    adj = np.zeros((4, 4), dtype=bool)
    for a, b in [(0, 1), (1, 2), (0, 2)]:
        adj[a, b] = adj[b, a] = True
    g = gm.from_adjacency(adj)
    rep = gm.check_expansion(g, 0.5)
    assert not rep.ok
    assert (3,) in rep.violations


def test_expansion_zero_budget_rejected():
    g = gm.generate(8, 0, 0)
    with pytest.raises(InvalidParameterError):
        gm.check_expansion(g, 0.5, sample_budget=0)
    with pytest.raises(InvalidParameterError):
        gm.check_expansion(g, 1.5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_expansion_matches_networkx_oracle(seed):
    n, eta = 48, 0.2
    g = gm.generate(n, 0, seed)
    max_size = gm.log2_size_ceiling(n, eta)
    rep = gm.check_expansion(g, eta, store_violations=10_000)
    graph = nx.from_numpy_array(g.adjacency.astype(int))
    nbrs = [set(graph[v]) for v in range(n)]
    bad = []
    best = math.inf
    checked = 0
    for c in nx.enumerate_all_cliques(graph):
        if len(c) > max_size:
            break
        checked += 1
        common = set(range(n)).intersection(*(nbrs[v] for v in c)) - set(c) if c else set(range(n))
        best = min(best, len(common) * 2 ** len(c) / n)
        if len(common) * 20 * 2 ** len(c) < n:
            bad.append(tuple(sorted(c)))
    assert rep.cliques_checked == checked + 1  # the kernel also counts the empty clique
    assert rep.violation_count == len(bad)
    assert sorted(rep.violations) == sorted(bad)
    assert rep.min_ratio == pytest.approx(min(best, 1.0))


def test_expansion_sampled_fallback_reports_non_exhaustive():
    g = gm.generate(256, 0, 4)
    rep = gm.check_expansion(g, 0.2, node_budget=100, fallback_samples=50)
    assert not rep.exhaustive
    assert rep.cliques_checked > 0


def test_expansion_sampled_mode_finds_isolated_vertex():
    adj = np.zeros((4, 4), dtype=bool)
    g = gm.from_adjacency(adj)
    rep = gm.check_expansion(g, 0.5, sample_budget=20)
    assert not rep.exhaustive and rep.violation_count > 0


def test_size_ceiling():
    assert gm.log2_size_ceiling(1024, 0.3) == 7
    assert gm.log2_size_ceiling(256, 0.5) == 4
    assert gm.log2_size_ceiling(64, 0.5) == 3


# --- degree baseline ------------------------------------------------------------------


def test_top_k_complete():
    g = gm.generate(7, 7, 2)
    b = gm.top_k_degrees(g)
    assert b.vertices == set(range(7)) and b.overlap == 7


def test_top_k_zero_is_empty():
    g = gm.generate(7, 0, 2)
    assert len(gm.top_k_degrees(g).vertices) == 0


def test_top_k_single_planted_and_ties():
    g = gm.generate(30, 1, 8)
    b = gm.top_k_degrees(g)
    deg = g.degrees()
    (v,) = list(b.vertices)
    assert deg[v] == deg.max() and v == int(np.flatnonzero(deg == deg.max())[0])
    assert b.overlap in (0, 1)
    path = gm.from_adjacency(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool))
    assert gm.top_k_degrees(path, 2).vertices == {0, 1}


def test_top_k_recovers_large_plant():
    n = 4096
    k = int(math.floor(n**0.75))
    assert k == 512
    overlaps = [gm.top_k_degrees(gm.generate(n, k, s)).overlap for s in range(20)]
    assert np.mean(overlaps) >= 0.9 * k


# --- serialization ----------------------------------------------------------------------


def test_serialization_format_by_hand():
    adj = np.zeros((5, 5), dtype=bool)
    for a, b in [(0, 1), (0, 4), (1, 4), (2, 3)]:
        adj[a, b] = adj[b, a] = True
    g = gm.from_adjacency(adj, planted=[0, 1, 4], seed=42)
    lines = gm.dumps(g).splitlines()
    assert lines[0] == "pcgraph v1 n=5 k=3 seed=42"
    assert lines[1] == "0 1 4"
    # row 0 = 2^1 + 2^4 = 0x12, two hex digits for n = 5
    assert lines[2:] == ["12", "11", "08", "04", "03"]


@given(n=st.integers(1, 70), k=st.integers(0, 70), seed=st.integers(0, 2**64 - 1))
def test_serialization_round_trip(n, k, seed):
    g = gm.generate(n, min(k, n), seed)
    h = gm.loads(gm.dumps(g))
    assert h == g and h.seed == seed
    assert gm.dumps(h) == gm.dumps(g)


def test_loads_rejects_garbage(tmp_path):
    with pytest.raises(InvalidParameterError):
        gm.loads("hello")
    g = gm.generate(6, 2, 1)
    text = gm.dumps(g).replace(f"k=2", "k=3")
    with pytest.raises(InvalidParameterError):
        gm.loads(text)
    gm.save(g, tmp_path / "g.txt")
    assert gm.load(tmp_path / "g.txt") == g
