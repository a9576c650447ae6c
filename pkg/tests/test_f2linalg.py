import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from rwiso.f2linalg import (
    F2Matrix,
    Graph,
    VertexSet,
    cut_matrix,
    cut_rank,
    cut_rank_mask,
    f2_rank,
    f2_rank_rows,
)
from oracles import complete_graph, cycle_graph, path_graph, random_graph, span_rank


def test_rank_identity():
    assert f2_rank(F2Matrix.from_lists([[1, 0], [0, 1]])) == 2


def test_rank_zero_matrix():
    assert f2_rank(F2Matrix.from_lists([[0, 0, 0]] * 3)) == 0


def test_rank_repeated_row():
    assert f2_rank(F2Matrix.from_lists([[1, 1], [1, 1]])) == 1


@given(st.lists(st.integers(min_value=0, max_value=2**10 - 1), max_size=8))
def test_rank_matches_span_oracle(rows):
    assert f2_rank_rows(rows) == span_rank(rows)


@given(st.lists(st.integers(min_value=0, max_value=2**8 - 1), max_size=8))
def test_rank_transpose(rows):
    m = F2Matrix(tuple(rows), 8)
    assert f2_rank(m) == f2_rank(m.transpose())


def test_cut_matrix_path():
    g = path_graph(3)  # 0 - 1 - 2
    m = cut_matrix(g, VertexSet.of([1], 3), VertexSet.of([0, 2], 3))
    assert m.to_lists() == [[1, 1]]


def test_cut_matrix_empty_rows():
    g = path_graph(3)
    m = cut_matrix(g, VertexSet.empty(3), VertexSet.of([0, 2], 3))
    assert m.nrows() == 0 and m.ncols == 2


def test_cut_matrix_k4_block():
    g = complete_graph(4)
    m = cut_matrix(g, VertexSet.of([0, 1], 4), VertexSet.of([2, 3], 4))
    assert m.to_lists() == [[1, 1], [1, 1]]


def test_cut_matrix_rejects_overlap():
    g = path_graph(3)
    with pytest.raises(ValueError):
        cut_matrix(g, VertexSet.of([0, 1], 3), VertexSet.of([1, 2], 3))


def test_cut_rank_empty_set():
    for g in (path_graph(4), complete_graph(5)):
        assert cut_rank(g, VertexSet.empty(g.n)) == 0


def test_cut_rank_complete_graphs():
    # every proper nonempty side of a complete graph gives an all-ones
    # matrix, so the rank is 1
    for n in range(2, 8):
        g = complete_graph(n)
        for mask in range(1, (1 << n) - 1):
            assert cut_rank_mask(g, mask) == 1


def test_cut_rank_c5_adjacent_pair():
    g = cycle_graph(5)
    x = VertexSet.of([0, 1], 5)
    # frozen from the span oracle on the 2x3 biadjacency matrix
    m = cut_matrix(g, x, x.complement())
    assert span_rank(m.rows) == 2
    assert cut_rank(g, x) == 2


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=40)
def test_cut_rank_symmetry(seed):
    rng = random.Random(seed)
    g = random_graph(rng.randint(1, 9), rng.random(), rng)
    mask = rng.randrange(1 << g.n)
    full = (1 << g.n) - 1
    assert cut_rank_mask(g, mask) == cut_rank_mask(g, full ^ mask)


def _check_submodular_posimodular(g: Graph, pairs):
    for x, y in pairs:
        rx = cut_rank_mask(g, x)
        ry = cut_rank_mask(g, y)
        assert rx + ry >= cut_rank_mask(g, x & y) + cut_rank_mask(g, x | y)
        assert rx + ry >= cut_rank_mask(g, x & ~y) + cut_rank_mask(g, y & ~x)


def test_submodularity_exhaustive_small():
    rng = random.Random(7)
    for n in (4, 5):
        g = random_graph(n, 0.5, rng)
        pairs = itertools.product(range(1 << n), repeat=2)
        _check_submodular_posimodular(g, pairs)


def test_submodularity_exhaustive_n8():
    g = random_graph(8, 0.5, random.Random(20240817))
    pairs = itertools.product(range(1 << 8), repeat=2)
    _check_submodular_posimodular(g, pairs)


def test_submodularity_random_n12():
    rng = random.Random(99)
    g = random_graph(12, 0.4, rng)
    pairs = [
        (rng.randrange(1 << 12), rng.randrange(1 << 12)) for _ in range(2000)
    ]
    _check_submodular_posimodular(g, pairs)


def test_vertex_set_operations():
    a = VertexSet.of([0, 2], 4)
    b = VertexSet.of([2, 3], 4)
    assert (a | b).elements() == (0, 2, 3)
    assert (a & b).elements() == (2,)
    assert (a - b).elements() == (0,)
    assert a.complement().elements() == (1, 3)
    assert a.complement().complement() == a
    assert len(a) == 2 and 2 in a and 1 not in a
    assert VertexSet.of([0], 4) < a <= a


def test_vertex_set_rejects_mixed_ground_sets():
    with pytest.raises(ValueError):
        VertexSet.of([0], 3).union(VertexSet.of([0], 4))


def test_graph_validation():
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 0)])
    with pytest.raises(ValueError):
        Graph(2, (0b10, 0b00))  # asymmetric
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 5)])


def test_graph_relabel_roundtrip():
    g = cycle_graph(5)
    perm = [2, 0, 4, 1, 3]
    h = g.relabel(perm)
    for u, v in g.edges():
        assert h.has_edge(perm[u], perm[v])
    assert h.edge_count() == g.edge_count()


def test_complement_graph():
    g = path_graph(4)
    h = g.complement_graph()
    for u in range(4):
        for v in range(u + 1, 4):
            assert h.has_edge(u, v) == (not g.has_edge(u, v))
