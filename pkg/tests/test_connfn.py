import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from rwiso.connfn import (
    ConnFn,
    Contraction,
    contract,
    free_set,
    kappa_min,
    kappa_min_mask,
    submasks,
)
from rwiso.f2linalg import VertexSet, cut_rank_mask
from oracles import (
    brute_min_separations,
    complete_graph,
    cycle_graph,
    path_graph,
    random_graph,
    subsets_between,
)


def vs(elements, n):
    return VertexSet.of(elements, n)


def test_submasks_enumeration():
    assert sorted(submasks(0b101)) == [0b000, 0b001, 0b100, 0b101]
    assert list(submasks(0)) == [0]


def test_kappa_min_k3():
    conn = ConnFn.from_graph(complete_graph(3))
    q = kappa_min(conn, vs([0], 3), vs([1], 3))
    assert q.order == 1
    assert q.leftmost == vs([0], 3)
    assert q.rightmost == vs([0, 2], 3)


def test_kappa_min_no_slack():
    conn = ConnFn.from_graph(path_graph(4))
    x, y = vs([0, 1], 4), vs([2, 3], 4)
    q = kappa_min(conn, x, y)
    assert q.leftmost == q.rightmost == x
    assert q.order == conn.eval(x)


def test_kappa_min_both_empty():
    conn = ConnFn.from_graph(cycle_graph(4))
    q = kappa_min(conn, VertexSet.empty(4), VertexSet.empty(4))
    assert q.order == 0
    assert q.leftmost == VertexSet.empty(4)
    assert q.rightmost == VertexSet.full(4)


def test_kappa_min_rejects_overlap():
    conn = ConnFn.from_graph(path_graph(3))
    with pytest.raises(ValueError):
        kappa_min(conn, vs([0], 3), vs([0, 1], 3))


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_kappa_min_matches_oracle(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 7)
    g = random_graph(n, rng.random(), rng)
    conn = ConnFn.from_graph(g)
    full = (1 << n) - 1
    x = rng.randrange(1 << n)
    y = rng.randrange(1 << n) & ~x
    order, minima = brute_min_separations(conn.eval_mask, n, x, y)
    got_order, left, right = kappa_min_mask(conn, x, y)
    assert got_order == order
    # leftmost is the meet of all minimum separations, rightmost the join
    meet = full
    join = 0
    for z in minima:
        meet &= z
        join |= z
    assert left == meet and conn.eval_mask(meet) == order
    assert right == join and conn.eval_mask(join) == order
    # fixed points under re-query
    assert kappa_min_mask(conn, left, y)[1] == left
    assert kappa_min_mask(conn, x, full ^ right)[2] == right


def test_kappa_min_monotone_submodular_in_first_argument():
    rng = random.Random(5)
    g = random_graph(6, 0.5, rng)
    conn = ConnFn.from_graph(g)
    y = 0b100001
    rest = conn.full_mask() & ~y
    value = {}
    for x in subsets_between(0, rest):
        value[x] = kappa_min_mask(conn, x, y)[0]
    for x1 in subsets_between(0, rest):
        for x2 in subsets_between(0, rest):
            if x1 & ~x2 == 0:
                assert value[x1] <= value[x2]
            assert value[x1] + value[x2] >= value[x1 & x2] + value[x1 | x2]


def test_free_set_zero_order():
    from rwiso.f2linalg import Graph

    # two components, so the cut between them has rank 0
    g = Graph.from_edges(4, [(0, 1), (2, 3)])
    conn = ConnFn.from_graph(g)
    x = vs([0, 1], 4)
    assert conn.eval(x) == 0
    assert free_set(conn, x) == VertexSet.empty(4)


def test_free_set_k4():
    conn = ConnFn.from_graph(complete_graph(4))
    x = vs([0, 1], 4)
    assert conn.eval(x) == 1
    y = free_set(conn, x)
    assert y == vs([0], 4)
    assert kappa_min(conn, y, x.complement()).order == 1


def test_free_set_full_ground():
    conn = ConnFn.from_graph(cycle_graph(5))
    assert free_set(conn, VertexSet.full(5)) == VertexSet.empty(5)


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_free_set_postconditions(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 7)
    g = random_graph(n, rng.random(), rng)
    conn = ConnFn.from_graph(g)
    x = VertexSet(rng.randrange(1 << n), n)
    y = free_set(conn, x)
    assert y.is_subset(x)
    assert len(y) <= conn.eval(x)
    assert kappa_min(conn, y, x.complement()).order == conn.eval(x)


def test_contract_singletons_is_relabeling():
    g = cycle_graph(5)
    conn = ConnFn.from_graph(g)
    parts = [vs([i], 5) for i in range(5)]
    down = contract(conn, parts)
    assert down.n == 5
    for mask in range(1 << 5):
        assert down.eval_mask(down.push_down_mask(mask)) == conn.eval_mask(mask)


def test_contract_part_value():
    conn = ConnFn.from_graph(complete_graph(4))
    down = contract(conn, [vs([0, 1], 4)])
    token = down.part_tokens[0]
    assert down.eval_mask(1 << token) == 1
    assert down.eval_mask(1 << token) == conn.eval(vs([0, 1], 4))


def test_contract_with_designated_part():
    conn = ConnFn.from_graph(cycle_graph(6))
    down = contract(conn, [vs([2, 3], 6)], c0=vs([0], 6))
    # ground: base elements 1,4,5 then c0 then c1
    assert down.n == 5
    assert down.c0_token == 3
    assert down.part_tokens == (4,)
    assert down.expand_mask(1 << down.c0_token) == 0b000001
    assert down.labels[3] == "c0" and down.labels[4] == "c1"


def test_contract_empty_c0_is_omitted():
    conn = ConnFn.from_graph(cycle_graph(4))
    down = contract(conn, [vs([0, 1], 4)], c0=None)
    assert down.c0_token is None
    assert down.n == 3


def test_contract_rejects_overlap_and_empty():
    conn = ConnFn.from_graph(cycle_graph(4))
    with pytest.raises(ValueError):
        contract(conn, [vs([0, 1], 4), vs([1, 2], 4)])
    with pytest.raises(ValueError):
        contract(conn, [VertexSet.empty(4)])


def test_contract_preserves_axioms():
    rng = random.Random(11)
    g = random_graph(7, 0.5, rng)
    conn = ConnFn.from_graph(g)
    down = contract(conn, [vs([0, 3], 7), vs([5, 6], 7)], c0=vs([1], 7))
    assert down.n == 5
    full = down.full_mask()
    assert down.eval_mask(0) == 0
    for x in range(1 << down.n):
        assert down.eval_mask(x) == down.eval_mask(full ^ x)
        for y in range(1 << down.n):
            assert (
                down.eval_mask(x) + down.eval_mask(y)
                >= down.eval_mask(x & y) + down.eval_mask(x | y)
            )


def test_contraction_expand_roundtrip():
    conn = ConnFn.from_graph(path_graph(6))
    down = contract(conn, [vs([1, 2], 6), vs([4], 6)], c0=vs([0], 6))
    for mask in range(1 << down.n):
        expanded = down.expand_mask(mask)
        assert down.push_down_mask(expanded) == mask
