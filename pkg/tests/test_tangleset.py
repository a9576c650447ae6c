import random

import pytest

from rwiso.connfn import ConnFn, contract, contract_tangle, kappa_min_mask
from rwiso.f2linalg import Graph, VertexSet, bits_of, cut_rank_mask
from rwiso.tangleset import (
    Tangle,
    enumerate_tangles,
    k_maximal,
    minimal_elements,
    separation,
    tangle_set_separation,
    theta,
    theta_at_most,
    triple_cover,
    truncate_tangle,
    verify_triple_cover,
)
from oracles import (
    all_graphs,
    brute_branch_width,
    brute_tangles,
    complete_graph,
    connected,
    cycle_graph,
    empty_graph,
    members_of_tangle,
    path_graph,
    random_graph,
    tangle_axioms_ok,
)


def store_of(g: Graph, k: int):
    return enumerate_tangles(ConnFn.from_graph(g), k)


def test_theta_values():
    assert theta(0) == 0
    assert theta(1) == 1
    assert theta(2) == 4
    assert theta(3) == 85
    assert theta(4) == 85 + 3**85
    with pytest.raises(OverflowError):
        theta(5)
    assert theta_at_most(3, 85)
    assert not theta_at_most(3, 84)
    assert not theta_at_most(4, 10**30)


def test_p2_store():
    g = path_graph(2)
    store = store_of(g, 2)
    orders = [t.order for t in store.tangles]
    assert orders == [0, 1]
    t1 = store.tangles[1]
    assert t1.minimal == (0b11,)
    assert store.size(0) == 1 and store.size(1) == 2 and store.size(2) == 2


def test_k3_store():
    store = store_of(complete_graph(3), 2)
    orders = [t.order for t in store.tangles]
    assert orders == [0, 1]
    assert store.tangles[1].minimal == (0b111,)


def test_empty_ground_set_rejected():
    with pytest.raises(ValueError):
        enumerate_tangles(ConnFn(0, lambda m: 0), 1)


def test_matches_brute_enumeration_small():
    rng = random.Random(3)
    graphs = list(all_graphs(3)) + [random_graph(4, rng.random(), rng) for _ in range(12)]
    graphs += [empty_graph(2), empty_graph(3), empty_graph(4)]
    for g in graphs:
        conn = ConnFn.from_graph(g)
        store = enumerate_tangles(conn, 3)
        for order in (1, 2, 3):
            expected = set(brute_tangles(conn.eval_mask, g.n, order))
            got = {
                members_of_tangle(conn.eval_mask, g.n, t.order, t.minimal)
                for t in store.tangles
                if t.order == order
            }
            assert got == expected


def test_every_enumerated_tangle_satisfies_axioms():
    rng = random.Random(17)
    for _ in range(8):
        g = random_graph(rng.randint(4, 6), rng.random(), rng)
        store = store_of(g, 3)
        for t in store.tangles:
            if t.order == 0:
                assert t.minimal == ()
                continue
            members = members_of_tangle(
                store.conn.eval_mask, g.n, t.order, t.minimal
            )
            assert tangle_axioms_ok(store.conn.eval_mask, g.n, t.order, members)


def test_duality_small():
    graphs = [g for n in (2, 3, 4) for g in all_graphs(n) if connected(g)]
    rng = random.Random(23)
    graphs += [random_graph(5, 0.6, rng) for _ in range(6)]
    graphs += [cycle_graph(5), cycle_graph(6), complete_graph(5)]
    for g in graphs:
        conn = ConnFn.from_graph(g)
        bw = brute_branch_width(conn.eval_mask, g.n)
        store = enumerate_tangles(conn, bw + 1)
        max_order = max(t.order for t in store.tangles)
        assert max_order == bw


def test_c5_order2_tangle():
    g = cycle_graph(5)
    store = store_of(g, 2)
    order2 = [t for t in store.tangles if t.order == 2]
    assert len(order2) == 1
    t = order2[0]
    full = (1 << 5) - 1
    assert set(t.minimal) == {full ^ (1 << v) for v in range(5)}


def test_truncation_links():
    rng = random.Random(31)
    g = random_graph(6, 0.5, rng)
    store = store_of(g, 3)
    for i, t in enumerate(store.tangles):
        for ell in range(t.order + 1):
            j = store.truncation(i, ell)
            tj = store.tangles[j]
            assert tj.order == ell
            trunc = truncate_tangle(t, ell)
            assert trunc.sort_key() == tj.sort_key()
        assert store.truncation(i, t.order + 1) == i


def test_find_by_oracle():
    store = store_of(cycle_graph(5), 2)
    for i, t in enumerate(store.tangles):
        assert store.find(t.order, t.contains_mask) == i


def test_separation_comparable_is_none():
    store = store_of(cycle_graph(5), 2)
    # order-0 and order-1 tangles are truncations of the order-2 tangle
    for i, t in enumerate(store.tangles):
        for j, u in enumerate(store.tangles):
            if i != j and store.comparable(i, j):
                assert store.separation(i, j) is None


def test_disjoint_cycles_separation():
    # two 5-cycles carry one order-2 tangle each; the minimum separation
    # between them is one cycle's vertex set (order 0, leftmost)
    edges = [(i, (i + 1) % 5) for i in range(5)]
    edges += [(u + 5, v + 5) for u, v in edges]
    g = Graph.from_edges(10, edges)
    store = store_of(g, 2)
    order2 = [i for i, t in enumerate(store.tangles) if t.order == 2]
    assert len(order2) == 2
    i, j = order2
    s = store.separation(i, j)
    assert s is not None
    assert s.mask in (0b0000011111, 0b1111100000)
    back = store.separation(j, i)
    assert back.mask == s.complement().mask


def test_separations_match_brute_force():
    rng = random.Random(41)
    for _ in range(6):
        g = random_graph(rng.randint(4, 6), 0.5, rng)
        conn = ConnFn.from_graph(g)
        store = enumerate_tangles(conn, 3)
        full = conn.full_mask()
        members = {
            i: members_of_tangle(conn.eval_mask, g.n, t.order, t.minimal)
            for i, t in enumerate(store.tangles)
        }
        for i in range(len(store.tangles)):
            for j in range(len(store.tangles)):
                if i == j:
                    continue
                cand = [
                    z
                    for z in range(1 << g.n)
                    if z in members[i] and (full ^ z) in members[j]
                ]
                got = store.separation(i, j)
                if not cand:
                    assert got is None
                    continue
                best = min(conn.eval_mask(z) for z in cand)
                meet = full
                for z in cand:
                    if conn.eval_mask(z) == best:
                        meet &= z
                assert got is not None and got.mask == meet


def test_tangle_set_separation_examples():
    store = store_of(path_graph(2), 2)
    t0, t1 = store.tangles
    n = 2
    # order-0 tangle has no members at all
    assert tangle_set_separation(t0, VertexSet.full(n)) is None
    # {A} against one endpoint: the only member meets it
    assert tangle_set_separation(t1, VertexSet.of([0], n)) is None
    # empty query: leftmost minimum member
    assert tangle_set_separation(t1, VertexSet.empty(n)) == VertexSet.full(n)
    with pytest.raises(ValueError):
        tangle_set_separation(t1, VertexSet.full(n))


def test_tangle_set_separation_matches_brute():
    rng = random.Random(47)
    for _ in range(5):
        g = random_graph(5, 0.6, rng)
        conn = ConnFn.from_graph(g)
        store = enumerate_tangles(conn, 3)
        full = conn.full_mask()
        for t in store.tangles:
            members = members_of_tangle(conn.eval_mask, g.n, t.order, t.minimal)
            for x in range(1 << g.n):
                if x in members:
                    continue
                cand = [z for z in members if z & x == 0]
                got = tangle_set_separation(t, VertexSet(x, g.n))
                if not cand:
                    assert got is None
                    continue
                best = min(conn.eval_mask(z) for z in cand)
                meet = full
                for z in cand:
                    if conn.eval_mask(z) == best:
                        meet &= z
                assert got is not None and got.mask == meet


def test_minimal_element_characterization():
    # every minimal element is the leftmost minimum separation against
    # some query of size at most the order, and no such separation is a
    # proper subset of a minimal element
    rng = random.Random(53)
    for _ in range(5):
        g = random_graph(5, 0.5, rng)
        store = store_of(g, 3)
        for t in store.tangles:
            if t.order == 0:
                continue
            candidates = set()
            for y in range(1 << g.n):
                if y.bit_count() > t.order or t.contains_mask(y):
                    continue
                got = tangle_set_separation(t, VertexSet(y, g.n))
                if got is not None:
                    candidates.add(got.mask)
            minimal = {
                c
                for c in candidates
                if not any(o != c and o & ~c == 0 for o in candidates)
            }
            assert minimal == set(t.minimal)


def test_triple_cover_p2():
    store = store_of(path_graph(2), 2)
    t1 = store.tangles[1]
    q = triple_cover(t1)
    assert q == VertexSet.of([0], 2)


def test_triple_cover_c5():
    store = store_of(cycle_graph(5), 2)
    t = [t for t in store.tangles if t.order == 2][0]
    q = triple_cover(t)
    assert verify_triple_cover(t, q)
    assert theta_at_most(4, 10**45)  # theta(4) fits the frozen bound below
    assert len(q) <= 85 + 3**85  # == theta(3*2 - 2)


def test_triple_cover_random_graphs():
    rng = random.Random(59)
    for _ in range(5):
        g = random_graph(rng.randint(4, 7), 0.5, rng)
        store = store_of(g, 3)
        for t in store.tangles:
            if t.order < 1:
                continue
            q = triple_cover(t)
            assert verify_triple_cover(t, q)


def test_verify_triple_cover_edges():
    store = store_of(cycle_graph(5), 2)
    t = [t for t in store.tangles if t.order == 2][0]
    assert verify_triple_cover(t, VertexSet.full(5))
    assert not verify_triple_cover(t, VertexSet.empty(5))


def test_small_cover_exists():
    # every tangle of order k has a plain cover of size at most k
    rng = random.Random(61)
    from itertools import combinations

    for _ in range(5):
        g = random_graph(rng.randint(3, 6), 0.5, rng)
        store = store_of(g, 3)
        for t in store.tangles:
            if t.order == 0:
                continue
            found = False
            for size in range(t.order + 1):
                for qs in combinations(range(g.n), size):
                    q = 0
                    for v in qs:
                        q |= 1 << v
                    if all(q & m for m in t.minimal):
                        found = True
                        break
                if found:
                    break
            assert found


def test_corner_property():
    rng = random.Random(67)
    for _ in range(5):
        g = random_graph(rng.randint(4, 6), 0.5, rng)
        conn = ConnFn.from_graph(g)
        store = enumerate_tangles(conn, 3)
        full = conn.full_mask()
        for i in range(len(store.tangles)):
            for j in range(len(store.tangles)):
                if i == j or store.separation(i, j) is None:
                    continue
                left = store.separation(i, j).mask
                right = full ^ store.separation(j, i).mask
                for y in range(1 << g.n):
                    ky = conn.eval_mask(y)
                    comp_y = full ^ y
                    if y & ~left and comp_y & ~left:
                        assert (
                            conn.eval_mask(left & y) <= ky
                            or conn.eval_mask(left & comp_y) <= ky
                        )
                    if y & ~right and comp_y & ~right:
                        assert (
                            conn.eval_mask(right & y) < ky
                            or conn.eval_mask(right & comp_y) < ky
                        )


def test_k_maximal():
    store = store_of(path_graph(2), 2)
    at0 = k_maximal(store, 0)
    assert len(at0) == 1 and at0[0].order == 0
    at1 = k_maximal(store, 1)
    assert len(at1) == 1 and at1[0].order == 1 and at1[0].minimal == (0b11,)
    # at the branch width bound, exactly the maximal tangles remain
    g = cycle_graph(5)
    conn = ConnFn.from_graph(g)
    bw = brute_branch_width(conn.eval_mask, g.n)
    store = enumerate_tangles(conn, bw)
    maximal = k_maximal(store, bw)
    for t in maximal:
        extended = any(
            u.order > t.order
            and truncate_tangle(u, t.order).sort_key() == t.sort_key()
            for u in store.tangles
        )
        assert not extended


def test_contract_tangle_singletons():
    g = cycle_graph(5)
    conn = ConnFn.from_graph(g)
    store = enumerate_tangles(conn, 2)
    t = [t for t in store.tangles if t.order == 2][0]
    down = contract(conn, [VertexSet.of([i], 5) for i in range(5)])
    td = contract_tangle(t, down)
    assert td is not None
    assert td.order == t.order
    assert {down.push_down_mask(m) for m in t.minimal} == set(td.minimal)


def test_contract_tangle_rejection():
    g = path_graph(2)
    conn = ConnFn.from_graph(g)
    store = enumerate_tangles(conn, 2)
    t = store.tangles[1]  # {A}
    down = contract(conn, [VertexSet.full(2)])
    assert contract_tangle(t, down) is None


def test_contract_tangle_proper():
    # collapsing a set outside the tangle keeps it a tangle
    edges = [(i, (i + 1) % 5) for i in range(5)]
    edges += [(u + 5, v + 5) for u, v in edges]
    g = Graph.from_edges(10, edges)
    conn = ConnFn.from_graph(g)
    store = enumerate_tangles(conn, 2)
    order2 = [t for t in store.tangles if t.order == 2]
    t = next(t for t in order2 if all(m & 0b0000011111 for m in t.minimal))
    # t leans on the first cycle; contract the second
    down = contract(conn, [VertexSet.of([5, 6, 7, 8, 9], 10)])
    td = contract_tangle(t, down)
    assert td is not None and td.order == 2
    members = members_of_tangle(down.eval_mask, down.n, td.order, td.minimal)
    assert tangle_axioms_ok(down.eval_mask, down.n, td.order, members)
