"""Treelike, tree, and branch decompositions of a connectivity function.

A directed decomposition is a dag whose nodes carry cones (vertex sets
shrinking along edges); bags are the parts of cones not covered by
children.  Branch decompositions are unrooted cubic trees with leaves
labelled by ground elements.  The two meet in the width-preserving
conversions below, and `build_tangle_tree` produces the canonical
directed tree decomposition indexed by the maximal tangles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .connfn import ConnFn, contract, contract_tangle, submasks
from .f2linalg import VertexSet, bits_of
from .qblock import PARTITION_CAP, associated_qblock, partition_rank
from .tangleset import Tangle, TangleStore, k_maximal, pair_separation

WIDTH_CAP = 1 << 22

LEVELS = ("partial", "treelike", "tree", "normal")


class DirectedDecomposition:
    """A dag over nodes 0..m-1 with a cone attached to every node.

    Cones are stored as bitmasks over a ground set of size n.  The
    structure is immutable after construction; `level` records the last
    validation level that succeeded (informational only).
    """

    def __init__(self, n: int, gamma, edges):
        self.n = n
        full = (1 << n) - 1
        cones = []
        for g in gamma:
            m = g.mask if isinstance(g, VertexSet) else int(g)
            if m & ~full:
                raise ValueError("cone outside the ground set")
            cones.append(m)
        self.gamma = tuple(cones)
        count = len(self.gamma)
        seen = set()
        for t, u in edges:
            if not (0 <= t < count and 0 <= u < count):
                raise ValueError("edge endpoint out of range")
            if t == u:
                raise ValueError("decomposition edges may not be loops")
            seen.add((t, u))
        self.edges = tuple(sorted(seen))
        children = [[] for _ in range(count)]
        parents = [[] for _ in range(count)]
        for t, u in self.edges:
            children[t].append(u)
            parents[u].append(t)
        self.children = tuple(tuple(c) for c in children)
        self.parents = tuple(tuple(p) for p in parents)
        self.level: str | None = None

    def __len__(self) -> int:
        return len(self.gamma)

    def nodes(self) -> range:
        return range(len(self.gamma))

    def cone(self, t: int) -> VertexSet:
        return VertexSet(self.gamma[t], self.n)

    def bag_mask(self, t: int) -> int:
        covered = 0
        for u in self.children[t]:
            covered |= self.gamma[u]
        return self.gamma[t] & ~covered

    def bag(self, t: int) -> VertexSet:
        return VertexSet(self.bag_mask(t), self.n)

    def roots(self) -> list[int]:
        return [t for t in self.nodes() if not self.parents[t]]

    def leaf_nodes(self) -> list[int]:
        return [t for t in self.nodes() if not self.children[t]]

    def descendants(self, t: int) -> set[int]:
        """Nodes reachable from t, including t itself."""
        out = {t}
        stack = [t]
        while stack:
            for u in self.children[stack.pop()]:
                if u not in out:
                    out.add(u)
                    stack.append(u)
        return out

    def topological(self) -> list[int] | None:
        """Topological order, or None when the graph has a cycle."""
        indeg = [len(self.parents[t]) for t in self.nodes()]
        order = [t for t in self.nodes() if indeg[t] == 0]
        for t in order:
            for u in self.children[t]:
                indeg[u] -= 1
                if indeg[u] == 0:
                    order.append(u)
        if len(order) != len(self.gamma):
            return None
        return order

    def __repr__(self) -> str:
        return (
            f"DirectedDecomposition({len(self.gamma)} nodes, "
            f"{len(self.edges)} edges, n={self.n})"
        )


@dataclass(frozen=True)
class Report:
    """Validation outcome; `problem` names the first broken rule."""

    ok: bool
    problem: str = ""
    node: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate(dec: DirectedDecomposition, level: str = "treelike") -> Report:
    """Check the axioms of the requested decomposition level.

    Levels: "partial" (acyclic, shrinking edges, sibling cones equal or
    disjoint), "treelike" (partial plus a node covering the ground),
    "tree" (treelike on a directed tree with pairwise disjoint sibling
    cones), "normal" (treelike with empty inner bags, singleton leaf
    bags, uniform sibling behaviour, and a unique root).
    """
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    if dec.topological() is None:
        return Report(False, "decomposition graph has a cycle")
    for t, u in dec.edges:
        if dec.gamma[u] & ~dec.gamma[t]:
            return Report(False, f"edge to node {u} grows the cone", t)
    for t in dec.nodes():
        ch = dec.children[t]
        for i, u1 in enumerate(ch):
            for u2 in ch[i + 1 :]:
                g1, g2 = dec.gamma[u1], dec.gamma[u2]
                if g1 != g2 and g1 & g2:
                    return Report(
                        False, "child cones overlap without being equal", t
                    )
    full = (1 << dec.n) - 1
    if level != "partial" and full not in dec.gamma:
        return Report(False, "no node covers the ground set")
    if level == "tree":
        if len(dec.roots()) != 1:
            return Report(False, "directed tree needs exactly one root")
        for t in dec.nodes():
            if len(dec.parents[t]) > 1:
                return Report(False, "node has two parents", t)
            ch = dec.children[t]
            for i, u1 in enumerate(ch):
                for u2 in ch[i + 1 :]:
                    if dec.gamma[u1] & dec.gamma[u2]:
                        return Report(
                            False, "sibling cones must be disjoint", t
                        )
    if level == "normal":
        for t in dec.nodes():
            bag = dec.bag_mask(t)
            if dec.children[t]:
                if bag:
                    return Report(False, "inner node with a non-empty bag", t)
                cones = {dec.gamma[u] for u in dec.children[t]}
                if len(cones) > 1:
                    for u1 in dec.children[t]:
                        for u2 in dec.children[t]:
                            g1, g2 = dec.gamma[u1], dec.gamma[u2]
                            if g1 != g2 and g1 & g2 == 0:
                                continue
                            if u1 != u2 and g1 == g2:
                                return Report(
                                    False, "mixed child cone pattern", t
                                )
            elif bag.bit_count() != 1:
                return Report(False, "leaf bag is not a single element", t)
        if len(dec.roots()) != 1:
            return Report(False, "normal decompositions have a unique root")
    dec.level = level
    return Report(True)


def node_width(conn: ConnFn, dec: DirectedDecomposition, t: int,
               cap: int = WIDTH_CAP) -> int:
    """Width at one node: the maximum connectivity over unions of a bag
    subset with any collection of child cones.

    When the function is the cut rank of a known graph and the node has
    an empty bag with pairwise disjoint child cones, the answer equals
    the partition rank of the node's ?-block matrix; that path runs at
    most as many eliminations as the direct enumeration (strictly fewer
    at full-cone nodes) on rows read straight off the adjacency masks,
    so it is taken whenever it applies.
    """
    bag = dec.bag_mask(t)
    cones = sorted({dec.gamma[u] for u in dec.children[t]})
    graph = getattr(conn, "graph", None)
    if graph is not None and bag == 0 and cones:
        raw = [dec.gamma[u] for u in dec.children[t] if dec.gamma[u]]
        disjoint = len(raw) == len(cones) and _union(cones).bit_count() == sum(
            c.bit_count() for c in cones
        )
        blocks = len(cones) + (1 if dec.gamma[t] != conn.full_mask() else 0)
        if disjoint and blocks <= PARTITION_CAP and 1 << (blocks - 1) <= cap:
            return partition_rank(associated_qblock(graph, dec, t))
    if 1 << (bag.bit_count() + len(cones)) > cap:
        raise ValueError(
            f"node {t} needs more than {cap} evaluations; "
            "raise the cap or normalize the decomposition"
        )
    unions = [0]
    for c in cones:
        unions.extend(prev | c for prev in list(unions))
    best = 0
    for x in submasks(bag):
        for u in unions:
            v = conn.eval_mask(x | u)
            if v > best:
                best = v
    return best


def width(conn: ConnFn, dec: DirectedDecomposition,
          cap: int = WIDTH_CAP) -> int:
    return max(node_width(conn, dec, t, cap) for t in dec.nodes())


def _union(masks) -> int:
    out = 0
    for m in masks:
        out |= m
    return out


def normalize(conn: ConnFn, dec: DirectedDecomposition) -> DirectedDecomposition:
    """Rebuild a treelike decomposition into a normal one of equal width.

    Four deterministic phases: drop empty cones, expand non-conforming
    bags into singleton leaf children, regroup mixed sibling cones under
    fresh nodes, then consolidate roots.  Trees stay trees, and an
    already-normal input comes back unchanged (a single full-cone root
    is kept rather than re-rooted, so the rebuild is idempotent).
    """
    full = (1 << dec.n) - 1
    gamma = list(dec.gamma)
    alive = [g != 0 for g in gamma]
    edges = {(t, u) for t, u in dec.edges if alive[t] and alive[u]}

    def children_of(t: int) -> list[int]:
        return sorted(u for (s, u) in edges if s == t)

    # singleton leaf children for every uncovered bag element
    for t in list(dec.nodes()):
        if not alive[t]:
            continue
        ch = children_of(t)
        bag = gamma[t] & ~_union(gamma[u] for u in ch)
        if ch and bag == 0:
            continue
        if not ch and bag.bit_count() == 1:
            continue
        for x in bits_of(bag):
            gamma.append(1 << x)
            alive.append(True)
            edges.add((t, len(gamma) - 1))

    # fresh grouping nodes where some sibling cones repeat and others differ
    for t in range(len(dec.gamma)):
        if not alive[t]:
            continue
        ch = children_of(t)
        groups: dict[int, list[int]] = {}
        for u in ch:
            groups.setdefault(gamma[u], []).append(u)
        if len(groups) < 2 or all(len(g) == 1 for g in groups.values()):
            continue
        for u in ch:
            edges.discard((t, u))
        for cone in sorted(groups, key=lambda m: (m.bit_count(), m)):
            gamma.append(cone)
            alive.append(True)
            mid = len(gamma) - 1
            edges.add((t, mid))
            for u in groups[cone]:
                edges.add((mid, u))

    # peel roots that fail to cover the ground set
    while True:
        has_parent = {u for (_, u) in edges}
        bad = [
            t
            for t in range(len(gamma))
            if alive[t] and t not in has_parent and gamma[t] != full
        ]
        if not bad:
            break
        for t in bad:
            alive[t] = False
            edges = {(s, u) for (s, u) in edges if s != t and u != t}
    roots = [
        t
        for t in range(len(gamma))
        if alive[t] and t not in {u for (_, u) in edges}
    ]
    if len(roots) > 1:
        gamma.append(full)
        alive.append(True)
        r = len(gamma) - 1
        for t in roots:
            edges.add((r, t))

    keep = [t for t in range(len(gamma)) if alive[t]]
    renum = {t: i for i, t in enumerate(keep)}
    return DirectedDecomposition(
        dec.n,
        [gamma[t] for t in keep],
        [(renum[s], renum[u]) for (s, u) in edges],
    )


class BranchDecomposition:
    """Unrooted cubic tree whose leaves carry the ground elements.

    `xi` maps leaf nodes to elements, bijectively.  A one-element ground
    set gives the single-node tree; two elements give one edge.
    """

    def __init__(self, n: int, node_count: int, edges, xi: dict[int, int]):
        self.n = n
        self.node_count = node_count
        seen = set()
        for s, t in edges:
            if s == t or not (0 <= s < node_count and 0 <= t < node_count):
                raise ValueError("bad branch decomposition edge")
            seen.add((min(s, t), max(s, t)))
        self.edges = tuple(sorted(seen))
        if len(self.edges) != node_count - 1:
            raise ValueError("branch decomposition must be a tree")
        nbr = [[] for _ in range(node_count)]
        for s, t in self.edges:
            nbr[s].append(t)
            nbr[t].append(s)
        self.neighbors = tuple(tuple(sorted(x)) for x in nbr)
        # connectivity
        if node_count:
            stack, seen_nodes = [0], {0}
            while stack:
                for u in self.neighbors[stack.pop()]:
                    if u not in seen_nodes:
                        seen_nodes.add(u)
                        stack.append(u)
            if len(seen_nodes) != node_count:
                raise ValueError("branch decomposition must be connected")
        leaves = {t for t in range(node_count) if len(self.neighbors[t]) <= 1}
        for t in range(node_count):
            if t not in leaves and len(self.neighbors[t]) != 3:
                raise ValueError("internal nodes must have degree 3")
        if set(xi) != leaves or sorted(xi.values()) != list(range(n)):
            raise ValueError("leaf labelling must be a bijection")
        self.xi = dict(xi)
        self._sides: dict[tuple[int, int], int] = {}

    def side_mask(self, s: int, t: int) -> int:
        """Elements on the t side of the edge between s and t."""
        key = (s, t)
        if key in self._sides:
            return self._sides[key]
        if t not in self.neighbors[s]:
            raise ValueError("not an edge")
        out = 0
        stack, seen = [t], {s, t}
        while stack:
            v = stack.pop()
            if v in self.xi:
                out |= 1 << self.xi[v]
            for u in self.neighbors[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        self._sides[key] = out
        return out

    def width(self, conn: ConnFn) -> int:
        if not self.edges:
            return 0
        return max(conn.eval_mask(self.side_mask(s, t)) for s, t in self.edges)

    def __repr__(self) -> str:
        return f"BranchDecomposition({self.node_count} nodes, n={self.n})"


def branch_to_tree(conn: ConnFn, bd: BranchDecomposition) -> DirectedDecomposition:
    """Subdivide one edge with a root and direct everything away from it.

    The subdivided edge is chosen canonically: the edge whose side
    containing the least element is lexicographically least as a sorted
    element tuple.  Cones are the leaf-label sets hanging below each
    node; the root's cone is the whole ground set.
    """
    if bd.n != conn.n:
        raise ValueError("branch decomposition over the wrong ground set")
    if bd.n < 2:
        raise ValueError("need at least two elements")

    def key(edge):
        s, t = edge
        side = bd.side_mask(s, t)
        if not side & 1:
            side = bd.side_mask(t, s)
        return tuple(bits_of(side))

    s0, t0 = min(bd.edges, key=key)
    gamma = [(1 << bd.n) - 1] + [0] * bd.node_count
    edges = [(0, s0 + 1), (0, t0 + 1)]
    gamma[s0 + 1] = bd.side_mask(t0, s0)
    gamma[t0 + 1] = bd.side_mask(s0, t0)
    for start, other in ((s0, t0), (t0, s0)):
        stack, seen = [start], {start, other}
        while stack:
            v = stack.pop()
            for u in bd.neighbors[v]:
                if u in seen:
                    continue
                seen.add(u)
                gamma[u + 1] = bd.side_mask(v, u)
                edges.append((v + 1, u + 1))
                stack.append(u)
    return DirectedDecomposition(bd.n, gamma, edges)


def tree_to_branch(conn: ConnFn, dec: DirectedDecomposition) -> BranchDecomposition:
    """Invert the subdivision: normalize, contract single-child chains,
    split wide nodes into binary ones (children halved by ascending ID),
    then join the root's two children by an edge and drop the root."""
    if conn.n < 2:
        raise ValueError("need at least two elements")
    rep = validate(dec, "tree")
    if not rep:
        raise ValueError(f"not a directed tree decomposition: {rep.problem}")
    dn = normalize(conn, dec)
    gamma = list(dn.gamma)
    edges = set(dn.edges)
    alive = [True] * len(gamma)

    def children_of(t):
        return sorted(u for (s, u) in edges if s == t)

    def parent_of(t):
        for s, u in edges:
            if u == t:
                return s
        return None

    # contract chains: a single-child node duplicates its child's cone
    changed = True
    while changed:
        changed = False
        for t in range(len(gamma)):
            if not alive[t]:
                continue
            ch = children_of(t)
            if len(ch) != 1:
                continue
            (u,) = ch
            p = parent_of(t)
            edges.discard((t, u))
            if p is not None:
                edges.discard((p, t))
                edges.add((p, u))
            alive[t] = False
            changed = True

    # binary splits
    work = [t for t in range(len(gamma)) if alive[t]]
    while work:
        t = work.pop(0)
        if not alive[t]:
            continue
        ch = children_of(t)
        if len(ch) <= 2:
            continue
        mid = len(ch) // 2
        for half in (ch[:mid], ch[mid:]):
            if len(half) == 1:
                continue  # a lone child stays put; no unary wrapper
            gamma.append(_union(gamma[u] for u in half))
            alive.append(True)
            fresh = len(gamma) - 1
            for u in half:
                edges.discard((t, u))
                edges.add((fresh, u))
            edges.add((t, fresh))
            work.append(fresh)
        work.append(t)

    roots = [
        t
        for t in range(len(gamma))
        if alive[t] and parent_of(t) is None
    ]
    if len(roots) != 1:
        raise AssertionError("normalization lost the unique root")
    root = roots[0]
    top = children_of(root)
    if len(top) != 2:
        raise AssertionError("root did not end up binary")
    alive[root] = False
    edges.discard((root, top[0]))
    edges.discard((root, top[1]))

    keep = [t for t in range(len(gamma)) if alive[t]]
    renum = {t: i for i, t in enumerate(keep)}
    bd_edges = [(renum[s], renum[u]) for (s, u) in edges]
    bd_edges.append((renum[top[0]], renum[top[1]]))
    xi = {}
    for t in keep:
        if not children_of(t):
            xi[renum[t]] = gamma[t].bit_length() - 1
    return BranchDecomposition(dec.n, len(keep), bd_edges, xi)


def unfold_to_tree(dec: DirectedDecomposition, cap: int = 100000) -> DirectedDecomposition:
    """Test utility: duplicate shared subtrees below a full-cone root
    until the dag becomes a tree, pruning repeated sibling cones.  May
    be exponentially larger than the input, hence the node cap."""
    full = (1 << dec.n) - 1
    try:
        start = dec.gamma.index(full)
    except ValueError:
        raise ValueError("no node covers the ground set") from None
    gamma: list[int] = []
    edges: list[tuple[int, int]] = []

    def build(t: int) -> int:
        if len(gamma) > cap:
            raise ValueError("unfolded tree exceeds the node cap")
        gamma.append(dec.gamma[t])
        mine = len(gamma) - 1
        seen_cones = set()
        for u in dec.children[t]:
            if dec.gamma[u] in seen_cones:
                continue
            seen_cones.add(dec.gamma[u])
            edges.append((mine, build(u)))
        return mine

    build(start)
    return DirectedDecomposition(dec.n, gamma, edges)


@dataclass(frozen=True)
class TangleTree:
    """Directed tree decomposition whose nodes are the maximal tangles."""

    dag: DirectedDecomposition
    tangles: tuple[int, ...]  # node -> store index
    store: TangleStore = field(compare=False, repr=False)

    def node_of(self, index: int) -> int:
        return self.tangles.index(index)


def _pick_owner(candidates: list[tuple[int, Tangle]]) -> tuple[int, Tangle]:
    """Deterministic owner of a shared child cone.  The leading keys are
    label-independent (order, minimal-set profile) so relabelling the
    ground set moves the choice along; the final tie-break by encoding
    only fires between tangles that present identical profiles."""

    def key(item):
        _, t = item
        sizes = tuple(sorted(m.bit_count() for m in t.minimal))
        return (-t.order, len(t.minimal), sizes, t.sort_key())

    return min(candidates, key=key)


def build_tangle_tree(store: TangleStore, root: Tangle, ell: int) -> TangleTree:
    """Canonical directed tree decomposition for the ell-maximal tangles.

    Children of a node are the inclusion-maximal leftmost minimum
    separations toward the node's tangle; tangles sharing a separation
    recurse inside that cone on the contracted function, which keeps
    every deeper cone nested.  The axioms (nested separations exist
    toward every non-descendant; each non-root cone is a leftmost
    minimum separation toward some non-ancestor) are verified after
    construction and any divergence aborts loudly.
    """
    maximal = k_maximal(store, ell)
    if root not in maximal:
        raise ValueError("root tangle is not maximal at this order")
    conn = store.conn
    full = conn.full_mask()
    gamma: list[int] = [full]
    edges: list[tuple[int, int]] = []
    node_tangle: list[int] = [store.index_of(root)]

    def attach(node, current, others, local, expand):
        if not others:
            return
        seps = []
        for gi, t in others:
            s = pair_separation(local, t, current)
            if s is None:
                raise RuntimeError(
                    "maximal tangles lost their separation inside a cone"
                )
            seps.append(s)
        distinct = sorted(set(seps), key=lambda m: (m.bit_count(), m))
        tops = [
            c
            for c in distinct
            if not any(c != d and c & ~d == 0 for d in distinct)
        ]
        lfull = local.full_mask()
        for cone in tops:
            group = [
                (gi, t, s)
                for (gi, t), s in zip(others, seps)
                if s & ~cone == 0
            ]
            exact = [(gi, t) for gi, t, s in group if s == cone]
            gi0, rep = _pick_owner(exact)
            gamma.append(expand(cone))
            child = len(gamma) - 1
            edges.append((node, child))
            node_tangle.append(gi0)
            rest = [(gi, t) for gi, t, _ in group if gi != gi0]
            if not rest:
                continue
            sub = contract(local, [VertexSet(lfull ^ cone, local.n)])
            inner = contract_tangle(rep, sub)
            if inner is None:
                raise RuntimeError("cone owner refuses the contraction")
            pushed = []
            keys = {inner.sort_key()}
            for gi, t in rest:
                td = contract_tangle(t, sub)
                if td is None:
                    raise RuntimeError("grouped tangle refuses the contraction")
                if td.sort_key() in keys:
                    raise RuntimeError("tangles collapsed under contraction")
                keys.add(td.sort_key())
                pushed.append((gi, td))
            attach(
                child,
                inner,
                pushed,
                sub,
                lambda m, s=sub, e=expand: e(s.expand_mask(m)),
            )

    remaining = [
        (store.index_of(t), t) for t in maximal if t != root
    ]
    attach(0, root, remaining, conn, lambda m: m)

    dag = DirectedDecomposition(conn.n, gamma, edges)
    tree = TangleTree(dag, tuple(node_tangle), store)
    _verify_tangle_tree(tree)
    return tree


def _verify_tangle_tree(tree: TangleTree) -> None:
    dag, store = tree.dag, tree.store
    rep = validate(dag, "tree")
    if not rep:
        raise RuntimeError(f"tangle tree invalid: {rep.problem} (node {rep.node})")
    if len(set(tree.tangles)) != len(tree.tangles):
        raise RuntimeError("tangle-to-node map is not a bijection")
    below = {t: dag.descendants(t) for t in dag.nodes()}
    for t in dag.nodes():
        for u in dag.nodes():
            if t in below[u]:
                continue  # u sits above t; no requirement there
            # some minimum separation toward t's tangle must cover gamma(u);
            # the rightmost one is the complement of the opposite leftmost
            left = store.separation(tree.tangles[t], tree.tangles[u])
            if left is None or dag.gamma[u] & left.mask:
                raise RuntimeError(
                    f"cone of node {u} escapes every minimum separation "
                    f"toward node {t}"
                )
    for t in dag.nodes():
        if not dag.parents[t]:
            continue
        ok = False
        for u in dag.nodes():
            if u in below[t]:
                continue
            s = store.separation(tree.tangles[t], tree.tangles[u])
            if s is not None and s.mask == dag.gamma[t]:
                ok = True
                break
        if not ok:
            raise RuntimeError(
                f"cone of node {t} is not a leftmost minimum separation"
            )


def decomposition_json(dec: DirectedDecomposition, conn: ConnFn | None = None) -> dict:
    """JSON-ready dict: nodes with sorted cone lists, edges, and, when a
    connectivity function is supplied, per-node widths."""
    nodes = []
    for t in dec.nodes():
        entry: dict = {"id": t, "cone": list(bits_of(dec.gamma[t]))}
        if conn is not None:
            entry["width"] = node_width(conn, dec, t)
        nodes.append(entry)
    return {
        "n": dec.n,
        "nodes": nodes,
        "edges": [list(e) for e in dec.edges],
    }
