"""Isomorphism sets via dynamic programming over decomposition pairs.

The program walks two normal treelike decompositions bottom-up and
keeps, for every node pair, a coset of colour-preserving bijections
between their boundary graphs.  A boundary graph shrinks the world
outside a cone to one red vertex per distinct adjacency type into the
cone, so cells stay small while still recording how subtree solutions
may glue.  Cells combine in six steps: brute force at leaves, least
upper bounds over same-cone children, and for disjoint-cone children an
enumeration of red bijections and extension-set bijections followed by
restriction, closure, matching, and generator assembly.  At the two
roots the boundary graphs are the input graphs themselves; with
canonical decompositions on both sides the root cell is exactly the set
of isomorphisms.
"""

from __future__ import annotations

import warnings
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations, permutations

from .canonical import RankWidthExceeded, canonical_decomposition
from .connfn import ConnFn
from .decomp import DirectedDecomposition, normalize, validate
from .f2linalg import Graph, bits_of
from .permgroup import (
    Coset,
    PermGroup,
    Permutation,
    _spanning_group,
    coset_lub,
    coset_restrict,
    coset_restrict_sets,
)
from .qblock import associated_qblock, dedupe, extension_set

__all__ = [
    "BoundaryGraph",
    "DPTable",
    "boundary_graph",
    "dp_node",
    "iso_coset",
    "isomorphisms",
    "brute_force_iso",
]

BRUTE_CAP = 10
CHI_SEARCH_CAP = 20_000


class BoundaryGraph:
    """A cone's vertices in blue plus one red vertex per outside type.

    Blues come first in ascending original order; reds follow, ordered
    lexicographically by their type vector read along the blues.  `adj`
    holds local adjacency masks.  Reds are pairwise non-adjacent, and
    the blue part induces the original graph on the cone.
    """

    __slots__ = ("node", "blues", "reds", "adj", "_red_pos", "_sig")

    def __init__(self, node: int, blues, reds, adj):
        self.node = node
        self.blues = tuple(blues)
        self.reds = tuple(reds)
        self.adj = tuple(adj)
        self._red_pos = {w: i for i, w in enumerate(self.reds)}
        self._sig = None
        if len(self.adj) != len(self.blues) + len(self.reds):
            raise ValueError("adjacency length differs from vertex count")

    @property
    def n(self) -> int:
        return len(self.adj)

    @property
    def n_blue(self) -> int:
        return len(self.blues)

    @property
    def n_red(self) -> int:
        return len(self.reds)

    def blue_index(self, v: int) -> int:
        i = bisect_left(self.blues, v)
        if i == len(self.blues) or self.blues[i] != v:
            raise KeyError(f"vertex {v} is not blue here")
        return i

    def red_index(self, mask: int) -> int:
        return self.n_blue + self._red_pos[mask]

    def signature(self) -> tuple:
        """Cheap invariant: counts and sorted bicoloured degrees."""
        if self._sig is None:
            nb = len(self.blues)
            blue_mask = (1 << nb) - 1
            blue = sorted(
                ((self.adj[i] & blue_mask).bit_count(),
                 (self.adj[i] >> nb).bit_count())
                for i in range(nb)
            )
            red = sorted(self.adj[i].bit_count() for i in range(nb, self.n))
            self._sig = (nb, len(self.reds), tuple(blue), tuple(red))
        return self._sig

    def __repr__(self) -> str:
        return (f"BoundaryGraph(node={self.node}, blues={len(self.blues)}, "
                f"reds={len(self.reds)})")


def boundary_graph(graph: Graph, dec: DirectedDecomposition,
                   t: int) -> BoundaryGraph:
    """Boundary graph of a node's cone.

    Reds are the distinct rows of the outside-against-cone adjacency
    matrix (the zero row counts when some outside vertex realizes it);
    a blue and a red are adjacent exactly when the red's type vector is
    one at the blue.  At the unique root the outside is empty and the
    result is the input graph with no reds.
    """
    gamma = dec.gamma[t]
    full = (1 << graph.n) - 1
    blues = tuple(bits_of(gamma))
    types = sorted(
        {graph.adjacency[x] & gamma for x in bits_of(full & ~gamma)},
        key=lambda m: tuple(m >> v & 1 for v in blues),
    )
    pos = {v: i for i, v in enumerate(blues)}
    nb = len(blues)
    adj = [0] * (nb + len(types))
    for i, v in enumerate(blues):
        for u in bits_of(graph.adjacency[v] & gamma):
            adj[i] |= 1 << pos[u]
        for j, w in enumerate(types):
            if w >> v & 1:
                adj[i] |= 1 << (nb + j)
                adj[nb + j] |= 1 << i
    return BoundaryGraph(t, blues, types, adj)


def _colour_isos(b1: BoundaryGraph, b2: BoundaryGraph):
    """All colour-preserving isomorphisms b1 -> b2, by backtracking."""
    if b1.n_blue != b2.n_blue or b1.n_red != b2.n_red:
        return []
    n = b1.n
    nb = b1.n_blue
    out = []
    images = [0] * n
    used = 0

    def extend(i: int):
        nonlocal used
        if i == n:
            out.append(Permutation(tuple(images)))
            return
        lo, hi = (0, nb) if i < nb else (nb, n)
        for j in range(lo, hi):
            if used >> j & 1:
                continue
            if all(
                b1.adj[i] >> a & 1 == b2.adj[j] >> images[a] & 1
                for a in range(i)
            ):
                images[i] = j
                used |= 1 << j
                extend(i + 1)
                used &= ~(1 << j)
        return

    extend(0)
    return out


def _coset_of(n: int, elements) -> Coset:
    if not elements:
        return Coset.empty(n)
    sigma = elements[0]
    inv = sigma.inverse()
    return Coset(n, sigma, _spanning_group(n, [inv * g for g in elements[1:]]))


def brute_force_iso(g1: Graph, g2: Graph) -> Coset:
    """Exact isomorphism coset by pruned permutation search.

    The testing oracle: capped at ten vertices, exhaustive below that.
    """
    if g1.n > BRUTE_CAP or g2.n > BRUTE_CAP:
        raise ValueError(f"brute force is capped at {BRUTE_CAP} vertices")
    if g1.n != g2.n:
        return Coset.empty(g2.n)
    b1 = BoundaryGraph(-1, range(g1.n), (), g1.adjacency)
    b2 = BoundaryGraph(-1, range(g2.n), (), g2.adjacency)
    return _coset_of(g2.n, _colour_isos(b1, b2))


def _is_boundary_iso(b1: BoundaryGraph, b2: BoundaryGraph,
                     psi: Permutation) -> bool:
    nb = b1.n_blue
    if nb != b2.n_blue or b1.n != b2.n:
        return False
    return all(
        (psi(i) < nb) == (i < nb)
        and psi.image_mask(b1.adj[i]) == b2.adj[psi(i)]
        for i in range(b1.n)
    )


@dataclass
class DPTable:
    """Cell store for one paired run.

    Every filled cell sandwiches the decomposition-respecting
    isomorphism set from below and the boundary-graph isomorphism set
    from above; the empty coset is the uniform "no".
    """

    cells: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cells)


class _ExtData:
    """Deduped ?-block matrix of a disjoint-cone node with its canonical
    extension set, indexed the way the cell combination wants it."""

    __slots__ = ("vectors", "member", "row_bits", "blue_row", "red_row",
                 "blue_class", "profile")

    def __init__(self, graph: Graph, dec: DirectedDecomposition, t: int,
                 bound: BoundaryGraph):
        mat = associated_qblock(graph, dec, t)
        small, rep = dedupe(mat)
        ext = extension_set(small)
        self.vectors = ext.vectors
        self.member = tuple(frozenset(m) for m in ext.membership)
        self.row_bits = tuple(
            tuple(v >> r & 1 for v in ext.vectors) for r in range(small.n)
        )
        self.blue_row = {v: rep[v] for v in bound.blues}
        gamma = dec.gamma[t]
        types = {}
        for x in range(graph.n):
            if not gamma >> x & 1:
                types[graph.adjacency[x] & gamma] = rep[x]
        self.red_row = tuple(types[w] for w in bound.reds)
        classes: dict[int, list[int]] = {}
        for v in bound.blues:
            classes.setdefault(self.blue_row[v], []).append(v)
        self.blue_class = {r: tuple(vs) for r, vs in classes.items()}
        # per-vector invariant: how the vector looks from the blue side
        prof = []
        for i in range(len(ext.vectors)):
            c = Counter(
                (i in self.member[r], self.row_bits[r][i], len(vs))
                for r, vs in self.blue_class.items()
                for _ in vs
            )
            prof.append(tuple(sorted(c.items())))
        self.profile = tuple(prof)

    def red_sig(self, i: int, order) -> tuple:
        """Membership and value of vector i at the given red rows."""
        return tuple(
            (i in self.member[r], self.row_bits[r][i])
            for r in (self.red_row[j] for j in order)
        )


class _PairRun:
    """Per-run caches: boundary graphs, node kinds, extension data."""

    def __init__(self, g1, g2, dec1, dec2, table, stats):
        self.graphs = (g1, g2)
        self.decs = (dec1, dec2)
        self.table = table
        self.stats = stats
        self._bound = ({}, {})
        self._ext = ({}, {})
        self._kind = ({}, {})
        self._shape = ({}, {})

    def boundary(self, side: int, t: int) -> BoundaryGraph:
        cache = self._bound[side]
        if t not in cache:
            cache[t] = boundary_graph(self.graphs[side], self.decs[side], t)
        return cache[t]

    def ext(self, side: int, t: int) -> _ExtData:
        cache = self._ext[side]
        if t not in cache:
            cache[t] = _ExtData(self.graphs[side], self.decs[side], t,
                                self.boundary(side, t))
        return cache[t]

    def kind(self, side: int, t: int) -> str:
        cache = self._kind[side]
        if t not in cache:
            dec = self.decs[side]
            ch = dec.children[t]
            if not ch:
                cache[t] = "leaf"
            elif (len({dec.gamma[u] for u in ch}) == 1
                  and dec.gamma[ch[0]] == dec.gamma[t]):
                cache[t] = "same"
            else:
                cache[t] = "disjoint"
        return cache[t]

    def shape(self, side: int, t: int) -> tuple:
        cache = self._shape[side]
        if t not in cache:
            dec = self.decs[side]
            cache[t] = tuple(sorted(
                dec.gamma[u].bit_count() for u in dec.children[t]
            ))
        return cache[t]


def _refuted(run: _PairRun, t: int, t2: int) -> bool:
    """Sound quick rejections: any isomorphism of the boundary graphs
    would transfer every invariant compared here."""
    if run.kind(0, t) != run.kind(1, t2):
        return True
    if run.shape(0, t) != run.shape(1, t2):
        return True
    return run.boundary(0, t).signature() != run.boundary(1, t2).signature()


def _red_bijections(b1: BoundaryGraph, b2: BoundaryGraph):
    """All degree-respecting bijections between the red sides, as
    tuples mapping red position to red position."""
    by_pop1: dict[int, list[int]] = {}
    by_pop2: dict[int, list[int]] = {}
    for i, w in enumerate(b1.reds):
        by_pop1.setdefault(w.bit_count(), []).append(i)
    for j, w in enumerate(b2.reds):
        by_pop2.setdefault(w.bit_count(), []).append(j)
    if sorted(by_pop1) != sorted(by_pop2):
        return
    if any(len(by_pop1[p]) != len(by_pop2[p]) for p in by_pop1):
        return
    keys = sorted(by_pop1)
    pools = [list(permutations(by_pop2[p])) for p in keys]

    def assemble(k: int, phi: dict):
        if k == len(keys):
            yield tuple(phi[i] for i in range(len(b1.reds)))
            return
        for choice in pools[k]:
            for src, dst in zip(by_pop1[keys[k]], choice):
                phi[src] = dst
            yield from assemble(k + 1, phi)

    yield from assemble(0, {})


def _chi_bijections(e1: _ExtData, e2: _ExtData, phi) -> list[tuple]:
    """Extension-set bijections compatible with the red bijection.

    Backtracks in vector order; a candidate must show the same blue
    profile and the same membership and values at the reds phi pairs
    up, and every partial assignment must keep the per-row signature
    multisets of the two sides aligned.  Signatures are packed into
    integers two bits per step and tracked incrementally.
    """
    m = len(e1.vectors)
    order1 = range(len(e1.red_row))
    sig1 = [e1.red_sig(i, order1) for i in range(m)]
    sig2 = [e2.red_sig(j, phi) for j in range(m)]
    cand = []
    for i in range(m):
        cand.append([
            j for j in range(m)
            if e1.profile[i] == e2.profile[j] and sig1[i] == sig2[j]
        ])
        if not cand[i]:
            return []
    rows1 = sorted(e1.blue_class)
    rows2 = sorted(e2.blue_class)
    steps1 = {
        r: [2 * (i in e1.member[r]) + e1.row_bits[r][i] for i in range(m)]
        for r in rows1
    }
    steps2 = {
        r: [2 * (j in e2.member[r]) + e2.row_bits[r][j] for j in range(m)]
        for r in rows2
    }
    run1 = {r: 1 for r in rows1}
    run2 = {r: 1 for r in rows2}
    sizes1 = {r: len(e1.blue_class[r]) for r in rows1}
    sizes2 = {r: len(e2.blue_class[r]) for r in rows2}
    count1: dict = {}
    count2: dict = {}
    for r in rows1:
        key = (1, sizes1[r])
        count1[key] = count1.get(key, 0) + 1
    for r in rows2:
        key = (1, sizes2[r])
        count2[key] = count2.get(key, 0) + 1

    def push(run, count, steps, sizes, x):
        for r, s in run.items():
            key = (s, sizes[r])
            left = count[key] - 1
            if left:
                count[key] = left
            else:
                del count[key]
            s = (s << 2) + steps[r][x]
            run[r] = s
            key = (s, sizes[r])
            count[key] = count.get(key, 0) + 1

    def pop(run, count, sizes):
        for r, s in run.items():
            key = (s, sizes[r])
            left = count[key] - 1
            if left:
                count[key] = left
            else:
                del count[key]
            s >>= 2
            run[r] = s
            key = (s, sizes[r])
            count[key] = count.get(key, 0) + 1
    out: list[tuple] = []
    img = [0] * m
    used = set()
    budget = CHI_SEARCH_CAP

    def extend(i: int):
        nonlocal budget
        budget -= 1
        if budget < 0:
            raise RuntimeError("extension bijection search exceeded its cap")
        if i == m:
            out.append(tuple(img))
            return
        for j in cand[i]:
            if j in used:
                continue
            used.add(j)
            img[i] = j
            push(run1, count1, steps1, sizes1, i)
            push(run2, count2, steps2, sizes2, j)
            if count1 == count2:
                extend(i + 1)
            pop(run1, count1, sizes1)
            pop(run2, count2, sizes2)
            used.discard(j)

    extend(0)
    return out


def _kuhn_match(left, right, ok) -> dict | None:
    """Perfect matching on a bipartite relation, or None."""
    match: dict = {}

    def augment(u, seen) -> bool:
        for v in right:
            if v in seen or not ok(u, v):
                continue
            seen.add(v)
            if v not in match or augment(match[v], seen):
                match[v] = u
                return True
        return False

    for u in left:
        if not augment(u, set()):
            return None
    return {u: v for v, u in match.items()}


def _lex_min_matching(left, right, ok) -> dict | None:
    """Lexicographically least perfect matching in child order."""
    fixed: dict = {}

    def feasible(rest_left, banned) -> bool:
        return _kuhn_match(
            rest_left,
            [v for v in right if v not in banned],
            lambda u, v: ok(u, v) and v not in banned,
        ) is not None

    banned: set = set()
    for pos, u in enumerate(left):
        rest = left[pos + 1:]
        for v in right:
            if v in banned or not ok(u, v):
                continue
            if feasible(rest, banned | {v}):
                fixed[u] = v
                banned.add(v)
                break
        else:
            return None
    return fixed


def _close_components(cellmat: dict, ch1, ch2) -> None:
    """Transitive saturation: inside one connected component of the
    nonemptiness graph every pair admits an isomorphism, so fill each
    empty pair with a single witness composed along a path."""
    edges = {(u, v) for (u, v), c in cellmat.items() if not c.is_empty()}
    if not edges:
        return
    adj: dict = {}
    for u, v in edges:
        adj.setdefault(("L", u), set()).add(("R", v))
        adj.setdefault(("R", v), set()).add(("L", u))
    for u in ch1:
        for v in ch2:
            if not cellmat[(u, v)].is_empty():
                continue
            start, goal = ("L", u), ("R", v)
            if start not in adj or goal not in adj:
                continue
            prev = {start: None}
            queue = [start]
            for node in queue:
                for nxt in sorted(adj.get(node, ())):
                    if nxt not in prev:
                        prev[nxt] = node
                        queue.append(nxt)
            if goal not in prev:
                continue
            path = [goal]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            path.reverse()
            psi = None
            for a, b in zip(path, path[1:]):
                if a[0] == "L":
                    step = cellmat[(a[1], b[1])].sigma
                else:
                    step = cellmat[(b[1], a[1])].sigma.inverse()
                psi = step if psi is None else psi * step
            n = cellmat[(u, v)].n
            cellmat[(u, v)] = Coset(n, psi, PermGroup(n))


def _glue(run, t, t2, phi, alpha, cellmat) -> Permutation:
    """One assembled bijection: phi on the reds, the chosen child
    witnesses on the blues.  Verified to be a boundary isomorphism, so
    the claims behind the construction are checked at runtime."""
    b1, b2 = run.boundary(0, t), run.boundary(1, t2)
    images = [None] * b1.n
    for i in range(b1.n_red):
        images[b1.n_blue + i] = b2.n_blue + phi[i]
    for u, u2 in alpha.items():
        w = cellmat[(u, u2)].sigma
        bu, bu2 = run.boundary(0, u), run.boundary(1, u2)
        for k, v in enumerate(bu.blues):
            k2 = w(k)
            assert k2 < bu2.n_blue, "child witness moved a blue off-colour"
            images[b1.blue_index(v)] = b2.blue_index(bu2.blues[k2])
    psi = Permutation(tuple(images))
    assert _is_boundary_iso(b1, b2, psi), "glued map is not an isomorphism"
    return psi


def _lift(bu2: BoundaryGraph, b2: BoundaryGraph,
          g: Permutation) -> Permutation:
    """Child automorphism extended by the identity outside its cone."""
    images = list(range(b2.n))
    for k in range(bu2.n_blue):
        k2 = g(k)
        assert k2 < bu2.n_blue, "child group element moved a blue off-colour"
        images[b2.blue_index(bu2.blues[k])] = b2.blue_index(bu2.blues[k2])
    return Permutation(tuple(images))


def _disjoint_cell(run: _PairRun, t: int, t2: int, children: dict) -> Coset:
    """Steps 2 through 6 for a pair of disjoint-cone nodes."""
    b1, b2 = run.boundary(0, t), run.boundary(1, t2)
    n = b2.n
    e1, e2 = run.ext(0, t), run.ext(1, t2)
    if len(e1.vectors) != len(e2.vectors):
        return Coset.empty(n)
    if Counter(e1.profile) != Counter(e2.profile):
        return Coset.empty(n)
    ch1 = sorted(run.decs[0].children[t])
    ch2 = sorted(run.decs[1].children[t2])
    gamma1, gamma2 = run.decs[0].gamma, run.decs[1].gamma
    rows2_of: dict = {}
    for r in e2.blue_class:
        key = (e2.member[r], e2.row_bits[r])
        rows2_of.setdefault(key, []).append(r)
    result = Coset.empty(n)
    restricted_cache: dict = {}

    for phi in _red_bijections(b1, b2):
        for chi in _chi_bijections(e1, e2, phi):
            chi_inv = [0] * len(chi)
            for i, j in enumerate(chi):
                chi_inv[j] = i
            # blue target classes induced by chi, in original vertex ids
            allowed: dict[int, tuple] = {}
            feasible = True
            for r in sorted(e1.blue_class):
                need = (
                    frozenset(chi[i] for i in e1.member[r]),
                    tuple(e1.row_bits[r][chi_inv[j]] for j in range(len(chi))),
                )
                rows = rows2_of.get(need, ())
                targets = tuple(
                    v2 for r2 in rows for v2 in e2.blue_class[r2]
                )
                if not targets:
                    feasible = False
                    break
                allowed[r] = targets
            if not feasible:
                continue

            cellmat: dict = {}
            for u in ch1:
                bu = run.boundary(0, u)
                for u2 in ch2:
                    bu2 = run.boundary(1, u2)
                    base = children[(u, u2)]
                    if base.is_empty():
                        cellmat[(u, u2)] = base
                        continue
                    pins: dict[int, int] = {}
                    clash = False
                    for i, w in enumerate(b1.reds):
                        src = bu.red_index(w & gamma1[u])
                        dst = bu2.red_index(b2.reds[phi[i]] & gamma2[u2])
                        if pins.setdefault(src, dst) != dst:
                            clash = True
                            break
                    if clash:
                        cellmat[(u, u2)] = Coset.empty(base.n)
                        continue
                    sets: dict[int, tuple] = {}
                    dead = False
                    for k, v in enumerate(bu.blues):
                        local = tuple(
                            bu2.blue_index(v2)
                            for v2 in allowed[e1.blue_row[v]]
                            if gamma2[u2] >> v2 & 1
                        )
                        if not local:
                            dead = True
                            break
                        sets[k] = local
                    if dead:
                        cellmat[(u, u2)] = Coset.empty(base.n)
                        continue
                    key = (u, u2, tuple(sorted(pins.items())),
                           tuple(sorted(sets.items())))
                    got = restricted_cache.get(key)
                    if got is None:
                        got = coset_restrict_sets(
                            coset_restrict(base, pins), sets
                        )
                        restricted_cache[key] = got
                    cellmat[(u, u2)] = got

            _close_components(cellmat, ch1, ch2)
            nonempty = lambda u, u2: not cellmat[(u, u2)].is_empty()
            alpha0 = _lex_min_matching(ch1, ch2, nonempty)
            if alpha0 is None:
                continue
            psi0 = _glue(run, t, t2, phi, alpha0, cellmat)
            inv0 = psi0.inverse()
            gens: list[Permutation] = []
            # matchings differing from alpha0 in at most three children
            for size in (2, 3):
                for sub in combinations(ch1, size):
                    spots = [alpha0[u] for u in sub]
                    for image in permutations(spots):
                        if image == tuple(spots):
                            continue
                        if any(
                            cellmat[(u, u2)].is_empty()
                            for u, u2 in zip(sub, image)
                        ):
                            continue
                        alt = dict(alpha0)
                        alt.update(zip(sub, image))
                        gens.append(
                            inv0 * _glue(run, t, t2, phi, alt, cellmat)
                        )
            lifted: list[tuple[int, Permutation]] = []
            for u in ch1:
                for u2 in ch2:
                    cell = cellmat[(u, u2)]
                    if cell.is_empty():
                        continue
                    bu2 = run.boundary(1, u2)
                    for g in cell.group.generators:
                        h = _lift(bu2, b2, g)
                        assert _is_boundary_iso(b2, b2, h), \
                            "lifted generator is not an automorphism"
                        lifted.append((u2, h))
            if len(lifted) <= 64:
                for (ua, ga), (ub, gb) in combinations(lifted, 2):
                    if ua != ub:
                        assert ga * gb == gb * ga, \
                            "disjoint-support lifts fail to commute"
            gens.extend(g for _, g in lifted)
            result = coset_lub(result, Coset(n, psi0, PermGroup(n, gens)))
    return result


def dp_node(run: _PairRun, t: int, t2: int, children: dict) -> Coset:
    """Combine child cells into the cell of one node pair.

    Leaves go by brute force, same-cone children by least upper bound
    of the child cells, disjoint-cone children by the full enumeration;
    every structural mismatch yields the empty coset.
    """
    b2 = run.boundary(1, t2)
    if _refuted(run, t, t2):
        return Coset.empty(b2.n)
    kind = run.kind(0, t)
    if kind == "leaf":
        return _coset_of(
            b2.n, _colour_isos(run.boundary(0, t), b2)
        )
    if kind == "same":
        out = Coset.empty(b2.n)
        for key in sorted(children):
            out = coset_lub(out, children[key])
        return out
    return _disjoint_cell(run, t, t2, children)


def _cell(run: _PairRun, t: int, t2: int) -> Coset:
    key = (t, t2)
    table = run.table.cells
    if key in table:
        return table[key]
    if _refuted(run, t, t2):
        out = Coset.empty(run.boundary(1, t2).n)
    else:
        children = {
            (u, u2): _cell(run, u, u2)
            for u in sorted(run.decs[0].children[t])
            for u2 in sorted(run.decs[1].children[t2])
        }
        out = dp_node(run, t, t2, children)
    table[key] = out
    return out


def iso_coset(g1: Graph, g2: Graph, dec1: DirectedDecomposition,
              dec2: DirectedDecomposition, stats: dict | None = None) -> Coset:
    """Root cell of the paired dynamic program.

    The result sandwiches the decomposition-respecting isomorphism set
    from below and ISO(g1, g2) from above; the empty coset is a value,
    never an exception.
    """
    for name, dec in (("first", dec1), ("second", dec2)):
        report = validate(dec, "normal")
        if not report.ok:
            raise ValueError(
                f"{name} decomposition is not normal: {report.problem}"
            )
    table = DPTable()
    run = _PairRun(g1, g2, dec1, dec2, table, stats)
    root1, root2 = dec1.roots()[0], dec2.roots()[0]
    out = _cell(run, root1, root2)
    assert run.boundary(1, root2).n == g2.n, "root boundary grew reds"
    if stats is not None:
        stats["cells"] = len(table)
    return out


def isomorphisms(g1: Graph, g2: Graph, k: int,
                 stats: dict | None = None) -> Coset:
    """The full isomorphism coset of two graphs of rank width at most k.

    Builds both canonical decompositions (raising a width error that
    names the offending input), rebuilds them into normal form, and
    runs the dynamic program; canonicity makes the root cell exact.
    Cover cap events from either construction are propagated as
    warnings and recorded in `stats`.
    """
    if stats is not None:
        stats.setdefault("cap_events", [])
    decs = []
    for name, g in (("first", g1), ("second", g2)):
        try:
            dec = canonical_decomposition(g, k)
        except RankWidthExceeded as exc:
            raise RankWidthExceeded(f"{name} input: {exc}") from None
        for flag in ("cover_cap_hit", "cover_fallback"):
            if dec.build_stats.get(flag):
                event = f"{name} input: {flag}"
                warnings.warn(event)
                if stats is not None:
                    stats["cap_events"].append(event)
        decs.append(dec)
    if g1.n != g2.n:
        return Coset.empty(g2.n)
    if g1.n == 0:
        return Coset.identity(0)
    normals = []
    for g, dec in zip((g1, g2), decs):
        norm = normalize(ConnFn.from_graph(g), dec)
        report = validate(norm, "normal")
        assert report.ok, f"normalization failed: {report.problem}"
        normals.append(norm)
    return iso_coset(g1, g2, normals[0], normals[1], stats=stats)
