"""Canonical treelike decompositions built from the tangles of a graph.

The pipeline has three layers.  A NodeContext packages one node of a
tangle tree as a contraction: the complement of the node's cone and the
child cones collapse to single points, everything else stays atomic.
The partition machinery then splits a set X of contracted points
canonically: small orders go through extremal families of low-order
separations (compute_Y_family / partition_small), large orders through
matroid-independent witness tuples (equiv_classes / split_big /
big_subtree).  Finally decompose_node expands one context into a
directed tree with singleton leaf cones and canonical_decomposition
glues the per-node trees along the tangle tree, one piece per maximal
tangle.

Canonical means label-independent: relabelling the input graph
relabels the output decomposition accordingly.  Every tie is broken by
ascending vertex or token id, so the construction is also
byte-deterministic; tests quotient the ids back out by checking
equivariance under random relabellings.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

from .connfn import (
    ConnFn,
    Contraction,
    contract,
    contract_tangle,
    kappa_min_mask,
    submasks,
)
from .decomp import (
    DirectedDecomposition,
    TangleTree,
    build_tangle_tree,
    validate,
    width,
)
from .f2linalg import Graph, VertexSet, bits_of, f2_rank_rows
from .qblock import extension_bound, incompatible_family_bound, lonely_threshold
from .tangleset import (
    Tangle,
    enumerate_tangles,
    k_maximal,
    theta,
    theta_at_most,
    triple_cover,
    verify_triple_cover,
)

__all__ = [
    "AssumptionError",
    "RankWidthExceeded",
    "BoundTable",
    "Polymatroid",
    "NodeContext",
    "PartitionResult",
    "EquivClassifier",
    "COVER_CAP",
    "make_context",
    "reduce_parts",
    "compute_Y_family",
    "partition_small",
    "find_split",
    "equiv_classes",
    "split_big",
    "big_subtree",
    "decompose_node",
    "canonical_decomposition",
]

# Largest cover size enumerated per context.  The theoretical bound
# theta(3*k0 - 2) is 1 for k0 = 1 but unmaterializable from k0 = 2 on,
# so enumeration is capped and the cap event recorded in the stats.
COVER_CAP = 6

# Enumeration guards; exceeding one is a scale problem of the input,
# not a correctness problem, and raises a diagnostic RuntimeError.
PATTERN_CAP = 20
TUPLE_CAP = 1 << 20
ORDER_PRODUCT_CAP = 1 << 17
MATERIALIZE_CAP = 1 << 24


class AssumptionError(ValueError):
    """A node context violates one of its structural preconditions.

    The message names the failed clause; such a violation means the
    tangle tree handed over inconsistent data and is always fatal.
    """


class RankWidthExceeded(ValueError):
    """The input graph has rank width above the requested bound."""


def _pow2_at_least(exp: int, value: int) -> bool:
    """Whether 2**exp >= value without materializing huge powers."""
    if value <= 0:
        return True
    if exp >= value.bit_length():
        return True
    return (1 << exp) >= value


def _shifted_at_least(base: int, exp: int, value: int) -> bool:
    """Whether base * 2**exp >= value, again exponent-first."""
    if base <= 0:
        return value <= 0
    if value <= base:
        return True
    need = (value + base - 1) // base
    if exp >= need.bit_length():
        return True
    return (base << exp) >= value


@dataclass(frozen=True)
class BoundTable:
    """Closed forms for every constant the construction quotes.

    Parameterized by the branch width ``k`` of the base function;
    quantities tied to a particular set X additionally take k1 =
    kappa-down(X) and k2 = k0 + k1 as arguments.  The probabilities
    p(ell) = 2**(-3**(k2 - ell)) and everything derived from them have
    tower-sized denominators, so all size predicates compare through
    exponents and only materialize fractions when they are small.

    Several constants are stated in the source material as existence
    bounds over all inputs (Ramsey-type thresholds).  Where the
    construction only ever needs them for a concrete instance, the
    table exposes the realized form instead: a1 and b1 take the actual
    family size, a2 takes the realized statistics of a run.  The
    blow-up thresholds they replace are never needed to run anything.

    Tree-size ledger.  The node-count argument chains four constants:
    a3 bounds the orders fed to the small-case machinery and is
    max(a1(ks, y), 2*(3k+2)*k - 2, (theta_cap + 1) * k) with ks =
    (3k+2)*k - 1 and y the realized family size; b is max(b1(a3, y),
    c1(a3)); q = 1 - 1/f1 at k2 = k + a3; and c is any exponent with
    q**c + (1-q)**c <= 1/(2*(b+1)), giving at most 1 + b*n**c nodes.
    Realizing c as (bits(2b+2) + 1) * 2**e0 with e0 = 3**(k + a3)
    satisfies the inequality: q**c <= exp(-c*(1-q)) < 1/(4*(b+1)) since
    c*(1-q) >= 0.75*(bits(2b+2)+1), and (1-q)**c <= 8**(-c) is smaller
    still.  All of these are monitors; tree_size_ok checks the count
    without materializing c.
    """

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("bound tables need branch width at least one")

    # ---- theta ----

    @staticmethod
    def theta(i: int) -> int:
        return theta(i)

    @staticmethod
    def theta_at_most(i: int, bound: int) -> bool:
        return theta_at_most(i, bound)

    # ---- p(ell) and friends ----

    def p_exponent(self, k2: int, ell: int) -> int:
        """e with p(ell) = 2**-e, namely 3**(k2 - ell)."""
        if not 0 <= ell <= k2:
            raise ValueError("p(ell) needs 0 <= ell <= k2")
        return 3 ** (k2 - ell)

    def p_fraction(self, k2: int, ell: int):
        from fractions import Fraction

        e = self.p_exponent(k2, ell)
        if e > MATERIALIZE_CAP:
            raise OverflowError("p(ell) too small to materialize")
        return Fraction(1, 1 << e)

    def f1_fraction(self, k2: int):
        """f1 = 1/(p(0) - p(0)**3), materialized when small enough."""
        from fractions import Fraction

        e0 = self.p_exponent(k2, 0)
        if 3 * e0 > MATERIALIZE_CAP:
            raise OverflowError("f1 too large to materialize")
        return Fraction(1 << (3 * e0), (1 << (2 * e0)) - 1)

    def good_size(self, k2: int, ell: int, x_size: int, z_size: int) -> bool:
        """p(ell) * |X| <= |Z| < |X|."""
        if z_size >= x_size:
            return False
        return _shifted_at_least(z_size, self.p_exponent(k2, ell), x_size)

    def balanced_size(self, k2: int, z_order: int, x_size: int,
                      z_size: int) -> bool:
        """|X|/3 - k2 + order <= |Z| <= 2|X|/3 + k2 - order."""
        slack = 3 * (k2 - z_order)
        return (3 * z_size >= x_size - slack
                and 3 * z_size <= 2 * x_size + slack)

    def shrink_ok(self, k2: int, x_size: int, part_size: int) -> bool:
        """part <= (1 - 1/f1) * |X|, the contraction guarantee."""
        if part_size >= x_size:
            return False
        e0 = self.p_exponent(k2, 0)
        if _pow2_at_least(e0, x_size):
            # the forbidden margin |X|/f1 is below one element
            return True
        lhs = (x_size - part_size) << (3 * e0)
        return lhs >= x_size * ((1 << (2 * e0)) - 1)

    def overlap_small(self, k2: int, ell: int, x_size: int,
                      overlap: int) -> bool:
        """|Z meet Z'| < p(ell)**3 * |X| (strict)."""
        return not _shifted_at_least(overlap, 3 * self.p_exponent(k2, ell),
                                     x_size)

    # ---- small-case constants, realized forms ----

    def a1(self, k1: int, family_size: int) -> int:
        """Order bound for sign-pattern parts: each part is an
        intersection of family_size sets of order <= 2*k1."""
        return max(self.k, 2 * k1 * family_size)

    def b1(self, k1: int, family_size: int) -> int:
        """Part-count bound: singletons below 6(k + k1), else at most
        one part per sign pattern."""
        if family_size > 64:
            raise OverflowError("family too large for b1")
        return max(6 * (self.k + k1), 1 << family_size)

    # ---- big-case constants ----

    def e1_exponent(self, k1: int, ell: int) -> int:
        """E with index(equivalence) <= 2**E.

        A class is determined by its canonical profile: per coordinate
        a sequence of at most L = ell * 2**(k1-1) column values (at
        most 2**k1 + 1 <= 2**(k1+1) choices each) plus L*L cross
        adjacency bits, so E = (k1 + 1) * L + L * L suffices.
        """
        if ell < 0 or k1 < 0:
            raise ValueError("e1 needs non-negative arguments")
        part_cap = 1 << max(k1 - 1, 0)
        biggest = ell * part_cap
        return (k1 + 1) * biggest + biggest * biggest

    def e1(self, k1: int, ell: int) -> int:
        e = self.e1_exponent(k1, ell)
        if e > MATERIALIZE_CAP:
            raise OverflowError("e1 too large to materialize")
        return 1 << e

    def e1_at_least(self, k1: int, ell: int, value: int) -> bool:
        return _pow2_at_least(self.e1_exponent(k1, ell), value)

    def e2_exponent(self, k1: int) -> int:
        """e2(k1) = e1(k1, 2**k1): tuple length is at most the number
        of distinct columns, which is at most 2**k1."""
        if k1 > 60:
            raise OverflowError("e2 exponent too large")
        return self.e1_exponent(k1, 1 << k1)

    def e2(self, k1: int) -> int:
        e = self.e2_exponent(k1)
        if e > MATERIALIZE_CAP:
            raise OverflowError("e2 too large to materialize")
        return 1 << e

    def e2_at_least(self, k1: int, value: int) -> bool:
        return _pow2_at_least(self.e2_exponent(k1), value)

    def small_threshold(self) -> int:
        """Orders below (3k+2)*k use the small-case machinery."""
        return (3 * self.k + 2) * self.k

    def c1_log2(self, k1: int) -> int:
        """log2 of the subtree node-count bound c1(k, k1); exact since
        every factor in the recurrence is a power of two."""
        thr = self.small_threshold()
        out = 0
        for j in range(thr, k1 + 1):
            out += 2 + self.e2_exponent(j)
        return out

    def c1(self, k1: int) -> int:
        e = self.c1_log2(k1)
        if e > MATERIALIZE_CAP:
            raise OverflowError("c1 too large to materialize")
        return 1 << e

    def c1_at_least(self, k1: int, value: int) -> bool:
        return _pow2_at_least(self.c1_log2(k1), value)

    # ---- width and tree-size monitors ----

    def a3(self, theta_cap: int, family_size: int) -> int:
        ks = self.small_threshold() - 1
        return max(
            self.a1(ks, max(family_size, 1)),
            2 * self.small_threshold() - 2,
            (theta_cap + 1) * self.k,
        )

    def a2_realized(self, qvee_max: int, family_max: int,
                    k1_small_max: int, k1_big_max: int) -> int:
        """Upper bound on any node width the construction can emit,
        from the realized run statistics.

        Per node type: root and singleton leaves stay at k; a cover
        node sees the cover singletons plus the remainder, at most
        (2*|Qv| + 1) * k; a sign-pattern node unions at most
        2**|family| parts of order a1 each; a disjoint-family node
        stays within 3*k1; a singleton split stays within
        6*(k + k1)*k; splitter nodes stay at the order of their set.
        """
        fam = max(family_max, 1)
        k1s = max(k1_small_max, 1)
        if fam > 64:
            raise OverflowError("family too large for the width monitor")
        return max(
            self.k,
            (2 * qvee_max + 1) * self.k,
            (1 << fam) * self.a1(k1s, fam),
            3 * k1s,
            6 * (self.k + k1s) * self.k,
            k1_big_max,
        )

    def tree_size_ok(self, n: int, count: int, theta_cap: int,
                     family_size: int) -> bool:
        """count <= 1 + b * n**c for the ledger's b and c.

        c is at least 2**e0 with e0 = 3**(k + a3) while b >= 1, so for
        n >= 2 it suffices that count - 1 fits in e0 bits; e0 itself is
        a modest integer even when c is astronomical.
        """
        if count <= 1:
            return True
        if n < 2:
            return False
        e0 = 3 ** (self.k + self.a3(theta_cap, family_size))
        return (count - 1).bit_length() <= e0

    # ---- mirrored table constants, for reporting ----

    def qblock_lonely(self) -> int:
        return lonely_threshold(self.k)

    def qblock_family(self) -> int:
        return incompatible_family_bound(self.k)

    def qblock_extension(self) -> int:
        return extension_bound(self.k)

    def report(self, k0: int | None = None) -> dict:
        """Materializable constants for the CLI bounds report."""
        out = {
            "k": self.k,
            "small_threshold": self.small_threshold(),
            "qblock_lonely": self.qblock_lonely(),
            "qblock_family": self.qblock_family(),
            "qblock_extension": self.qblock_extension(),
        }
        if k0 is not None:
            rounds = 3 * k0 - 2
            if theta_at_most(rounds, COVER_CAP):
                out["cover_bound"] = theta(rounds)
            else:
                out["cover_bound"] = f"capped at {COVER_CAP}"
        return out


@dataclass
class Polymatroid:
    """The integer polymatroid of separations toward a fixed set.

    lam(Y) is the minimum order of a separation between Y and x_mask;
    a set is independent when every subset Z satisfies |Z| <= lam(Z).
    The independent sets form a matroid, so the greedy scan in
    lex_first_independent returns the lexicographically least
    independent set of the requested size.
    """

    conn: ConnFn
    x_mask: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.x_mask & ~self.conn.full_mask():
            raise ValueError("x outside the ground set")

    def ground_mask(self) -> int:
        return self.conn.full_mask() & ~self.x_mask

    def lam(self, y_mask: int) -> int:
        if y_mask & self.x_mask:
            raise ValueError("lambda is only defined away from x")
        v = self._cache.get(y_mask)
        if v is None:
            v = kappa_min_mask(self.conn, y_mask, self.x_mask)[0]
            self._cache[y_mask] = v
        return v

    def independent(self, y_mask: int) -> bool:
        for sub in submasks(y_mask):
            if sub.bit_count() > self.lam(sub):
                return False
        return True

    def rank(self, y_mask: int) -> int:
        best = y_mask.bit_count()
        for sub in submasks(y_mask):
            best = min(best, self.lam(sub) + (y_mask & ~sub).bit_count())
        return best

    def lex_first_independent(self, candidates, size: int) -> int | None:
        """Greedy scan over candidates in the given priority order;
        returns a mask or None when the truncation has lower rank."""
        chosen = 0
        count = 0
        for e in candidates:
            if count == size:
                break
            bit = 1 << e
            if bit & chosen:
                raise ValueError("duplicate candidate element")
            # only subsets through the new element need re-checking
            if all(
                sub.bit_count() + 1 <= self.lam(sub | bit)
                for sub in submasks(chosen)
            ):
                chosen |= bit
                count += 1
        return chosen if count == size else None


def reduce_parts(graph: Graph, parts):
    """Delete twins inside each part: vertices whose neighbourhood
    outside the part repeats an earlier vertex's (smallest id stays).

    One simultaneous sweep per part equals the iterative deletion
    process: twin columns agree on every other part, so deletions
    elsewhere never change a part's twin classes.  Returns the induced
    graph on the kept vertices (ids compacted, order preserved), the
    parts in the new numbering, and the kept set in the old numbering.
    Cut ranks of sets respecting the partition are unchanged because a
    deleted row is a duplicate of a kept one in every relevant matrix.
    """
    full = (1 << graph.n) - 1
    part_masks = []
    used = 0
    for p in parts:
        if p.n != graph.n:
            raise ValueError("part over the wrong ground set")
        if p.mask & used:
            raise ValueError("parts overlap")
        used |= p.mask
        part_masks.append(p.mask)

    keep = full
    for pm in part_masks:
        seen: dict[int, int] = {}
        for v in bits_of(pm):
            key = graph.adjacency[v] & ~pm
            if key in seen:
                keep &= ~(1 << v)
            else:
                seen[key] = v

    old_ids = list(bits_of(keep))
    new_of = {v: i for i, v in enumerate(old_ids)}

    def compact(mask: int) -> int:
        out = 0
        for v in bits_of(mask & keep):
            out |= 1 << new_of[v]
        return out

    adjacency = tuple(compact(graph.adjacency[v]) for v in old_ids)
    labels = None
    if graph.labels is not None:
        labels = tuple(graph.labels[v] for v in old_ids)
    reduced = Graph(len(old_ids), adjacency, labels)
    new_parts = [VertexSet(compact(pm), reduced.n) for pm in part_masks]
    return reduced, new_parts, VertexSet(keep, graph.n)


@dataclass
class NodeContext:
    """One tangle-tree node, contracted and ready for partitioning.

    ``graph``/``conn`` are the twin-reduced graph and its cut rank;
    ``kd`` contracts them by the designated part c0 (the complement of
    the node's cone) and the child cones, ``kd_orig`` is the same
    contraction over the input graph so cones can be expanded back
    without losing deleted twins.  The two share token numbering.
    ``qvee`` is the token projection of the triple cover ``q``.
    ``stats`` accumulates realized monitor values during a run.
    """

    graph: Graph
    conn: ConnFn
    kd: Contraction
    kd_orig: Contraction
    k: int
    k0: int
    c0: VertexSet
    parts: tuple
    bounds: BoundTable
    tangle: Tangle | None = None
    tangle_down: Tangle | None = None
    q: VertexSet | None = None
    qvee: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def n_down(self) -> int:
        return self.kd.n

    @property
    def full_down(self) -> int:
        return self.kd.full_mask()

    @property
    def c0_bit(self) -> int:
        t = self.kd.c0_token
        return 0 if t is None else 1 << t

    def b_tokens(self) -> tuple:
        return self.kd.base_tokens()

    def bump(self, key: str, value: int) -> None:
        if value > self.stats.get(key, 0):
            self.stats[key] = value

    def with_cover(self, qvee: int) -> "NodeContext":
        """Same context under another cover projection; stats are
        shared so monitors aggregate across branches."""
        return replace(self, qvee=qvee)


def _check_set(ctx: NodeContext, x: VertexSet) -> int:
    if x.n != ctx.n_down:
        raise ValueError("set over the wrong contracted ground set")
    return x.mask


def _check_partition_target(ctx: NodeContext, x: VertexSet) -> int:
    xm = _check_set(ctx, x)
    if xm & (ctx.qvee | ctx.c0_bit):
        raise ValueError("X must avoid the cover projection and c0")
    return xm


def make_context(tangle_tree: TangleTree, t: int) -> NodeContext:
    """Build the NodeContext of one tangle-tree node.

    Verifies the structural assumptions (fatally: the tree machinery
    must not hand over inconsistent data), applies twin reduction
    inside the parts, builds the aligned contractions, pushes the
    governing tangle through, and constructs a triple-cover witness.
    """
    dag, store = tangle_tree.dag, tangle_tree.store
    conn = store.conn
    if conn.graph is None:
        raise ValueError("context construction needs a graph-backed cut rank")
    graph0 = conn.graph
    n = conn.n
    full = conn.full_mask()
    if not 0 <= t < len(dag):
        raise ValueError("node out of range")

    k = max(tg.order for tg in store.tangles)
    if k < 1:
        raise AssumptionError(
            "branch width below one; no context exists (positive-width)"
        )
    tangle0 = store.tangle(tangle_tree.tangles[t])
    k0 = tangle0.order
    gamma_t = dag.gamma[t]
    c0_mask = full & ~gamma_t
    child_cones = sorted(dag.gamma[u] for u in dag.children[t])

    covered = 0
    for cm in child_cones:
        if cm == 0 or cm & ~gamma_t or cm & covered:
            raise AssumptionError(
                "child cones must be non-empty, disjoint and inside the "
                "node's cone (parts-partition)"
            )
        covered |= cm
    all_parts = ([c0_mask] if c0_mask else []) + child_cones

    for pm in all_parts:
        if conn.eval_mask(pm) >= k:
            raise AssumptionError(
                f"part of order {conn.eval_mask(pm)} is not below the "
                f"branch width {k} (parts-below-branch-width)"
            )
    if not tangle0.contains_mask(gamma_t):
        raise AssumptionError(
            "the node's cone is not a member of its tangle (cone-in-tangle)"
        )
    for cm in child_cones:
        if tangle0.contains_mask(cm):
            raise AssumptionError(
                "a child cone belongs to the node's tangle "
                "(children-outside-tangle)"
            )

    maximal = k_maximal(store, k)
    owners = [
        tg
        for tg in maximal
        if tg.contains_mask(gamma_t)
        and not any(tg.contains_mask(cm) for cm in child_cones)
    ]
    if owners != [tangle0]:
        raise AssumptionError(
            "the governing tangle is not the unique maximal tangle oriented "
            "by the parts (unique-governing-tangle)"
        )
    for tg in maximal:
        if tg == tangle0:
            continue
        localized = any(
            any(mm & ~pm == 0 for mm in tg.minimal) for pm in all_parts
        )
        if not localized:
            raise AssumptionError(
                "a foreign maximal tangle has no member inside any part "
                "(foreign-tangles-localized)"
            )

    part_sets = [VertexSet(pm, n) for pm in all_parts]
    graph_r, parts_r, kept = reduce_parts(graph0, part_sets)
    conn_r = ConnFn.from_graph(graph_r)
    if c0_mask:
        c0_r, child_r = parts_r[0], parts_r[1:]
    else:
        c0_r, child_r = None, parts_r
    for pr in parts_r:
        if len(pr) > 1 << (k - 1):
            raise AssertionError(
                "twin reduction left a part above 2**(k-1) representatives"
            )

    kd = contract(conn_r, child_r, c0=c0_r)
    kd_orig = contract(
        conn,
        [VertexSet(cm, n) for cm in child_cones],
        c0=VertexSet(c0_mask, n) if c0_mask else None,
    )
    if kd.n != kd_orig.n:
        raise AssertionError("contractions disagree on the token count")
    old_ids = list(bits_of(kept.mask))
    for tok in range(kd.n):
        up_r = kd.expansions[tok]
        lifted = 0
        for v in bits_of(up_r):
            lifted |= 1 << old_ids[v]
        if lifted & ~kd_orig.expansions[tok]:
            raise AssertionError("token expansions fell out of alignment")
    # twin deletion must not move the contracted function
    probe = [1 << i for i in range(kd.n)]
    probe += [
        (1 << i) | (1 << j)
        for i in range(kd.n)
        for j in range(i + 1, kd.n)
    ]
    if kd.n <= 10:
        probe = list(range(1 << kd.n))
    for m in probe:
        if kd.eval_mask(m) != kd_orig.eval_mask(m):
            raise AssertionError(
                "contracted functions disagree after twin reduction"
            )

    tangle_down = contract_tangle(tangle0, kd_orig)
    if tangle_down is None:
        raise AssumptionError(
            "a contracted part belongs to the governing tangle "
            "(children-outside-tangle)"
        )
    q = triple_cover(tangle0)
    qvee = kd_orig.push_down_mask(q.mask)
    if not verify_triple_cover(tangle_down, VertexSet(qvee, kd.n)):
        raise AssumptionError(
            "projected cover is not a triple cover of the contracted tangle "
            "(cover-projects)"
        )

    return NodeContext(
        graph=graph_r,
        conn=conn_r,
        kd=kd,
        kd_orig=kd_orig,
        k=k,
        k0=k0,
        c0=VertexSet(c0_mask, n),
        parts=tuple(VertexSet(cm, n) for cm in child_cones),
        bounds=BoundTable(k),
        tangle=tangle0,
        tangle_down=tangle_down,
        q=q,
        qvee=qvee,
    )


def compute_Y_family(ctx: NodeContext, x: VertexSet):
    """The canonical extremal family over X.

    Returns (ell, family) where ell is the minimum order of a good
    separation (a Z inside X with p(ell)|X| <= |Z| < |X|) and the
    family collects the complements of the maximum-size good
    separations of that order.  Candidates are generated per the
    rightmost-minimum characterization: every seed Z0 inside X of size
    at most ell together with a blocker element x gives the rightmost
    minimum (Z0, complement-plus-x)-separation; filtering by the size
    window and by minimum order toward the complement being exactly
    ell yields precisely the extremal sets.
    """
    kd = ctx.kd
    xm = _check_partition_target(ctx, x)
    x_size = xm.bit_count()
    k1 = kd.eval_mask(xm)
    k2 = ctx.k0 + k1
    if x_size < 6 * k2:
        raise ValueError("X below the size floor for the extremal family")
    if k1 >= ctx.bounds.small_threshold():
        raise ValueError("X has big order; use the splitter machinery")
    full = kd.full_mask()
    xbar = full & ~xm
    x_bits = list(bits_of(xm))

    chosen_ell = None
    zs: list[int] = []
    for ell in range(0, k1 + 1):
        candidates: set[int] = set()
        for size in range(0, ell + 1):
            for combo in itertools.combinations(x_bits, size):
                z0 = 0
                for v in combo:
                    z0 |= 1 << v
                for xx in bits_of(xm & ~z0):
                    blocker = xbar | (1 << xx)
                    candidates.add(kappa_min_mask(kd, z0, blocker)[2])
        zs = [
            z
            for z in sorted(candidates)
            if ctx.bounds.good_size(k2, ell, x_size, z.bit_count())
            and kappa_min_mask(kd, z, xbar)[0] == ell
        ]
        if zs:
            chosen_ell = ell
            break
    if chosen_ell is None:
        raise RuntimeError(
            "no good separation of any order exists over X; the extremal "
            "machinery received an impossible context"
        )

    best = max(z.bit_count() for z in zs)
    zfam = [z for z in zs if z.bit_count() == best]
    for za, zb in itertools.combinations(zfam, 2):
        if za | zb != xm and not ctx.bounds.overlap_small(
            k2, chosen_ell, x_size, (za & zb).bit_count()
        ):
            raise AssertionError(
                "extremal separations overlap beyond the cube bound"
            )
    family = [VertexSet(full & ~z, kd.n) for z in zfam]
    family.sort(key=lambda y: y.mask)
    ctx.bump("family_max", len(family))
    return chosen_ell, family


@dataclass(frozen=True)
class PartitionResult:
    """Outcome of one small-case split.

    ``case`` is "i" (sign patterns, including the singleton split used
    below the size floor) or "ii" (mutually X-disjoint family);
    ``branch`` refines it to singletons/signs/disjoint.  ``family``
    holds the extremal family behind the split, empty for singletons.
    """

    case: str
    branch: str
    parts: tuple
    ell: int | None
    family: tuple


def partition_small(ctx: NodeContext, x: VertexSet) -> PartitionResult:
    """Canonically partition a small-order X into strictly smaller
    parts, by singletons, sign patterns, or the disjoint family."""
    kd = ctx.kd
    xm = _check_partition_target(ctx, x)
    x_size = xm.bit_count()
    if x_size < 2:
        raise ValueError("partitioning needs at least two elements")
    k1 = kd.eval_mask(xm)
    if k1 >= ctx.bounds.small_threshold():
        raise ValueError("X has big order; use the splitter machinery")
    ctx.bump("k1_small_max", k1)
    k2 = ctx.k0 + k1
    full = kd.full_mask()
    xbar = full & ~xm

    if x_size < 6 * (ctx.k + k1):
        parts = [VertexSet(1 << v, kd.n) for v in bits_of(xm)]
        for p in parts:
            if kd.eval_mask(p.mask) > ctx.k:
                raise AssertionError("a singleton exceeds the branch width")
        return PartitionResult("i", "singletons", tuple(parts), None, ())

    ell, family = compute_Y_family(ctx, x)
    fam_masks = [y.mask for y in family]
    disjoint = all(
        (ya & yb) == xbar for ya, yb in itertools.combinations(fam_masks, 2)
    )

    if not disjoint:
        if len(fam_masks) > PATTERN_CAP:
            raise RuntimeError(
                "extremal family too large for sign-pattern enumeration"
            )
        plus = [ym & xm for ym in fam_masks]
        minus = [xm & ~p for p in plus]
        parts_m: list[int] = []
        for signs in itertools.product((True, False), repeat=len(plus)):
            cell = xm
            for i, s in enumerate(signs):
                cell &= plus[i] if s else minus[i]
                if not cell:
                    break
            if cell:
                parts_m.append(cell)
        parts_m = sorted(set(parts_m))
        a1 = ctx.bounds.a1(k1, len(fam_masks))
        for pm in parts_m:
            if kd.eval_mask(pm) > a1:
                raise AssertionError("sign-pattern part exceeds a1")
            if not ctx.bounds.shrink_ok(k2, x_size, pm.bit_count()):
                raise AssertionError("sign-pattern part did not shrink")
        if len(parts_m) > ctx.bounds.b1(k1, len(fam_masks)):
            raise AssertionError("more sign-pattern parts than b1 allows")
        result = PartitionResult(
            "i",
            "signs",
            tuple(VertexSet(pm, kd.n) for pm in parts_m),
            ell,
            tuple(family),
        )
    else:
        xs = [ym & xm for ym in fam_masks]
        union = 0
        for xi in xs:
            union |= xi
        x0 = xm & ~union
        if kd.eval_mask(x0) > k1:
            raise AssertionError("residue part exceeds k1")
        for xi in xs:
            if not ctx.bounds.shrink_ok(k2, x_size, xi.bit_count()):
                raise AssertionError("family part did not shrink")
        if x0.bit_count() >= x_size:
            raise AssertionError("residue part failed to shrink")
        # union orders: exact ell on proper sub-families, <= ell overall
        if len(fam_masks) <= 12:
            for r in range(1, len(fam_masks) + 1):
                for combo in itertools.combinations(fam_masks, r):
                    u = 0
                    for ym in combo:
                        u |= ym
                    order = kd.eval_mask(u)
                    if r < len(fam_masks):
                        if order != ell:
                            raise AssertionError(
                                "proper sub-family union order moved off ell"
                            )
                    elif order > ell:
                        raise AssertionError("family union order exceeds ell")
        else:
            for i, ym in enumerate(fam_masks[:-1]):
                if kd.eval_mask(ym) != ell:
                    raise AssertionError(
                        "proper sub-family union order moved off ell"
                    )
        parts_m = sorted(([x0] if x0 else []) + xs)
        result = PartitionResult(
            "ii",
            "disjoint",
            tuple(VertexSet(pm, kd.n) for pm in parts_m),
            ell,
            tuple(family),
        )

    got = 0
    for p in result.parts:
        if p.mask & got:
            raise AssertionError("partition parts overlap")
        got |= p.mask
    if got != xm:
        raise AssertionError("partition does not cover X")
    return result


def _lex_position_subsets(count: int):
    """Non-empty subsets of range(count), ordered lexicographically by
    their sorted element tuples (depth-first with growing prefixes)."""

    def rec(prefix: int, start: int):
        for j in range(start, count):
            m = prefix | (1 << j)
            yield m
            yield from rec(m, j + 1)

    yield from rec(0, 0)


def _find_split_mask(conn: ConnFn, x_mask: int, y_order) -> int:
    """Leftmost minimum separation splitting the witness set.

    Walks the seeds Z0 in lexicographic order of the supplied priority
    sequence and returns the first leftmost minimum (Z0, Y minus Z0)
    separation whose order is below both trace sizes.
    """
    y_all = 0
    for e in y_order:
        y_all |= 1 << e
    for posmask in _lex_position_subsets(len(y_order)):
        z0 = 0
        for pos in bits_of(posmask):
            z0 |= 1 << y_order[pos]
        rest = y_all & ~z0
        if not rest:
            continue
        order, left, _ = kappa_min_mask(conn, z0, rest)
        if order < z0.bit_count() and order < rest.bit_count():
            return left
    raise RuntimeError(
        "no separation splits the independent witness set; the matroid "
        "rank bound must have failed upstream"
    )


def find_split(ctx: NodeContext, x: VertexSet, y_ind: VertexSet) -> VertexSet:
    """Split a big-order X along an independent witness set."""
    kd = ctx.kd
    xm = _check_set(ctx, x)
    ym = _check_set(ctx, y_ind)
    if xm & ym:
        raise ValueError("witness set must avoid X")
    if ym & ctx.c0_bit:
        raise ValueError("witness set must avoid c0")
    if ym.bit_count() != 3 * ctx.k + 1:
        raise ValueError("witness set must have exactly 3k+1 elements")
    k1 = kd.eval_mask(xm)
    if k1 < ctx.bounds.small_threshold():
        raise ValueError("X has small order; use partition_small")
    if not Polymatroid(kd, xm).independent(ym):
        raise ValueError("witness set is not independent")
    z = _find_split_mask(kd, xm, list(bits_of(ym)))
    _assert_split(kd, xm, ym, z, k1)
    return VertexSet(z, kd.n)


def _assert_split(conn: ConnFn, xm: int, ym: int, z: int, k1: int) -> None:
    order = conn.eval_mask(z)
    if order >= (ym & z).bit_count() or order >= (ym & ~z).bit_count():
        raise AssertionError("split order reaches a witness trace size")
    for xa in (xm & z, xm & ~z):
        if not xa:
            raise AssertionError("split leaves an empty side of X")
        if conn.eval_mask(xa) >= k1:
            raise AssertionError("split did not lower the order of X")


class EquivClassifier:
    """Decides canonical equivalence of distinct-entry token tuples.

    Two tuples are equivalent when per-coordinate linear orders of the
    token expansions exist making (i) the column sequences toward X
    and (ii) all cross-coordinate adjacency matrices coincide.  The
    base side can always be read in ascending vertex id: transporting
    both orders by the positional mismatch keeps (i) and (ii) intact,
    so only the other side is searched.  ``key`` computes the
    lexicographically least profile over the order products, which
    buckets tuples without pairwise searches; key equality and search
    equivalence agree because the profile orbits coincide.
    """

    def __init__(self, ctx: NodeContext, x: VertexSet, ell: int):
        kd = ctx.kd
        self.ctx = ctx
        self.x_mask = _check_set(ctx, x)
        if ell < 1:
            raise ValueError("tuple length must be positive")
        self.ell = ell
        self.k1 = kd.eval_mask(self.x_mask)
        if self.k1 < ctx.bounds.small_threshold():
            raise ValueError("equivalence classes only drive the big case")
        self.xup = kd.expand_mask(self.x_mask)
        self.adj = ctx.graph.adjacency
        self._verts = {
            t: tuple(bits_of(kd.expand_mask(1 << t)))
            for t in bits_of(kd.full_mask() & ~self.x_mask)
        }
        self._key_cache: dict[tuple, tuple] = {}

    def _check_tuple(self, w) -> tuple:
        w = tuple(w)
        if len(w) != self.ell or len(set(w)) != len(w):
            raise ValueError("need a distinct-entry tuple of the set length")
        for t in w:
            if t not in self._verts:
                raise ValueError("tuple entry is not a token outside X")
        return w

    def _columns(self, order) -> tuple:
        return tuple(self.adj[v] & self.xup for v in order)

    def _cross(self, orders) -> tuple:
        bits = []
        for i, oi in enumerate(orders):
            for j, oj in enumerate(orders):
                if i == j:
                    continue
                for u in oj:
                    row = self.adj[u]
                    for v in oi:
                        bits.append((row >> v) & 1)
        return tuple(bits)

    def _order_products(self, w):
        perms = []
        total = 1
        for t in w:
            vs = self._verts[t]
            opts = [vs] if len(vs) == 1 else list(
                itertools.permutations(vs)
            )
            total *= len(opts)
            if total > ORDER_PRODUCT_CAP:
                raise RuntimeError(
                    "order search space too large; parts defeated the "
                    "twin-reduction size bound"
                )
            perms.append(opts)
        return itertools.product(*perms)

    def equivalent(self, w1, w2) -> bool:
        w1 = self._check_tuple(w1)
        w2 = self._check_tuple(w2)
        base = [self._verts[t] for t in w1]
        base_cols = [self._columns(o) for o in base]
        base_cross = self._cross(base)
        # per-coordinate candidates already filtered by condition (i)
        options = []
        for i, t in enumerate(w2):
            vs = self._verts[t]
            if len(vs) != len(base[i]):
                return False
            good = [
                o
                for o in itertools.permutations(vs)
                if self._columns(o) == base_cols[i]
            ]
            if not good:
                return False
            options.append(good)
        total = 1
        for opts in options:
            total *= len(opts)
            if total > ORDER_PRODUCT_CAP:
                raise RuntimeError(
                    "order search space too large; parts defeated the "
                    "twin-reduction size bound"
                )
        for choice in itertools.product(*options):
            if self._cross(choice) == base_cross:
                return True
        return False

    def key(self, w) -> tuple:
        """Lexicographically least (sizes, columns, cross) profile."""
        w = self._check_tuple(w)
        cached = self._key_cache.get(w)
        if cached is not None:
            return cached
        sizes = tuple(len(self._verts[t]) for t in w)
        best = None
        for choice in self._order_products(w):
            profile = (
                tuple(self._columns(o) for o in choice),
                self._cross(choice),
            )
            if best is None or profile < best:
                best = profile
        out = (sizes, best)
        self._key_cache[w] = out
        return out

    def classes(self, tuples) -> list:
        """Group tuples by canonical profile; classes and members are
        sorted, and the class count is checked against e1."""
        buckets: dict[tuple, list] = {}
        for w in tuples:
            buckets.setdefault(self.key(w), []).append(tuple(w))
        out = sorted((sorted(ws) for ws in buckets.values()),
                     key=lambda ws: ws[0])
        if not self.ctx.bounds.e1_at_least(self.k1, self.ell, len(out)):
            raise AssertionError("equivalence index exceeds e1")
        self.ctx.bump("class_max", len(out))
        return out

    def representatives(self, tuples) -> list:
        return [ws[0] for ws in self.classes(tuples)]


def equiv_classes(ctx: NodeContext, x: VertexSet, ell: int) -> EquivClassifier:
    """Lazy classifier for the tuple equivalence over X."""
    return EquivClassifier(ctx, x, ell)


def _sub_universe(ctx: NodeContext, universe_mask: int):
    """Cut rank restricted to a token subset, as its own ConnFn.

    Tokens are renumbered ascending; evaluation expands a subset and
    ranks its rows against the remaining columns of the restricted
    universe only.
    """
    kd = ctx.kd
    toks = list(bits_of(universe_mask))
    to_sub = {t: i for i, t in enumerate(toks)}
    up_all = kd.expand_mask(universe_mask)
    adj = ctx.graph.adjacency

    def from_sub(sub_mask: int) -> int:
        out = 0
        for i in bits_of(sub_mask):
            out |= 1 << toks[i]
        return out

    def fn(sub_mask: int) -> int:
        zup = kd.expand_mask(from_sub(sub_mask))
        cols = up_all & ~zup
        return f2_rank_rows([adj[v] & cols for v in bits_of(zup)])

    return ConnFn(len(toks), fn, name="restricted"), to_sub, from_sub


def split_big(ctx: NodeContext, x: VertexSet) -> list:
    """The canonical family of splitting partitions of a big-order X.

    One partition per equivalence class of complete witness tuples
    (complete: every column toward X appears among the entries'
    vertices), each obtained by restricting the universe to X plus the
    class representative, finding the lexicographically first
    independent witness set in tuple order, and splitting along it.
    """
    kd = ctx.kd
    xm = _check_set(ctx, x)
    k1 = kd.eval_mask(xm)
    if k1 < ctx.bounds.small_threshold():
        raise ValueError("X has small order; use partition_small")
    ctx.bump("k1_big_max", k1)
    full = kd.full_mask()
    xbar = full & ~xm
    xup = kd.expand_mask(xm)
    adj = ctx.graph.adjacency

    all_cols = {adj[v] & xup for v in bits_of(kd.expand_mask(xbar))}
    ell = len(all_cols)
    token_cols = {
        t: frozenset(adj[v] & xup for v in bits_of(kd.expand_mask(1 << t)))
        for t in bits_of(xbar)
    }
    cand = sorted(token_cols)
    if ell > len(cand):
        raise RuntimeError("fewer tokens than distinct columns")
    if math.perm(len(cand), ell) > TUPLE_CAP:
        raise RuntimeError("witness tuple space too large to enumerate")

    complete = []
    for w in itertools.permutations(cand, ell):
        seen: set[int] = set()
        for t in w:
            seen |= token_cols[t]
        if seen >= all_cols:
            complete.append(w)
    if not complete:
        raise RuntimeError("no complete witness tuple exists")

    classifier = equiv_classes(ctx, x, ell)
    classes = classifier.classes(complete)
    if not ctx.bounds.e2_at_least(k1, len(classes)):
        raise AssertionError("class count exceeds e2")

    c0_tok = kd.c0_token
    want = 3 * ctx.k + 1
    out: list[tuple[VertexSet, VertexSet]] = []
    seen_parts: set[tuple[int, int]] = set()
    universes: dict[int, tuple] = {}
    for ws in classes:
        w = ws[0]
        wmask = 0
        for t in w:
            wmask |= 1 << t
        entry = universes.get(xm | wmask)
        if entry is None:
            sub_conn, to_sub, from_sub = _sub_universe(ctx, xm | wmask)
            x_sub = 0
            for t in bits_of(xm):
                x_sub |= 1 << to_sub[t]
            # spot check: the restriction is invisible inside X
            for probe in itertools.islice(bits_of(xm), 4):
                if sub_conn.eval_mask(1 << to_sub[probe]) != kd.eval_mask(
                    1 << probe
                ):
                    raise AssertionError("restricted function moved inside X")
            if sub_conn.eval_mask(x_sub) != k1:
                raise AssertionError("restricted function moved on X itself")
            poly = Polymatroid(sub_conn, x_sub)
            entry = (sub_conn, to_sub, from_sub, x_sub, poly)
            universes[xm | wmask] = entry
        sub_conn, to_sub, from_sub, x_sub, poly = entry
        order = [to_sub[t] for t in w if t != c0_tok]
        y_sub = poly.lex_first_independent(order, want)
        if y_sub is None:
            raise RuntimeError(
                "no independent witness set of size 3k+1 in a complete "
                "class; the polymatroid rank bound failed"
            )
        y_order = [i for i in order if (y_sub >> i) & 1]
        z_sub = _find_split_mask(sub_conn, x_sub, y_order)
        _assert_split(sub_conn, x_sub, y_sub, z_sub, k1)
        z = from_sub(z_sub)
        x1, x2 = xm & z, xm & ~z
        for xa in (x1, x2):
            if kd.eval_mask(xa) >= k1:
                raise AssertionError("split did not lower the order of X")
        if (x1, x2) not in seen_parts:
            seen_parts.add((x1, x2))
            out.append((VertexSet(x1, kd.n), VertexSet(x2, kd.n)))
    out.sort(key=lambda pair: (pair[0].mask, pair[1].mask))
    return out


def big_subtree(ctx: NodeContext, x: VertexSet) -> DirectedDecomposition:
    """Recursive splitter tree bringing a big-order X down to small
    orders: below the threshold a node stays a leaf, otherwise one
    child per canonical partition carries the two sides below it."""
    kd = ctx.kd
    xm = _check_set(ctx, x)
    k1 = kd.eval_mask(xm)
    thr = ctx.bounds.small_threshold()
    gammas: list[int] = []
    edges: list[tuple[int, int]] = []

    def rec(mask: int) -> int:
        me = len(gammas)
        gammas.append(mask)
        if kd.eval_mask(mask) >= thr:
            for x1, x2 in split_big(ctx, VertexSet(mask, kd.n)):
                mid = len(gammas)
                gammas.append(mask)
                edges.append((me, mid))
                edges.append((mid, rec(x1.mask)))
                edges.append((mid, rec(x2.mask)))
        return me

    rec(xm)
    dec = DirectedDecomposition(kd.n, gammas, edges)
    leaves = dec.leaf_nodes()
    covered = 0
    for t in leaves:
        covered |= dec.gamma[t]
        if kd.eval_mask(dec.gamma[t]) >= thr:
            raise AssertionError("a splitter leaf still has big order")
    if covered != xm:
        raise AssertionError("splitter leaves do not cover X")
    for g in dec.gamma:
        if kd.eval_mask(g) > k1:
            raise AssertionError("splitter node order exceeds k1")
    if not ctx.bounds.c1_at_least(k1, len(dec.gamma)):
        raise AssertionError("splitter node count exceeds c1")
    return dec


def _minimal_triple_meets(tangle: Tangle) -> list[int]:
    """Inclusion-minimal intersections of member triples (with
    repetition), over the minimal members; hitting these is exactly
    the triple-cover property."""
    meets = sorted(
        {
            a & b & c
            for a, b, c in itertools.combinations_with_replacement(
                tangle.minimal, 3
            )
        },
        key=lambda m: (m.bit_count(), m),
    )
    kept: list[int] = []
    for m in meets:
        if not any(o & ~m == 0 for o in kept):
            kept.append(m)
    return kept


def _enumerate_covers(ctx: NodeContext, cap: int = COVER_CAP):
    """All cover projections the decomposition branches over.

    Triple covers of the governing tangle are enumerated over the
    input vertex set up to the theoretical size bound, or up to the
    cap when that bound is unmaterializable (recorded).  Projections
    are deduplicated: branches only ever see the projected cover.
    """
    tangle = ctx.tangle
    if tangle is None:
        raise ValueError("context carries no tangle to cover")
    rounds = 3 * ctx.k0 - 2
    if theta_at_most(rounds, cap):
        bound = theta(rounds)
        cap_hit = False
    else:
        bound = cap
        cap_hit = True
    meets = _minimal_triple_meets(tangle)
    n = tangle.n
    total = sum(math.comb(n, s) for s in range(1, bound + 1))
    if total > 200_000:
        raise RuntimeError("cover enumeration too large at this size")

    qvees: set[int] = set()
    for size in range(1, bound + 1):
        for combo in itertools.combinations(range(n), size):
            qm = 0
            for v in combo:
                qm |= 1 << v
            if all(qm & meet for meet in meets):
                qvees.add(ctx.kd_orig.push_down_mask(qm))
    fallback = False
    if not qvees:
        # the constructed witness always exists; enumeration can only
        # miss it when the cap bites
        fallback = True
        qvees.add(ctx.kd_orig.push_down_mask(ctx.q.mask))
    out = sorted(qvees, key=lambda m: (m.bit_count(), m))
    for qv in out:
        if not verify_triple_cover(
            ctx.tangle_down, VertexSet(qv, ctx.n_down)
        ):
            raise AssertionError(
                "a projected cover fails the triple-cover property"
            )
    ctx.stats["cover_cap_hit"] = cap_hit or ctx.stats.get(
        "cover_cap_hit", False
    )
    ctx.stats["cover_fallback"] = fallback or ctx.stats.get(
        "cover_fallback", False
    )
    ctx.bump("cover_count", len(out))
    return out


def decompose_node(ctx: NodeContext) -> DirectedDecomposition:
    """Directed tree over the contracted universe of one context.

    The root keeps the bag {c0}.  Per cover projection Qv a cover node
    carries everything but c0, with one singleton leaf per element of
    Qv and one remainder child; remainders are expanded recursively by
    the small or big machinery down to singleton cones.  The realized
    width is checked against the a2 monitor.
    """
    kd = ctx.kd
    full = kd.full_mask()
    c0b = ctx.c0_bit
    gammas: list[int] = [full]
    edges: list[tuple[int, int]] = []
    if full.bit_count() == 1:
        return DirectedDecomposition(kd.n, gammas, edges)

    def add(mask: int, parent: int) -> int:
        node = len(gammas)
        gammas.append(mask)
        edges.append((parent, node))
        return node

    pending: list[tuple[int, int, NodeContext]] = []
    for qv in _enumerate_covers(ctx):
        ctx.bump("qvee_max", qv.bit_count())
        branch = ctx.with_cover(qv)
        s = add(full & ~c0b, 0)
        for qtok in bits_of(qv & ~c0b):
            add(1 << qtok, s)
        rest = full & ~(qv | c0b)
        if rest:
            t = add(rest, s)
            pending.append((t, rest, branch))

    while pending:
        node, xm, branch = pending.pop(0)
        if xm.bit_count() <= 1:
            continue
        if kd.eval_mask(xm) >= ctx.bounds.small_threshold():
            sub = big_subtree(branch, VertexSet(xm, kd.n))
            mapping = {0: node}
            for i in range(1, len(sub.gamma)):
                mapping[i] = len(gammas)
                gammas.append(sub.gamma[i])
            for a, b in sub.edges:
                edges.append((mapping[a], mapping[b]))
            for t in sub.leaf_nodes():
                if sub.gamma[t].bit_count() > 1:
                    pending.append((mapping[t], sub.gamma[t], branch))
        else:
            res = partition_small(branch, VertexSet(xm, kd.n))
            for part in res.parts:
                child = add(part.mask, node)
                if part.mask.bit_count() > 1:
                    pending.append((child, part.mask, branch))

    dec = DirectedDecomposition(kd.n, gammas, edges)
    for t in dec.nodes():
        if len(dec.parents[t]) > 1:
            raise AssertionError("decomposition tree grew a second parent")
    if dec.bag_mask(0) != c0b:
        raise AssertionError("root bag moved off {c0}")
    ctx.bump("node_max", len(dec.gamma))
    monitor = ctx.bounds.a2_realized(
        ctx.stats.get("qvee_max", 0),
        ctx.stats.get("family_max", 0),
        ctx.stats.get("k1_small_max", 0),
        ctx.stats.get("k1_big_max", 0),
    )
    got = width(kd, dec)
    if got > monitor:
        raise AssertionError(
            f"decomposition width {got} exceeds the monitor {monitor}"
        )
    ctx.bump("width_max", got)
    if not ctx.bounds.tree_size_ok(
        kd.n,
        len(dec.gamma),
        max(ctx.stats.get("qvee_max", 0), 1),
        ctx.stats.get("family_max", 0),
    ):
        raise AssertionError("node count exceeds the tree-size monitor")
    return dec


def _join_piece(graph: Graph, tree: TangleTree, pieces: dict) -> tuple:
    """Product of the per-node trees along one tangle tree.

    Nodes are pairs (tree node, inner node); edges are the inner edges
    plus one link per inner leaf whose expanded cone equals a child
    cone, pointing at that child's inner root.
    """
    id_map: dict[tuple[int, int], int] = {}
    gammas: list[int] = []
    edges: list[tuple[int, int]] = []
    order = sorted(tree.dag.nodes())
    for t1 in order:
        ctx, inner = pieces[t1]
        for t2 in inner.nodes():
            id_map[(t1, t2)] = len(gammas)
            if t2 == 0:
                gammas.append(tree.dag.gamma[t1])
            else:
                gammas.append(ctx.kd_orig.expand_mask(inner.gamma[t2]))
        for a, b in inner.edges:
            edges.append((id_map[(t1, a)], id_map[(t1, b)]))
    for t1 in order:
        ctx, inner = pieces[t1]
        cone_child = {tree.dag.gamma[u]: u for u in tree.dag.children[t1]}
        for t2 in inner.leaf_nodes():
            up = ctx.kd_orig.expand_mask(inner.gamma[t2])
            u1 = cone_child.get(up)
            if u1 is not None:
                edges.append((id_map[(t1, t2)], id_map[(u1, 0)]))
    return gammas, edges


def canonical_decomposition(
    graph: Graph, k: int, verify: bool = False
) -> DirectedDecomposition:
    """Canonical treelike decomposition of a graph of rank width <= k.

    One piece per maximal tangle: build its tangle tree, decompose
    every tree node, then join the per-node trees by the product
    construction; the result is the disjoint union of the pieces.
    Raises RankWidthExceeded when an order-(k+1) tangle exists.  The
    returned decomposition carries the aggregated monitor statistics
    in ``build_stats``.  ``verify`` re-validates the axioms and the
    width monitor on the assembled object.
    """
    if k < 0:
        raise ValueError("rank width bound must be non-negative")
    n = graph.n
    if n == 0:
        dec = DirectedDecomposition(0, [0], [])
        dec.build_stats = {}
        return dec
    full = (1 << n) - 1
    if n == 1 or graph.edge_count() == 0:
        gammas = [full] + [1 << v for v in range(n)] if n > 1 else [full]
        edges = [(0, v + 1) for v in range(n)] if n > 1 else []
        dec = DirectedDecomposition(n, gammas, edges)
        dec.build_stats = {}
        return dec

    conn = ConnFn.from_graph(graph)
    store = enumerate_tangles(conn, k + 1)
    bw = max(tg.order for tg in store.tangles)
    if bw > k:
        raise RankWidthExceeded(
            f"rank width exceeds the requested bound {k}"
        )

    roots = k_maximal(store, bw)
    gammas: list[int] = []
    edges: list[tuple[int, int]] = []
    stats: dict = {}
    monitors: list[int] = []
    for root in roots:
        tree = build_tangle_tree(store, root, bw)
        pieces: dict[int, tuple] = {}
        for t1 in sorted(tree.dag.nodes()):
            ctx = make_context(tree, t1)
            pieces[t1] = (ctx, decompose_node(ctx))
            for key, val in ctx.stats.items():
                if isinstance(val, bool):
                    stats[key] = stats.get(key, False) or val
                else:
                    stats[key] = max(stats.get(key, 0), val)
            monitors.append(
                ctx.bounds.a2_realized(
                    ctx.stats.get("qvee_max", 0),
                    ctx.stats.get("family_max", 0),
                    ctx.stats.get("k1_small_max", 0),
                    ctx.stats.get("k1_big_max", 0),
                )
            )
        piece_gammas, piece_edges = _join_piece(graph, tree, pieces)
        offset = len(gammas)
        gammas.extend(piece_gammas)
        edges.extend((a + offset, b + offset) for a, b in piece_edges)

    dec = DirectedDecomposition(n, gammas, edges)
    stats["pieces"] = len(roots)
    stats["monitor"] = max(monitors) if monitors else 0
    dec.build_stats = stats
    if verify:
        rep = validate(dec, "treelike")
        if not rep:
            raise AssertionError(
                f"assembled decomposition invalid: {rep.problem}"
            )
        got = width(conn, dec)
        if monitors and got > max(max(monitors), k):
            raise AssertionError(
                f"assembled width {got} exceeds the monitor"
            )
        stats["width"] = got
    return dec
