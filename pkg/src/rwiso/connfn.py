"""Connectivity function oracles: minimum separations, free sets,
contractions, and tangle contraction.

A connectivity function is symmetric and submodular with value 0 on the
empty set.  Evaluations are memoized per function object; the memo is
invisible to callers (pure-function contract).
"""

from __future__ import annotations

from dataclasses import dataclass

from .f2linalg import Graph, VertexSet, bits_of, cut_rank_mask

__all__ = [
    "ConnFn",
    "Contraction",
    "SeparationQuery",
    "kappa_min",
    "kappa_min_mask",
    "free_set",
    "contract",
    "contract_tangle",
    "submasks",
    "ENUMERATION_LIMIT",
]

# the reference minimizer enumerates candidate separations outright;
# beyond this many free elements it refuses rather than hang
ENUMERATION_LIMIT = 22


def submasks(free: int):
    """All submasks of ``free``, ascending from 0 to free itself."""
    sub = 0
    while True:
        yield sub
        if sub == free:
            return
        sub = (sub - free) & free


class ConnFn:
    """A connectivity function on the ground set {0..n-1}.

    ``fn`` maps a bitmask to a natural number.  Symmetry and
    submodularity are properties of the supplied oracle; they are spot
    checked in tests, never assumed silently corrected.
    """

    def __init__(self, n: int, fn, labels=None, name: str = "", graph=None):
        self.n = n
        self.labels = labels
        self.name = name
        self.graph = graph
        self._fn = fn
        self._memo: dict[int, int] = {}

    @classmethod
    def from_graph(cls, graph: Graph, name: str = "cut_rank") -> "ConnFn":
        # keeping the graph lets width computations switch to the
        # partition-rank shortcut; evaluation itself never needs it
        return cls(graph.n, lambda m: cut_rank_mask(graph, m),
                   labels=graph.labels, name=name, graph=graph)

    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def eval_mask(self, mask: int) -> int:
        v = self._memo.get(mask)
        if v is None:
            v = self._fn(mask)
            self._memo[mask] = v
        return v

    def eval(self, x: VertexSet) -> int:
        if x.n != self.n:
            raise ValueError("vertex set over the wrong ground set")
        return self.eval_mask(x.mask)

    def ground(self) -> VertexSet:
        return VertexSet.full(self.n)

    def __repr__(self):
        return f"ConnFn(n={self.n}, name={self.name!r})"


@dataclass(frozen=True)
class SeparationQuery:
    """Result of a minimum-separation query between disjoint sets.

    ``leftmost`` is the unique inclusion-least minimum separation,
    ``rightmost`` the unique inclusion-greatest one; both sit between x
    and the complement of y and have connectivity value ``order``.
    """

    x: VertexSet
    y: VertexSet
    order: int
    leftmost: VertexSet
    rightmost: VertexSet


def _enumerate_minimizer(conn: ConnFn, x: int, y: int) -> tuple[int, int]:
    """Reference minimizer: walk every Z with x <= Z <= ~y.

    The leftmost minimum separation is the intersection of all minimum
    separations (it attains the minimum again by submodularity), so a
    running AND over the minimizers suffices.
    """
    free = conn.full_mask() & ~x & ~y
    if free.bit_count() > ENUMERATION_LIMIT:
        raise ValueError(
            f"reference minimizer cannot enumerate {free.bit_count()} free "
            f"elements; supply a custom minimizer"
        )
    best = conn.eval_mask(x)
    meet = x
    for sub in submasks(free):
        z = x | sub
        k = conn.eval_mask(z)
        if k < best:
            best, meet = k, z
        elif k == best:
            meet &= z
    return best, meet


def kappa_min_mask(conn: ConnFn, x: int, y: int, minimizer=None) -> tuple[int, int, int]:
    """(order, leftmost mask, rightmost mask) for disjoint masks x, y.

    The rightmost minimum (x, y)-separation is the complement of the
    leftmost minimum (y, x)-separation.
    """
    if x & y:
        raise ValueError("kappa_min requires disjoint sets")
    minimize = minimizer or _enumerate_minimizer
    order, left = minimize(conn, x, y)
    order2, left_rev = minimize(conn, y, x)
    if order2 != order:
        raise AssertionError("minimizer disagreed with itself across sides")
    right = conn.full_mask() ^ left_rev
    if left & ~right:
        raise AssertionError("leftmost minimum separation not below rightmost")
    return order, left, right


def kappa_min(conn: ConnFn, x: VertexSet, y: VertexSet, minimizer=None) -> SeparationQuery:
    if x.n != conn.n or y.n != conn.n:
        raise ValueError("vertex set over the wrong ground set")
    order, left, right = kappa_min_mask(conn, x.mask, y.mask, minimizer)
    return SeparationQuery(
        x=x,
        y=y,
        order=order,
        leftmost=VertexSet(left, conn.n),
        rightmost=VertexSet(right, conn.n),
    )


def free_set(conn: ConnFn, x: VertexSet, minimizer=None) -> VertexSet:
    """A small witness set for the connectivity of x.

    Returns y inside x with kappa_min(y, complement of x) equal to
    kappa(x) and at most kappa(x) elements, grown greedily in ascending
    element order.  Each added element raises the separation order by at
    least one, which gives the size bound.
    """
    if x.n != conn.n:
        raise ValueError("vertex set over the wrong ground set")
    comp = conn.full_mask() ^ x.mask
    target = conn.eval_mask(x.mask)
    y = 0
    current = kappa_min_mask(conn, y, comp, minimizer)[0]
    while current < target:
        for e in bits_of(x.mask & ~y):
            candidate = y | (1 << e)
            value = kappa_min_mask(conn, candidate, comp, minimizer)[0]
            if value > current:
                y, current = candidate, value
                break
        else:
            raise AssertionError(
                "no element raises the separation order; oracle not submodular?"
            )
    return VertexSet(y, conn.n)


class Contraction(ConnFn):
    """Connectivity function obtained by collapsing disjoint parts.

    The contracted ground set lists the untouched base elements first in
    ascending order, then one fresh element per part: the optional
    designated part first, then the ordinary parts in the order given.
    Evaluation expands a contracted set and asks the base function.
    """

    def __init__(self, base: ConnFn, parts: list[int], c0: int | None):
        self.base = base
        full = base.full_mask()
        used = c0 or 0
        for p in parts:
            if p == 0:
                raise ValueError("contracted parts must be non-empty")
            if p & used:
                raise ValueError("contracted parts overlap")
            used |= p
        if used & ~full:
            raise ValueError("parts outside the ground set")

        self.b_mask = full & ~used
        expansions: list[int] = [1 << v for v in bits_of(self.b_mask)]
        origins: list[tuple] = [("base", v) for v in bits_of(self.b_mask)]
        self.c0_token: int | None = None
        if c0:
            self.c0_token = len(expansions)
            expansions.append(c0)
            origins.append(("part", 0))
        self.part_tokens: tuple[int, ...] = tuple(
            len(expansions) + i for i in range(len(parts))
        )
        for i, p in enumerate(parts, start=1):
            expansions.append(p)
            origins.append(("part", i))
        self.expansions = tuple(expansions)
        self.origins = tuple(origins)
        self.c0_mask = c0 or 0
        self.part_masks = tuple(parts)

        labels = []
        for kind, idx in origins:
            if kind == "base":
                labels.append(base.labels[idx] if base.labels else idx)
            else:
                labels.append(f"c{idx}")
        labels = tuple(labels)
        super().__init__(
            len(expansions),
            lambda m: base.eval_mask(self.expand_mask(m)),
            labels=labels,
            name=f"{base.name}|contracted",
        )

    def expand_mask(self, mask: int) -> int:
        out = 0
        for e in bits_of(mask):
            out |= self.expansions[e]
        return out

    def expand(self, x: VertexSet) -> VertexSet:
        if x.n != self.n:
            raise ValueError("vertex set over the wrong ground set")
        return VertexSet(self.expand_mask(x.mask), self.base.n)

    def push_down_mask(self, base_mask: int) -> int:
        """Smallest contracted set whose expansion covers base_mask:
        keeps the untouched elements and the token of every part the
        mask meets."""
        out = 0
        for e, exp in enumerate(self.expansions):
            if exp & base_mask:
                out |= 1 << e
        return out

    def push_down(self, x: VertexSet) -> VertexSet:
        if x.n != self.base.n:
            raise ValueError("vertex set over the wrong ground set")
        return VertexSet(self.push_down_mask(x.mask), self.n)

    def base_tokens(self) -> tuple[int, ...]:
        return tuple(e for e, o in enumerate(self.origins) if o[0] == "base")


def contract(conn: ConnFn, parts, c0: VertexSet | None = None) -> Contraction:
    """Collapse each part to a single element.

    ``parts`` are the ordinary parts, all non-empty.  ``c0`` is the
    optional designated part; if empty or None it is omitted from the
    contracted ground set entirely.
    """
    part_masks = []
    for p in parts:
        if p.n != conn.n:
            raise ValueError("part over the wrong ground set")
        part_masks.append(p.mask)
    c0_mask = None
    if c0 is not None and c0.mask:
        if c0.n != conn.n:
            raise ValueError("part over the wrong ground set")
        c0_mask = c0.mask
    return Contraction(conn, part_masks, c0_mask)


def contract_tangle(tangle, contraction: Contraction):
    """Push a tangle through a contraction.

    Returns the contracted tangle of the same order, or None when some
    contracted part belongs to the tangle (the result would break the
    tangle axioms; this is a signal, not an error).
    """
    parts = list(contraction.part_masks)
    if contraction.c0_mask:
        parts.append(contraction.c0_mask)
    for p in parts:
        if tangle.contains_mask(p):
            return None
    from .tangleset import tangle_from_membership

    def member(mask: int) -> bool:
        return tangle.contains_mask(contraction.expand_mask(mask))

    return tangle_from_membership(contraction, tangle.order, member)
