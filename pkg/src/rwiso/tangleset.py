"""Tangle enumeration, tangle separations, minimal elements, and triple
covers.

A tangle of order k orients every set of connectivity < k towards its
"big" side: members are the big sides.  Axioms: every member has
connectivity below the order (T.0); every set of connectivity below the
order has itself or its complement as a member (T.1); any three members
intersect (T.2); no singleton is a member (T.3).  T.1 + T.2 give
"exactly one of X, X-bar" and closure of membership under supersets
inside the order filter, which is why the inclusion-minimal members
determine the tangle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .connfn import ConnFn, kappa_min_mask
from .f2linalg import VertexSet, bits_of

__all__ = [
    "Tangle",
    "TangleStore",
    "enumerate_tangles",
    "separation",
    "tangle_set_separation",
    "minimal_elements",
    "triple_cover",
    "verify_triple_cover",
    "k_maximal",
    "truncate_tangle",
    "tangle_from_membership",
    "theta",
    "COVER_CAP",
]

# size cap for enumerating triple covers downstream; theta(3k-2) is
# astronomically large for k >= 2, so decomposition construction only
# walks covers up to this size and reports when the cap binds
COVER_CAP = 6


def theta(i: int) -> int:
    """theta(0) = 0, theta(i+1) = theta(i) + 3**theta(i).

    Grows so fast that theta(5) and beyond cannot be materialized;
    callers compare against it via theta_at_most.
    """
    if i < 0:
        raise ValueError("theta is defined on naturals")
    if i >= 5:
        raise OverflowError(f"theta({i}) is too large to materialize")
    v = 0
    for _ in range(i):
        v = v + 3**v
    return v


def theta_at_most(i: int, bound: int) -> bool:
    """Whether theta(i) <= bound, without materializing huge values."""
    v = 0
    for _ in range(i):
        if v > bound:
            return False
        if v > 10**6:
            raise OverflowError("theta comparison out of tractable range")
        v = v + 3**v
    return v <= bound


def _sort_key_mask(mask: int) -> tuple:
    return (mask.bit_count(), tuple(bits_of(mask)))


@dataclass(frozen=True)
class Tangle:
    """A tangle, represented by its order and inclusion-minimal members.

    Membership: X is a member iff kappa(X) < order and some minimal
    element is a subset of X.  The connectivity function rides along for
    membership tests but does not take part in equality.
    """

    order: int
    n: int
    minimal: tuple[int, ...]
    conn: ConnFn = field(compare=False, repr=False)

    def contains_mask(self, mask: int) -> bool:
        if self.conn.eval_mask(mask) >= self.order:
            return False
        return any(m & ~mask == 0 for m in self.minimal)

    def contains(self, x: VertexSet) -> bool:
        if x.n != self.n:
            raise ValueError("vertex set over the wrong ground set")
        return self.contains_mask(x.mask)

    def minimal_sets(self) -> list[VertexSet]:
        return [VertexSet(m, self.n) for m in self.minimal]

    def encoding(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(bits_of(m)) for m in self.minimal)

    def sort_key(self) -> tuple:
        return (self.order, self.encoding())

    def __repr__(self):
        elems = ", ".join("{" + ",".join(map(str, bits_of(m))) + "}" for m in self.minimal)
        return f"Tangle(order={self.order}, minimal=[{elems}])"


def minimal_elements(tangle: Tangle) -> list[VertexSet]:
    """All inclusionwise minimal members, in deterministic order."""
    return tangle.minimal_sets()


def _extract_minimal(members: list[int]) -> tuple[int, ...]:
    """Inclusion-minimal masks of a member list, sorted canonically."""
    minimal: list[int] = []
    for m in sorted(members, key=lambda v: v.bit_count()):
        if not any(p & ~m == 0 for p in minimal):
            minimal.append(m)
    return tuple(sorted(minimal, key=_sort_key_mask))


def _make_tangle(conn: ConnFn, order: int, minimal: tuple[int, ...]) -> Tangle:
    return Tangle(order=order, n=conn.n, minimal=minimal, conn=conn)


def tangle_from_membership(conn: ConnFn, order: int, member) -> Tangle:
    """Build a tangle of the given order from a membership oracle by
    scanning the whole ground power set.  Only viable on small ground
    sets; contraction images at desk scale qualify."""
    if conn.n > 20:
        raise ValueError("ground set too large for membership scan")
    members = [
        m for m in range(1 << conn.n)
        if conn.eval_mask(m) < order and member(m)
    ]
    return _make_tangle(conn, order, _extract_minimal(members))


def truncate_tangle(tangle: Tangle, ell: int) -> Tangle:
    """The truncation to order ell: members of connectivity below ell."""
    if ell > tangle.order:
        raise ValueError("truncation order exceeds tangle order")
    return tangle_from_membership(tangle.conn, ell, tangle.contains_mask)


def _enumerate_order(conn: ConnFn, ell: int) -> list[Tangle]:
    """All tangles of order exactly ell, by backtracking over
    orientations.

    Sets are processed in ascending (connectivity, size, lexicographic)
    order.  Deciding a set decides its complement; the axiom checks run
    against the current inclusion-minimal members only, which is exact
    because triple intersections shrink when members shrink.
    """
    full = conn.full_mask()
    masks = [m for m in range(1 << conn.n) if conn.eval_mask(m) < ell]
    masks.sort(key=lambda m: (conn.eval_mask(m), m.bit_count(), tuple(bits_of(m))))

    decided: dict[int, bool] = {}
    minimals: list[int] = []
    found: list[Tangle] = []

    def admit(mask: int) -> list | None:
        """Try to admit mask as a member (complement becomes a
        non-member).  Returns an undo log, or None if an axiom breaks."""
        if mask.bit_count() <= 1:
            return None  # singletons (and the empty set) can never be members
        for i, ma in enumerate(minimals):
            if ma & mask == 0:
                return None
            for mb in minimals[i + 1:]:
                if ma & mb & mask == 0:
                    return None
        log: list = [("decided", mask), ("decided", full ^ mask)]
        decided[mask] = True
        decided[full ^ mask] = False
        if not any(p & ~mask == 0 for p in minimals):
            log.append(("minimals", minimals.copy()))
            minimals[:] = [p for p in minimals if mask & ~p] + [mask]
        return log

    def undo(log: list):
        for kind, payload in reversed(log):
            if kind == "decided":
                del decided[payload]
            else:
                minimals[:] = payload

    def walk(pos: int):
        while pos < len(masks) and masks[pos] in decided:
            pos += 1
        if pos == len(masks):
            found.append(_make_tangle(conn, ell, _extract_minimal(minimals)))
            return
        mask = masks[pos]
        for side in (mask, full ^ mask):
            log = admit(side)
            if log is not None:
                walk(pos + 1)
                undo(log)

    walk(0)
    return found


class TangleStore:
    """Index of every tangle of order at most k for one connectivity
    function.

    Indices are stable: tangles are sorted by (order, lexicographically
    smallest minimal-element encoding).  Truncation links and pairwise
    leftmost minimum separations are precomputed.
    """

    def __init__(self, conn: ConnFn, k: int, tangles: list[Tangle]):
        self.conn = conn
        self._k = k
        self.tangles = sorted(tangles, key=lambda t: t.sort_key())
        self._index = {t.sort_key(): i for i, t in enumerate(self.tangles)}
        self._trunc: list[dict[int, int]] = []
        for t in self.tangles:
            links = {}
            for ell in range(t.order + 1):
                links[ell] = self._index[truncate_tangle(t, ell).sort_key()]
            self._trunc.append(links)
        self._sep: dict[tuple[int, int], int | None] = {}
        for i in range(len(self.tangles)):
            for j in range(len(self.tangles)):
                if i != j:
                    self._sep[(i, j)] = self._compute_separation(i, j)

    # the seven query functionalities

    def order(self) -> int:
        return self._k

    def size(self, ell: int) -> int:
        if not 0 <= ell <= self._k:
            raise IndexError("order out of range")
        return sum(1 for t in self.tangles if t.order <= ell)

    def __len__(self) -> int:
        return len(self.tangles)

    def tangle(self, i: int) -> Tangle:
        return self.tangles[i]

    def membership(self, i: int, x: VertexSet) -> bool:
        return self.tangles[i].contains(x)

    def tangle_order(self, i: int) -> int:
        return self.tangles[i].order

    def truncation(self, i: int, ell: int) -> int:
        if ell > self.tangles[i].order:
            return i
        return self._trunc[i][ell]

    def separation(self, i: int, j: int) -> VertexSet | None:
        if i == j:
            raise IndexError("separation requires distinct indices")
        mask = self._sep[(i, j)]
        return None if mask is None else VertexSet(mask, self.conn.n)

    def find(self, ell: int, member) -> int:
        """Index of the stored tangle of order ell agreeing with the
        membership oracle (a callable on masks)."""
        for i, t in enumerate(self.tangles):
            if t.order == ell and all(member(m) for m in t.minimal):
                return i
        raise ValueError("no stored tangle matches the oracle")

    # helpers

    def comparable(self, i: int, j: int) -> bool:
        """Whether one tangle is a truncation of the other."""
        ti, tj = self.tangles[i], self.tangles[j]
        if ti.order <= tj.order:
            return self.truncation(j, ti.order) == i
        return self.truncation(i, tj.order) == j

    def _compute_separation(self, i: int, j: int) -> int | None:
        if self.comparable(i, j):
            return None
        mask = pair_separation(self.conn, self.tangles[i], self.tangles[j])
        if mask is None:
            raise AssertionError("incomparable tangles admit a separation")
        return mask

    def index_of(self, tangle: Tangle) -> int:
        return self._index[tangle.sort_key()]


def pair_separation(conn: ConnFn, ti: Tangle, tj: Tangle) -> int | None:
    """Leftmost minimum (ti, tj)-separation mask: the least Z with Z a
    member of ti and the complement of Z a member of tj.

    Any such Z sits in a window [M, complement of N] for minimal members
    M of ti and N of tj, and the leftmost one is the meet of the window
    leftmosts over all order-attaining windows.
    """
    full = conn.full_mask()
    best: int | None = None
    meet = full
    for m in ti.minimal:
        for nn in tj.minimal:
            if m & nn:
                continue
            order, left, _ = kappa_min_mask(conn, m, nn)
            if best is None or order < best:
                best, meet = order, left
            elif order == best:
                meet &= left
    if best is None:
        return None
    if conn.eval_mask(meet) != best:
        raise AssertionError("meet of minimum separations lost minimality")
    if not (ti.contains_mask(meet) and tj.contains_mask(full ^ meet)):
        raise AssertionError("separation fell out of its tangles")
    return meet


def enumerate_tangles(conn: ConnFn, k: int) -> TangleStore:
    """Every tangle of order at most k, indexed deterministically."""
    if conn.n == 0:
        raise ValueError("cannot enumerate tangles over an empty ground set")
    if k < 0:
        raise ValueError("order bound must be non-negative")
    tangles: list[Tangle] = []
    for ell in range(k + 1):
        tangles.extend(_enumerate_order(conn, ell))
    return TangleStore(conn, k, tangles)


def separation(store: TangleStore, i: int, j: int) -> VertexSet | None:
    return store.separation(i, j)


def tangle_set_separation(tangle: Tangle, x: VertexSet, cache: dict | None = None) -> VertexSet | None:
    """Leftmost minimum (tangle, x)-separation: the least member of the
    tangle of minimum connectivity among members avoiding x, or None
    when every member meets x.

    Derived from window minimization over the minimal members: any
    member avoiding x lies in a window [M, complement of x].
    """
    if x.n != tangle.n:
        raise ValueError("vertex set over the wrong ground set")
    if tangle.contains(x):
        raise ValueError("query set lies in the tangle")
    mask = _tangle_set_separation_mask(tangle, x.mask, cache)
    return None if mask is None else VertexSet(mask, tangle.n)


def _tangle_set_separation_mask(tangle: Tangle, x_mask: int, cache: dict | None = None) -> int | None:
    if cache is not None and x_mask in cache:
        return cache[x_mask]
    conn = tangle.conn
    best: int | None = None
    meet = conn.full_mask()
    for m in tangle.minimal:
        if m & x_mask:
            continue
        order, left, _ = kappa_min_mask(conn, m, x_mask)
        if best is None or order < best:
            best, meet = order, left
        elif order == best:
            meet &= left
    result: int | None
    if best is None:
        result = None
    else:
        if conn.eval_mask(meet) != best or not tangle.contains_mask(meet):
            raise AssertionError("meet of minimum separations lost minimality")
        result = meet
    if cache is not None:
        cache[x_mask] = result
    return result


def triple_cover(tangle: Tangle) -> VertexSet:
    """A triple cover: a set meeting the common intersection of every
    three members.

    Built by the iterative witness construction.  In each round, for
    every ordered triple of queries (B1, B2, B3) covering the current
    set Q, take the leftmost minimum member avoiding each query and add
    the smallest element of their common intersection.  Covering query
    triples correspond exactly to member triples whose traces on Q have
    empty common intersection, which is what the invariant (uncovered
    triples have large total connectivity) requires; walking only the
    three-way partitions of Q misses overlapping traces and can yield a
    non-cover.  After 3*order - 2 rounds every member triple is covered.
    """
    if tangle.order < 1:
        raise ValueError("triple covers require order at least 1")
    sep_cache: dict[int, int | None] = {}
    q = 0
    rounds = 3 * tangle.order - 2
    for _ in range(rounds):
        if q.bit_count() > 7:
            raise RuntimeError(
                "triple cover construction grew past enumeration limits"
            )
        sep_of = {
            b: _tangle_set_separation_mask(tangle, b, sep_cache)
            for b in _submasks_list(q)
        }
        live = [(b, s) for b, s in sep_of.items() if s is not None]
        new = q
        for b1, s1 in live:
            for b2, s2 in live:
                s12 = s1 & s2
                need = q & ~(b1 | b2)
                for b3, s3 in live:
                    if b3 & need != need:
                        continue
                    common = s12 & s3
                    if common == 0:
                        raise AssertionError(
                            "members of a tangle must triple-intersect"
                        )
                    new |= common & -common  # smallest-ID witness
        q = new
    if not verify_triple_cover(tangle, VertexSet(q, tangle.n)):
        raise AssertionError("constructed set is not a triple cover")
    if theta_at_most(rounds, q.bit_count() - 1):
        # theta(rounds) <= |Q| - 1 would mean |Q| > theta(3*order - 2)
        raise AssertionError("triple cover exceeded its size bound")
    return VertexSet(q, tangle.n)


def _submasks_list(mask: int) -> list[int]:
    out = []
    sub = 0
    while True:
        out.append(sub)
        if sub == mask:
            return out
        sub = (sub - mask) & mask


def verify_triple_cover(tangle: Tangle, q: VertexSet) -> bool:
    """Check the triple-cover property on triples of minimal members;
    sufficient and necessary because every member contains a minimal
    one."""
    if q.n != tangle.n:
        raise ValueError("vertex set over the wrong ground set")
    mins = tangle.minimal
    for i, a in enumerate(mins):
        for j in range(i, len(mins)):
            b = mins[j]
            for t in range(j, len(mins)):
                if q.mask & a & b & mins[t] == 0:
                    return False
    return True


def k_maximal(store: TangleStore, ell: int) -> list[Tangle]:
    """Tangles of order ell together with the maximal tangles of
    smaller order (those that are no other tangle's truncation)."""
    if ell > store.order():
        raise ValueError("order exceeds the store bound")
    out = []
    for i, t in enumerate(store.tangles):
        if t.order == ell:
            out.append(t)
        elif t.order < ell:
            extended = any(
                other.order == t.order + 1 and store.truncation(j, t.order) == i
                for j, other in enumerate(store.tangles)
            )
            if not extended:
                out.append(t)
    return out
