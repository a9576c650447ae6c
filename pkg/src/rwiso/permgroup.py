"""Permutation groups and cosets of bijections.

Groups are generated sets of permutations over {0..n-1} with a
deterministic stabilizer chain (base points ascending) built lazily for
membership, order, and element counting.  A coset is either empty or a
witness bijection times a group on the target side; least upper bounds
and partial-map restrictions keep cosets closed under the operations
the isomorphism dynamic program needs.

Composition reads left to right: ``(g * h)(x) == h(g(x))``, so a coset
element ``sigma * g`` applies the witness first, then the group part.
"""

from __future__ import annotations

from dataclasses import dataclass

from .f2linalg import bits_of

__all__ = [
    "Permutation",
    "PermGroup",
    "Coset",
    "orbit",
    "stabilizer",
    "coset_lub",
    "coset_restrict",
    "coset_restrict_sets",
    "coset_json",
]

SET_SEARCH_CAP = 500_000


@dataclass(frozen=True, slots=True)
class Permutation:
    """A bijection of {0..n-1} stored as its image array."""

    images: tuple[int, ...]

    def __post_init__(self):
        seen = [False] * len(self.images)
        for x in self.images:
            if not 0 <= x < len(self.images) or seen[x]:
                raise ValueError("image array is not a bijection")
            seen[x] = True

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def from_cycles(cls, n: int, cycles) -> "Permutation":
        images = list(range(n))
        for cycle in cycles:
            for i, x in enumerate(cycle):
                images[x] = cycle[(i + 1) % len(cycle)]
        return cls(tuple(images))

    @property
    def n(self) -> int:
        return len(self.images)

    def __call__(self, x: int) -> int:
        return self.images[x]

    def __mul__(self, other: "Permutation") -> "Permutation":
        """Left-to-right composition: self first, then other."""
        if len(other.images) != len(self.images):
            raise ValueError("composing permutations of different degrees")
        return Permutation(tuple(other.images[x] for x in self.images))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.images)
        for x, y in enumerate(self.images):
            inv[y] = x
        return Permutation(tuple(inv))

    def is_identity(self) -> bool:
        return all(y == x for x, y in enumerate(self.images))

    def image_mask(self, mask: int) -> int:
        """Pointwise image of a bitmask subset."""
        out = 0
        for v in bits_of(mask):
            out |= 1 << self.images[v]
        return out

    def __repr__(self) -> str:
        return f"Permutation({self.images})"


def _orbit_transversal(n: int, gens, x: int):
    """Orbit of x with coset representatives: reps[p] maps x to p."""
    reps = {x: Permutation.identity(n)}
    queue = [x]
    for p in queue:
        up = reps[p]
        for s in gens:
            q = s(p)
            if q not in reps:
                reps[q] = up * s
                queue.append(q)
    return reps


class PermGroup:
    """The group generated by a set of permutations of {0..n-1}.

    The stabilizer chain uses every domain point as a base point in
    ascending order, so chains, generator lists, and traversals are
    reproducible across runs.  Construction sifts generators and closes
    each level under Schreier generators until a full sweep finds
    nothing new; membership is then a plain sift.
    """

    def __init__(self, n: int, generators=()):
        self.n = n
        gens = []
        for g in generators:
            if not isinstance(g, Permutation):
                g = Permutation(tuple(g))
            if g.n != n:
                raise ValueError("generator outside the domain")
            if not g.is_identity() and g not in gens:
                gens.append(g)
        self.generators = tuple(gens)
        self._levels: list[dict] | None = None

    # chain construction

    def _level_gens(self, i: int) -> list[Permutation]:
        """Strong generators fixing the first i base points.  A deeper
        generator fixes the earlier base points yet still moves other
        orbit members, so every level must see all of them."""
        return [g for g in self._strong
                if all(g(x) == x for x in range(i))]

    def _rebuild_through(self, j: int):
        for i in range(j + 1):
            self._levels[i]["transversal"] = _orbit_transversal(
                self.n, self._level_gens(i), i
            )

    def _sift(self, perm: Permutation, start: int = 0):
        """Quotient off transversal parts; (residue, stuck level)."""
        h = perm
        for i in range(start, self.n):
            u = self._levels[i]["transversal"].get(h(i))
            if u is None:
                return h, i
            h = h * u.inverse()
        return h, self.n

    def _insert(self, perm: Permutation, level: int):
        self._strong.append(perm)
        self._rebuild_through(level)

    def _ensure_chain(self):
        if self._levels is not None:
            return
        self._strong: list[Permutation] = []
        self._levels = [
            {"point": i, "transversal": {i: Permutation.identity(self.n)}}
            for i in range(self.n)
        ]
        for g in self.generators:
            h, i = self._sift(g)
            if not h.is_identity():
                self._insert(h, i)
        changed = True
        while changed:
            changed = False
            for i in range(self.n):
                gens = self._level_gens(i)
                for p in list(self._levels[i]["transversal"]):
                    up = self._levels[i]["transversal"][p]
                    for s in gens:
                        uq = self._levels[i]["transversal"][s(p)]
                        sg = up * s * uq.inverse()
                        if sg.is_identity():
                            continue
                        h, j = self._sift(sg, i + 1)
                        if not h.is_identity():
                            self._insert(h, j)
                            changed = True

    # queries

    def contains(self, perm: Permutation) -> bool:
        if perm.n != self.n:
            raise ValueError("element outside the domain")
        self._ensure_chain()
        h, _ = self._sift(perm)
        return h.is_identity()

    __contains__ = contains

    def order(self) -> int:
        self._ensure_chain()
        out = 1
        for level in self._levels:
            out *= len(level["transversal"])
        return out

    def elements(self):
        """Every group element; meant for small groups only."""
        self._ensure_chain()

        def walk(i: int):
            if i == len(self._levels):
                yield Permutation.identity(self.n)
                return
            for u in self._levels[i]["transversal"].values():
                for h in walk(i + 1):
                    yield h * u

        return walk(0)

    def is_subgroup_of(self, other: "PermGroup") -> bool:
        if self.n != other.n:
            return False
        return all(other.contains(g) for g in self.generators)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PermGroup):
            return NotImplemented
        return (
            self.n == other.n
            and self.is_subgroup_of(other)
            and self.order() == other.order()
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"PermGroup(n={self.n}, generators={len(self.generators)})"


def orbit(group: PermGroup, x: int) -> set[int]:
    """The orbit of x under the group, via breadth-first closure."""
    if not 0 <= x < group.n:
        raise ValueError("element outside the domain")
    return set(_orbit_transversal(group.n, group.generators, x))


def stabilizer(group: PermGroup, x: int) -> PermGroup:
    """Pointwise stabilizer of x, generated by Schreier generators."""
    if not 0 <= x < group.n:
        raise ValueError("element outside the domain")
    reps = _orbit_transversal(group.n, group.generators, x)
    gens = []
    for p, up in reps.items():
        for s in group.generators:
            g = up * s * reps[s(p)].inverse()
            if not g.is_identity() and g not in gens:
                gens.append(g)
    return PermGroup(group.n, gens)


class Coset:
    """Either empty, or every product of a witness bijection with an
    element of a group acting on the target side.

    The witness applies first, so the member set is
    ``{sigma * g for g in group}``.  Two cosets are equal when each
    other's witness belongs to the other and the groups coincide; the
    stored witness and generators are representation, not identity.
    """

    def __init__(self, n: int, sigma: Permutation | None,
                 group: PermGroup | None):
        self.n = n
        if sigma is None:
            self.sigma = None
            self.group = None
            return
        if group is None:
            group = PermGroup(n)
        if sigma.n != n or group.n != n:
            raise ValueError("witness or group outside the domain")
        self.sigma = sigma
        self.group = group

    @classmethod
    def empty(cls, n: int) -> "Coset":
        return cls(n, None, None)

    @classmethod
    def identity(cls, n: int) -> "Coset":
        return cls(n, Permutation.identity(n), PermGroup(n))

    def is_empty(self) -> bool:
        return self.sigma is None

    def __bool__(self) -> bool:
        return self.sigma is not None

    def order(self) -> int:
        return 0 if self.sigma is None else self.group.order()

    def contains(self, psi: Permutation) -> bool:
        if self.sigma is None:
            return False
        return self.group.contains(self.sigma.inverse() * psi)

    __contains__ = contains

    def elements(self):
        """Every member bijection; meant for small cosets only."""
        if self.sigma is None:
            return
        for g in self.group.elements():
            yield self.sigma * g

    def subcoset_of(self, other: "Coset") -> bool:
        if self.n != other.n:
            raise ValueError("cosets over different domains")
        if self.sigma is None:
            return True
        if other.sigma is None:
            return False
        if not other.contains(self.sigma):
            return False
        return all(
            other.group.contains(g) for g in self.group.generators
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Coset):
            return NotImplemented
        if self.n != other.n:
            return False
        if self.sigma is None or other.sigma is None:
            return self.sigma is None and other.sigma is None
        return (
            other.contains(self.sigma)
            and self.group.is_subgroup_of(other.group)
            and self.group.order() == other.group.order()
        )

    __hash__ = None

    def __repr__(self) -> str:
        if self.sigma is None:
            return f"Coset(empty, n={self.n})"
        return f"Coset(n={self.n}, order={self.order()})"


def coset_lub(first: Coset, second: Coset) -> Coset:
    """Least upper bound in the lattice of cosets over the same domain.

    Keeps the first witness and adjoins, for every generator g of the
    second group, the conjugate-style products that shuttle between the
    witnesses, plus the witness quotient itself (without it two
    singleton cosets would have no path between their witnesses).
    """
    if first.n != second.n:
        raise ValueError("cosets over different domains")
    if first.is_empty():
        return second
    if second.is_empty():
        return first
    connector = first.sigma.inverse() * second.sigma
    gens = list(first.group.generators)
    gens.append(connector)
    back = second.sigma.inverse() * first.sigma
    for g in second.group.generators:
        gens.append(connector * g)
        gens.append(connector * g * back)
    return Coset(first.n, first.sigma, PermGroup(first.n, gens))


def coset_restrict(coset: Coset, mapping: dict[int, int]) -> Coset:
    """Subcoset of members agreeing with a partial map (possibly empty).

    One point at a time, in ascending key order: find a group element
    steering the witness image onto the wanted target (none means the
    restriction is empty), fold it into the witness, and continue in
    the stabilizer of the target.
    """
    for w, t in mapping.items():
        if not (0 <= w < coset.n and 0 <= t < coset.n):
            raise ValueError("mapped point outside the domain")
    if coset.is_empty():
        return coset
    sigma, group = coset.sigma, coset.group
    for w in sorted(mapping):
        target = mapping[w]
        reps = _orbit_transversal(group.n, group.generators, sigma(w))
        g = reps.get(target)
        if g is None:
            return Coset.empty(coset.n)
        sigma = sigma * g
        group = stabilizer(group, target)
    return Coset(coset.n, sigma, group)


def _spanning_group(n: int, perms) -> PermGroup:
    """Group generated by a list of elements, thinned by sifting so the
    stored generator list stays logarithmic in the group order."""
    gens: list[Permutation] = []
    grp = PermGroup(n, ())
    for g in perms:
        if not g.is_identity() and not grp.contains(g):
            gens.append(g)
            grp = PermGroup(n, gens)
    return grp


def coset_restrict_sets(coset: Coset, allowed: dict) -> Coset:
    """Subcoset of members sending each constrained point into a target
    class; generalizes coset_restrict from single targets to sets.

    The distinct target classes must be pairwise disjoint, and no
    member may carry an unconstrained point into a constrained class
    (the caller's group must preserve that split).  The member set is
    then witness times the setwise class stabilizer, hence a coset; the
    final order assertion double-checks it.  A stabilizer-chain
    backtrack enumerates exactly the satisfying elements, so the cost
    is the answer size plus pruned search overhead.
    """
    n = coset.n
    masks: dict[int, int] = {}
    for v, targets in allowed.items():
        if not 0 <= v < n:
            raise ValueError("constrained point outside the domain")
        m = 0
        for w in targets:
            if not 0 <= w < n:
                raise ValueError("target outside the domain")
            m |= 1 << w
        masks[v] = m
    if coset.is_empty():
        return coset
    if any(m == 0 for m in masks.values()):
        return Coset.empty(n)
    distinct = sorted(set(masks.values()))
    for i, a in enumerate(distinct):
        for b in distinct[i + 1 :]:
            if a & b:
                raise ValueError("target classes must be equal or disjoint")
    full = (1 << n) - 1
    if all(m == full for m in masks.values()):
        return coset
    sigma, group = coset.sigma, coset.group
    group._ensure_chain()
    cons = [full] * n
    for v, m in masks.items():
        cons[sigma(v)] &= m
    visited = 0

    def walk(i: int, cons: list[int]):
        # elements factor as h * u with u a level-i transversal rep and
        # h fixing points up to i, so g(j) = u(h(j)): pick the image of
        # point i, pull the remaining constraints back through u, recurse
        nonlocal visited
        if i == n:
            yield Permutation.identity(n)
            return
        for p in sorted(group._levels[i]["transversal"]):
            if not cons[i] >> p & 1:
                continue
            u = group._levels[i]["transversal"][p]
            uinv = u.inverse()
            deeper = list(cons)
            for j in range(i + 1, n):
                m = cons[j]
                if m == full:
                    continue
                mm = 0
                for y in bits_of(m):
                    mm |= 1 << uinv.images[y]
                deeper[j] = mm
            for h in walk(i + 1, deeper):
                visited += 1
                if visited > SET_SEARCH_CAP:
                    raise RuntimeError(
                        "constrained coset search exceeded its cap"
                    )
                yield h * u

    found = list(walk(0, cons))
    if not found:
        return Coset.empty(n)
    h0 = found[0]
    h0inv = h0.inverse()
    sub = _spanning_group(n, [h0inv * g for g in found[1:]])
    assert sub.order() == len(found), "constrained member set is not a coset"
    return Coset(n, sigma * h0, sub)


def coset_json(coset: Coset) -> dict:
    """Stable JSON form: witness, sorted generators, order as a string
    (orders can outgrow doubles)."""
    if coset.is_empty():
        return {"empty": True, "witness": [], "generators": [], "order": "0"}
    gens = sorted(g.images for g in coset.group.generators)
    return {
        "empty": False,
        "witness": list(coset.sigma.images),
        "generators": [list(g) for g in gens],
        "order": str(coset.order()),
    }
