"""Symmetric {0,1,?}-matrices whose ?-entries tile diagonal blocks.

Such a matrix shows up at a node of a normal treelike decomposition of
a graph's cut rank function: each child cone and the outside of the
node's cone are blanked to ?, every other entry copies adjacency.  The
partition rank (worst GF(2) rank over bipartitions of the ?-blocks)
then equals the width of the decomposition at that node, and every row
admits a small canonical set of full {0,1} extensions that the
isomorphism machinery can match across two graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .connfn import submasks
from .f2linalg import bits_of, f2_rank_rows

__all__ = [
    "QBlockMatrix",
    "ExtensionSet",
    "associated_qblock",
    "partition_rank",
    "dedupe",
    "extension_set",
    "lonely_threshold",
    "incompatible_family_bound",
    "extension_bound",
    "PARTITION_CAP",
]

# exhaustive bipartition enumeration refuses beyond this many ?-blocks
PARTITION_CAP = 24


class QBlockMatrix:
    """A symmetric matrix over {0, 1, ?} with block-diagonal ?-entries.

    ``ones[v]`` is the bitmask of columns holding a 1 in row v, and
    ``q_indices`` are the blocks (disjoint non-empty vertex masks).  An
    entry is ? exactly when its row and column share a block, so a row
    is fully described by the pair (ones, own block).  Immutable after
    construction.
    """

    def __init__(self, n: int, ones, q_indices):
        self.n = n
        full = (1 << n) - 1
        blocks = []
        claimed = 0
        for b in q_indices:
            b = int(b)
            if b == 0:
                raise ValueError("?-blocks must be non-empty")
            if b & ~full:
                raise ValueError("?-block outside the ground set")
            if b & claimed:
                raise ValueError("?-blocks overlap")
            claimed |= b
            blocks.append(b)
        self.q_indices = tuple(sorted(blocks))
        self.q_union = claimed

        rows = tuple(int(r) for r in ones)
        if len(rows) != n:
            raise ValueError("row count differs from ground set size")
        q_of = [0] * n
        for b in self.q_indices:
            for v in bits_of(b):
                q_of[v] = b
        self._q_of = tuple(q_of)
        for v, r in enumerate(rows):
            if r & ~full:
                raise ValueError(f"row {v} mentions unknown columns")
            if r & q_of[v]:
                raise ValueError(f"row {v} marks a ?-entry as 1")
        for v, r in enumerate(rows):
            for w in bits_of(r):
                if not rows[w] >> v & 1:
                    raise ValueError(f"asymmetric entries between {v} and {w}")
        self.ones = rows

    def qmask(self, v: int) -> int:
        """Columns where row v reads ?, as a mask (0 for block-free rows)."""
        return self._q_of[v]

    def entry(self, v: int, w: int) -> int | None:
        """0, 1, or None for ?."""
        if self._q_of[v] >> w & 1:
            return None
        return self.ones[v] >> w & 1

    def row_key(self, v: int) -> tuple[int, int]:
        """Hashable identity of row v as a {0,1,?}-vector."""
        return self.ones[v], self._q_of[v]

    def compatible(self, v: int, w: int) -> bool:
        """True when rows v and w agree wherever both are specified."""
        both = ~self._q_of[v] & ~self._q_of[w]
        return (self.ones[v] ^ self.ones[w]) & both == 0

    def extends(self, x: int, v: int) -> bool:
        """True when the full vector x agrees with row v off its block."""
        return x & ~self._q_of[v] == self.ones[v]

    def row_extensions(self, v: int):
        """All full vectors extending row v, 2^(block size) of them."""
        base = self.ones[v]
        return (base | s for s in submasks(self._q_of[v]))

    def relabel(self, perm) -> "QBlockMatrix":
        """Image matrix under v -> perm[v]."""
        ones = [0] * self.n
        for v in range(self.n):
            ones[perm[v]] = _relabel(self.ones[v], perm)
        blocks = [_relabel(b, perm) for b in self.q_indices]
        return QBlockMatrix(self.n, ones, blocks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QBlockMatrix):
            return NotImplemented
        return (self.n, self.ones, self.q_indices) == (
            other.n, other.ones, other.q_indices)

    def __hash__(self) -> int:
        return hash((self.n, self.ones, self.q_indices))

    def __repr__(self) -> str:
        return (
            f"QBlockMatrix(n={self.n}, blocks={len(self.q_indices)}, "
            f"ones={sum(r.bit_count() for r in self.ones)})"
        )


def _relabel(mask: int, perm) -> int:
    out = 0
    for v in bits_of(mask):
        out |= 1 << perm[v]
    return out


def associated_qblock(graph, dec, t: int) -> QBlockMatrix:
    """The ?-block matrix of a decomposition node.

    Child cones and the complement of the node's cone become the
    ?-blocks; every remaining entry copies the graph's adjacency.  Empty
    cones contribute nothing and are skipped.  The children must have
    pairwise disjoint cones, so nodes whose children share a cone are
    rejected.
    """
    if graph.n != dec.n:
        raise ValueError("graph and decomposition over different ground sets")
    full = (1 << graph.n) - 1
    cones = [dec.gamma[u] for u in dec.children[t] if dec.gamma[u]]
    claimed = 0
    for c in cones:
        if c & claimed:
            raise ValueError(f"children of node {t} share cone vertices")
        if c & ~dec.gamma[t]:
            raise ValueError(f"child cone of node {t} escapes the node's cone")
        claimed |= c
    outside = full ^ dec.gamma[t]
    blocks = cones + ([outside] if outside else [])
    q_of = [0] * graph.n
    for b in blocks:
        for v in bits_of(b):
            q_of[v] = b
    ones = tuple(graph.adjacency[v] & ~q_of[v] for v in range(graph.n))
    return QBlockMatrix(graph.n, ones, blocks)


def partition_rank(mat: QBlockMatrix, max_blocks: int = PARTITION_CAP) -> int:
    """Largest GF(2) rank of a cross submatrix over all two-sidings of
    the ?-blocks.

    Rows and columns outside every block never enter any submatrix.  A
    siding and its swap give transposed submatrices of equal rank, so
    only the sidings keeping the first block on the row side are run.
    """
    m = len(mat.q_indices)
    if m > max_blocks:
        raise ValueError(f"{m} ?-blocks exceed the enumeration cap {max_blocks}")
    if m == 0:
        return 0
    first, rest = mat.q_indices[0], mat.q_indices[1:]
    best = 0
    for pick in range(1 << (m - 1)):
        rows = first
        for i in bits_of(pick):
            rows |= rest[i]
        cols = mat.q_union ^ rows
        r = f2_rank_rows(mat.ones[v] & cols for v in bits_of(rows))
        if r > best:
            best = r
    return best


def dedupe(mat: QBlockMatrix) -> tuple[QBlockMatrix, tuple[int, ...]]:
    """Merge duplicate rows (and, by symmetry, columns), keeping the
    smallest index of each class.  Returns the reduced matrix and the
    map from old row indices to new ones.

    Every deleted column keeps an identical surviving twin, so rows that
    differed before the deletion still differ after it: one pass is a
    fixpoint.  When the blocks cover every vertex, a block's rows are
    told apart by their pattern on the other blocks' columns, and those
    patterns sit in one cross submatrix; hence each block has at most
    2^rank rows.  That bound is asserted in exactly that regime (rows of
    one block may differ only on block-free columns otherwise, which no
    cross submatrix sees).
    """
    kept: list[int] = []
    first_of: dict[tuple[int, int], int] = {}
    owner = [0] * mat.n
    for v in range(mat.n):
        key = mat.row_key(v)
        prior = first_of.get(key)
        if prior is None:
            first_of[key] = v
            kept.append(v)
            owner[v] = v
        else:
            owner[v] = prior
    pos = {v: i for i, v in enumerate(kept)}
    rep = tuple(pos[owner[v]] for v in range(mat.n))
    ones = []
    for v in kept:
        row = 0
        for j, w in enumerate(kept):
            if mat.ones[v] >> w & 1:
                row |= 1 << j
        ones.append(row)
    blocks = []
    for b in mat.q_indices:
        nb = 0
        for w in bits_of(b):
            if owner[w] == w:
                nb |= 1 << pos[w]
        assert nb, "a ?-block lost all its rows"
        blocks.append(nb)
    out = QBlockMatrix(len(kept), ones, blocks)
    assert len({out.row_key(v) for v in range(out.n)}) == out.n, \
        "duplicate rows survived a dedupe pass"
    full_cover = out.q_union == (1 << out.n) - 1
    if full_cover and len(out.q_indices) <= PARTITION_CAP:
        limit = 1 << partition_rank(out)
        assert all(b.bit_count() <= limit for b in out.q_indices), \
            "deduped ?-block larger than 2^rank"
    return out, rep


def lonely_threshold(rank: int) -> int:
    """A row with fewer than this many compatible companions is lonely."""
    return (rank + 1) << rank


def incompatible_family_bound(rank: int) -> int:
    """Upper bound on mutually incompatible rows with distinct blocks."""
    h = 1
    for _ in range(rank):
        h = (h << rank) + 4
    return h


def extension_bound(rank: int) -> int:
    """Advertised size limit of the canonical extension set.  Reported
    alongside the set, never used to prune it."""
    return (1 << rank) + (
        (1 << ((1 << rank) + rank))
        * lonely_threshold(rank)
        * incompatible_family_bound(rank)
    )


@dataclass(frozen=True, slots=True)
class ExtensionSet:
    """A canonical set of full {0,1} row extensions of a ?-block matrix.

    ``vectors`` are bitmask vectors in lexicographic coordinate order
    (coordinate 0 first), so serialization is stable.  ``membership[v]``
    lists the positions of the vectors extending row v; it is never
    empty.  ``rank`` is the partition rank bound the construction used
    and ``bound`` the advertised size limit for that rank.
    """

    n: int
    vectors: tuple[int, ...]
    membership: tuple[tuple[int, ...], ...]
    rank: int
    bound: int

    def __len__(self) -> int:
        return len(self.vectors)

    def extensions_of(self, v: int) -> tuple[int, ...]:
        return tuple(self.vectors[i] for i in self.membership[v])


def _lex_key(x: int, n: int) -> tuple[int, ...]:
    return tuple(x >> i & 1 for i in range(n))


def extension_set(mat: QBlockMatrix, rank: int | None = None) -> ExtensionSet:
    """Canonical extension set: every extension of every lonely row,
    plus every vector extending enough rows at once.

    A row is lonely when fewer than (rank+1) * 2^rank other rows are
    compatible with it; counting the row itself instead would leave a
    lone all-? row of rank 0 without any extension at all.  A vector is
    kept as supported when it extends at least rank + 2 rows.  Both
    tests and the final lexicographic ordering are invariant under
    relabelling, which is what makes the set canonical.

    ``rank`` is an upper bound on the partition rank; when omitted it is
    computed.  Rows are enumerated block-wise, so blocks wider than
    2^rank (possible only before dedupe) are rejected.
    """
    if rank is None:
        rank = partition_rank(mat)
    for b in mat.q_indices:
        if b.bit_count() > 1 << rank:
            raise ValueError(
                f"a ?-block of {b.bit_count()} rows cannot occur at partition "
                f"rank {rank}; dedupe the matrix first"
            )
    threshold = lonely_threshold(rank)
    chosen: set[int] = set()
    counts: dict[int, int] = {}
    for v in range(mat.n):
        for x in mat.row_extensions(v):
            counts[x] = counts.get(x, 0) + 1
    for x, c in counts.items():
        if c >= rank + 2:
            chosen.add(x)
    for v in range(mat.n):
        others = sum(
            1 for w in range(mat.n) if w != v and mat.compatible(v, w)
        )
        if others < threshold:
            chosen.update(mat.row_extensions(v))
    vectors = tuple(sorted(chosen, key=lambda x: _lex_key(x, mat.n)))
    membership = tuple(
        tuple(i for i, x in enumerate(vectors) if mat.extends(x, v))
        for v in range(mat.n)
    )
    for v, hits in enumerate(membership):
        assert hits, f"row {v} has no extension in the set"
    return ExtensionSet(mat.n, vectors, membership, rank, extension_bound(rank))
