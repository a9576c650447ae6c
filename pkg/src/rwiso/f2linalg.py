"""Bit-packed linear algebra over GF(2) and the cut rank function.

Vertex sets and matrix rows are Python ints used as bitsets: bit i set
means element i is present.  Everything here is immutable after
construction and all operations are pure, so values can be shared
between threads and used as dictionary keys.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "Graph",
    "VertexSet",
    "F2Matrix",
    "f2_rank",
    "f2_rank_rows",
    "cut_matrix",
    "cut_rank",
    "cut_rank_mask",
]


def bits_of(mask: int):
    """Yield the set bit positions of ``mask`` in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(elements, n: int) -> int:
    """Pack an iterable of element indices into a bitmask over {0..n-1}."""
    m = 0
    for e in elements:
        if not 0 <= e < n:
            raise ValueError(f"element {e} outside ground set of size {n}")
        m |= 1 << e
    return m


@dataclass(frozen=True, slots=True)
class VertexSet:
    """A subset of the ground set {0, ..., n-1}, stored as a bitmask.

    Two sets may only be combined when they live over the same ground
    set; mixing ground sets raises ValueError rather than silently
    producing nonsense.
    """

    mask: int
    n: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(
                f"mask {self.mask:#x} does not fit ground set of size {self.n}"
            )

    @classmethod
    def of(cls, elements, n: int) -> "VertexSet":
        return cls(mask_of(elements, n), n)

    @classmethod
    def empty(cls, n: int) -> "VertexSet":
        return cls(0, n)

    @classmethod
    def full(cls, n: int) -> "VertexSet":
        return cls((1 << n) - 1, n)

    def _check(self, other: "VertexSet"):
        if self.n != other.n:
            raise ValueError(
                f"mixed ground sets: size {self.n} vs size {other.n}"
            )

    def complement(self) -> "VertexSet":
        return VertexSet(((1 << self.n) - 1) ^ self.mask, self.n)

    def union(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.mask | other.mask, self.n)

    def intersection(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.mask & other.mask, self.n)

    def difference(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.mask & ~other.mask, self.n)

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def is_subset(self, other: "VertexSet") -> bool:
        self._check(other)
        return self.mask & ~other.mask == 0

    def __le__(self, other: "VertexSet") -> bool:
        return self.is_subset(other)

    def __lt__(self, other: "VertexSet") -> bool:
        return self.is_subset(other) and self.mask != other.mask

    def disjoint(self, other: "VertexSet") -> bool:
        self._check(other)
        return self.mask & other.mask == 0

    def __contains__(self, element: int) -> bool:
        return 0 <= element < self.n and self.mask >> element & 1 == 1

    def __iter__(self):
        return bits_of(self.mask)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __bool__(self) -> bool:
        return self.mask != 0

    def elements(self) -> tuple[int, ...]:
        return tuple(bits_of(self.mask))

    def __repr__(self):
        return f"VertexSet({{{', '.join(map(str, self))}}}, n={self.n})"


@dataclass(frozen=True, slots=True)
class Graph:
    """A finite simple graph on vertices {0, ..., n-1}.

    adjacency[v] is the neighbour bitmask of v.  Symmetry and absence of
    self-loops are validated at construction time.  ``labels`` carries
    optional stable external vertex names and plays no role in any
    computation.
    """

    n: int
    adjacency: tuple[int, ...]
    labels: tuple | None = None

    def __post_init__(self):
        if len(self.adjacency) != self.n:
            raise ValueError("adjacency length differs from vertex count")
        full = (1 << self.n) - 1
        for v, row in enumerate(self.adjacency):
            if row & ~full:
                raise ValueError(f"adjacency of {v} mentions unknown vertices")
            if row >> v & 1:
                raise ValueError(f"self-loop at vertex {v}")
        for v, row in enumerate(self.adjacency):
            for u in bits_of(row):
                if not self.adjacency[u] >> v & 1:
                    raise ValueError(f"asymmetric adjacency between {u} and {v}")
        if self.labels is not None and len(self.labels) != self.n:
            raise ValueError("label count differs from vertex count")

    @classmethod
    def from_edges(cls, n: int, edges, labels=None) -> "Graph":
        adj = [0] * n
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) outside vertex range")
            adj[u] |= 1 << v
            adj[v] |= 1 << u
        return cls(n, tuple(adj), None if labels is None else tuple(labels))

    def vertices(self) -> range:
        return range(self.n)

    def vertex_set(self) -> VertexSet:
        return VertexSet.full(self.n)

    def has_edge(self, u: int, v: int) -> bool:
        return self.adjacency[u] >> v & 1 == 1

    def edges(self):
        for u in range(self.n):
            for v in bits_of(self.adjacency[u] >> (u + 1) << (u + 1)):
                yield (u, v)

    def edge_count(self) -> int:
        return sum(row.bit_count() for row in self.adjacency) // 2

    def complement_graph(self) -> "Graph":
        full = (1 << self.n) - 1
        adj = tuple((full ^ row) & ~(1 << v) for v, row in enumerate(self.adjacency))
        return Graph(self.n, adj, self.labels)

    def relabel(self, perm: list[int]) -> "Graph":
        """Image graph under v -> perm[v]."""
        adj = [0] * self.n
        for v, row in enumerate(self.adjacency):
            adj[perm[v]] = mask_of((perm[u] for u in bits_of(row)), self.n)
        return Graph(self.n, tuple(adj))


@dataclass(frozen=True, slots=True)
class F2Matrix:
    """A matrix over GF(2); each row is a bitmask of its ncols entries.

    Bit j of rows[i] is the entry in row i, column j.  Row and column
    labels record which external objects the indices stand for.
    """

    rows: tuple[int, ...]
    ncols: int
    row_labels: tuple | None = None
    col_labels: tuple | None = None

    def __post_init__(self):
        limit = 1 << self.ncols
        for r in self.rows:
            if r < 0 or r >= limit:
                raise ValueError("row wider than ncols")
        if self.row_labels is not None and len(self.row_labels) != len(self.rows):
            raise ValueError("row label count mismatch")
        if self.col_labels is not None and len(self.col_labels) != self.ncols:
            raise ValueError("column label count mismatch")

    @classmethod
    def from_lists(cls, entries: list[list[int]], ncols: int | None = None) -> "F2Matrix":
        if ncols is None:
            ncols = len(entries[0]) if entries else 0
        rows = []
        for row in entries:
            if len(row) != ncols:
                raise ValueError("ragged matrix")
            rows.append(mask_of((j for j, e in enumerate(row) if e & 1), ncols))
        return cls(tuple(rows), ncols)

    def entry(self, i: int, j: int) -> int:
        if not 0 <= j < self.ncols:
            raise IndexError("column out of range")
        return self.rows[i] >> j & 1

    def nrows(self) -> int:
        return len(self.rows)

    def transpose(self) -> "F2Matrix":
        cols = [0] * self.ncols
        for i, r in enumerate(self.rows):
            for j in bits_of(r):
                cols[j] |= 1 << i
        return F2Matrix(tuple(cols), len(self.rows), self.col_labels, self.row_labels)

    def to_lists(self) -> list[list[int]]:
        return [[r >> j & 1 for j in range(self.ncols)] for r in self.rows]


def f2_rank_rows(rows) -> int:
    """Rank over GF(2) of a collection of bitmask rows.

    Plain Gaussian elimination keyed by highest set bit; zero columns
    cannot change the rank, so callers may pass rows over any column
    window without compacting them first.
    """
    pivots: dict[int, int] = {}
    rank = 0
    for r in rows:
        while r:
            b = r.bit_length() - 1
            p = pivots.get(b)
            if p is None:
                pivots[b] = r
                rank += 1
                break
            r ^= p
    return rank


def f2_rank(matrix: F2Matrix) -> int:
    return f2_rank_rows(matrix.rows)


def cut_matrix(graph: Graph, x: VertexSet, y: VertexSet) -> F2Matrix:
    """Biadjacency matrix of the pair (x, y); rows and columns in
    ascending vertex order.  x and y must be disjoint."""
    if x.mask & y.mask:
        raise ValueError("cut_matrix requires disjoint sets")
    xs = x.elements()
    ys = y.elements()
    rows = []
    for u in xs:
        adj = graph.adjacency[u]
        rows.append(mask_of((j for j, v in enumerate(ys) if adj >> v & 1), len(ys)))
    return F2Matrix(tuple(rows), len(ys), xs, ys)


def cut_rank_mask(graph: Graph, mask: int) -> int:
    """cut_rank with the set given as a raw bitmask; hot-path variant."""
    comp = ((1 << graph.n) - 1) ^ mask
    return f2_rank_rows(graph.adjacency[v] & comp for v in bits_of(mask))


def cut_rank(graph: Graph, x: VertexSet) -> int:
    """Rank over GF(2) of the biadjacency matrix between x and its
    complement.  Symmetric: cut_rank(G, x) == cut_rank(G, ~x)."""
    if x.n != graph.n:
        raise ValueError("vertex set over the wrong ground set")
    return cut_rank_mask(graph, x.mask)
