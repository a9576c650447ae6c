"""Exact graph isomorphism for graphs of bounded rank width.

The pipeline: cut rank over GF(2), tangle enumeration, canonical
treelike decompositions, and a coset-valued dynamic program that
returns the full set of isomorphisms between two graphs as a
permutation coset.
"""

from .f2linalg import Graph, VertexSet, F2Matrix, f2_rank, cut_matrix, cut_rank

__all__ = [
    "Graph",
    "VertexSet",
    "F2Matrix",
    "f2_rank",
    "cut_matrix",
    "cut_rank",
]

__version__ = "0.1.0"
