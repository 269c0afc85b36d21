"""Bounded-rank positive semidefinite matrix completion over graphs."""

from gramdim.graphs import (
    Graph,
    GdClassification,
    MinorWitness,
    TreeDecomposition,
    barvinok_bound,
    chordal_structure,
    classify_gram_dimension,
    clique_sum_split,
    contract_edge,
    delete_edge,
    has_minor,
    named_graph,
    suspension,
    treewidth_at_most,
)

__version__ = "0.1.0"
