from .graph import (
    NO_TIME,
    EdgeRecord,
    HeteroGraph,
    NodeRecord,
    NodeRef,
    RelationAdjacency,
    build_graph,
    iter_stored_edges,
    neighbors,
    relation_degree,
)
from .io import load_bundle, load_flat_files, load_graph, save_bundle, write_flat_files
from .schema import REVERSE_SUFFIX, SELF_PREFIX, EdgeType, MetaPath, MetaRelation, NodeType, Schema

__all__ = [
    "NO_TIME",
    "REVERSE_SUFFIX",
    "SELF_PREFIX",
    "EdgeRecord",
    "EdgeType",
    "HeteroGraph",
    "MetaPath",
    "MetaRelation",
    "NodeRecord",
    "NodeRef",
    "NodeType",
    "RelationAdjacency",
    "Schema",
    "build_graph",
    "iter_stored_edges",
    "load_bundle",
    "load_flat_files",
    "load_graph",
    "neighbors",
    "relation_degree",
    "save_bundle",
    "write_flat_files",
]
