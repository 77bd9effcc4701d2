"""Typed, timestamped, mirror-complete graph store.

Node ids are dense per-type indices; a global node reference is the pair
``(node type id, index)``. Each edge type owns one CSR adjacency keyed by the
target node, so an edge type is also its meta relation
``⟨src type, edge type, tgt type⟩``. Every stored edge has a mirror under the
inverse type with the same timestamp. Parallel edges are kept.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from exception import (
    DanglingEdge,
    DuplicateNodeId,
    IngestError,
    TypeMismatch,
    UnknownRelation,
    UnknownType,
)
from logger.custom_logger import CustomLogger

from .schema import MetaRelation, Schema

logger = CustomLogger().get_logger(__file__)

NO_TIME = np.iinfo(np.int64).min

# origin codes of adjacency entries
ORIGIN_MIRROR = 0
ORIGIN_RECORD = 1
ORIGIN_DERIVED = 2

NodeRef = tuple[int, int]


@dataclass(frozen=True)
class NodeRecord:
    node_type: str
    local_id: int
    timestamp: int | None = None
    line: int | None = None


@dataclass(frozen=True)
class EdgeRecord:
    edge_type: str
    src_type: str
    src_id: int
    tgt_type: str
    tgt_id: int
    timestamp: int
    line: int | None = None


@dataclass(frozen=True)
class RelationAdjacency:
    """CSR rows keyed by target; entry k of row t is (sources[k], times[k])."""
    indptr: np.ndarray
    sources: np.ndarray
    times: np.ndarray
    seq: np.ndarray
    origin: np.ndarray

    @property
    def num_entries(self) -> int:
        return int(self.sources.shape[0])

    def row(self, target: int) -> slice:
        return slice(int(self.indptr[target]), int(self.indptr[target + 1]))

    def degree(self, target: int) -> int:
        return int(self.indptr[target + 1] - self.indptr[target])

    def targets(self) -> np.ndarray:
        """Target index of every entry, aligned with ``sources``."""
        return np.repeat(np.arange(self.indptr.shape[0] - 1), np.diff(self.indptr))


@dataclass(frozen=True)
class HeteroGraph:
    schema: Schema
    num_nodes: tuple[int, ...]
    node_times: Mapping[int, np.ndarray]
    features: Mapping[int, np.ndarray]
    adjacency: tuple[RelationAdjacency, ...]

    @property
    def self_loops(self) -> bool:
        return self.schema.has_self_loops

    def is_event(self, node_type: int) -> bool:
        return self.schema.node_types[node_type].is_event

    def node_time(self, node_type: int, node_id: int) -> int | None:
        times = self.node_times.get(node_type)
        return None if times is None else int(times[node_id])

    def num_edges(self, edge_type: int | None = None) -> int:
        if edge_type is not None:
            return self.adjacency[edge_type].num_entries
        return sum(a.num_entries for a in self.adjacency)

    def _check(self, target: NodeRef, rel: MetaRelation) -> RelationAdjacency:
        if not 0 <= rel.edge_type < len(self.adjacency) or self.schema.meta_relation(rel.edge_type) != tuple(rel):
            raise UnknownRelation(f"{rel} is not a meta relation of this schema")
        node_type, node_id = target
        if node_type != rel.tgt_type:
            raise TypeMismatch(
                f"node of type '{self.schema.node_name(node_type)}' queried under relation "
                f"{self.schema.relation_name(rel)} which targets '{self.schema.node_name(rel.tgt_type)}'"
            )
        if not 0 <= node_id < self.num_nodes[node_type]:
            raise DanglingEdge(f"no {self.schema.node_name(node_type)} node {node_id}")
        return self.adjacency[rel.edge_type]

    def neighbors(self, target: NodeRef, rel: MetaRelation) -> list[tuple[int, int]]:
        adj = self._check(target, rel)
        row = adj.row(target[1])
        return list(zip(adj.sources[row].tolist(), adj.times[row].tolist()))

    def relation_degree(self, target: NodeRef, rel: MetaRelation) -> int:
        return self._check(target, rel).degree(target[1])

    def counts(self) -> dict:
        """Node and edge counts per type (forward and mirrored entries both count)."""
        return {
            "nodes": {t.name: self.num_nodes[i] for i, t in enumerate(self.schema.node_types)},
            "edges": {e.name: self.adjacency[i].num_entries for i, e in enumerate(self.schema.edge_types)},
        }

    def records(self) -> tuple[list[NodeRecord], list[EdgeRecord]]:
        """The ingestion records this graph was built from, in their original order."""
        schema = self.schema
        nodes = []
        for t, nt in enumerate(schema.node_types):
            times = self.node_times.get(t)
            for i in range(self.num_nodes[t]):
                nodes.append(NodeRecord(nt.name, i, None if times is None else int(times[i])))
        entries = []
        for et_id, adj in enumerate(self.adjacency):
            mask = adj.origin == ORIGIN_RECORD
            if not mask.any():
                continue
            et = schema.edge_types[et_id]
            tgts = adj.targets()[mask]
            for seq, src, tgt, ts in zip(adj.seq[mask], adj.sources[mask], tgts, adj.times[mask]):
                entries.append((int(seq), EdgeRecord(et.name, schema.node_name(et.src), int(src),
                                                     schema.node_name(et.tgt), int(tgt), int(ts))))
        entries.sort(key=lambda item: item[0])
        return nodes, [record for _, record in entries]


def neighbors(graph: HeteroGraph, target: NodeRef, rel: MetaRelation) -> list[tuple[int, int]]:
    return graph.neighbors(target, rel)


def relation_degree(graph: HeteroGraph, target: NodeRef, rel: MetaRelation) -> int:
    return graph.relation_degree(target, rel)


class _EdgeLists:
    """Per-edge-type accumulation of (tgt, src, time, seq, origin) before CSR packing."""

    def __init__(self, n_types: int):
        self.cols = [defaultdict(list) for _ in range(n_types)]

    def add(self, edge_type: int, tgt: int, src: int, ts: int, seq: int, origin: int) -> None:
        col = self.cols[edge_type]
        col["tgt"].append(tgt)
        col["src"].append(src)
        col["ts"].append(ts)
        col["seq"].append(seq)
        col["origin"].append(origin)

    def add_with_mirror(self, schema: Schema, edge_type: int, src: int, tgt: int, ts: int,
                        seq: int, origin: int) -> None:
        self.add(edge_type, tgt, src, ts, seq, origin)
        et = schema.edge_types[edge_type]
        if et.symmetric and src == tgt:
            return
        mirror_origin = ORIGIN_MIRROR if origin == ORIGIN_RECORD else origin
        self.add(et.inverse, src, tgt, ts, seq, mirror_origin)

    def pack(self, edge_type: int, n_targets: int) -> RelationAdjacency:
        col = self.cols[edge_type]
        tgt = np.asarray(col["tgt"], dtype=np.int64)
        order = np.argsort(tgt, kind="stable")
        counts = np.bincount(tgt, minlength=n_targets) if tgt.size else np.zeros(n_targets, dtype=np.int64)
        indptr = np.zeros(n_targets + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return RelationAdjacency(
            indptr=indptr,
            sources=np.asarray(col["src"], dtype=np.int64)[order],
            times=np.asarray(col["ts"], dtype=np.int64)[order],
            seq=np.asarray(col["seq"], dtype=np.int64)[order],
            origin=np.asarray(col["origin"], dtype=np.int8)[order],
        )


def build_graph(
    schema: Schema,
    node_records: Iterable[NodeRecord],
    edge_records: Iterable[EdgeRecord],
    features: Mapping[str, np.ndarray] | None = None,
    self_loops: bool = False,
    node_source: str | None = "nodes.tsv",
    edge_source: str | None = "edges.tsv",
) -> HeteroGraph:
    """Validate records and assemble a mirror-complete graph.

    ``features`` maps node type name to an (n × feature_dim) matrix; missing
    types get zero features. Self-loop types are added when ``self_loops`` is
    set (or the schema already declares them).
    """
    if self_loops:
        schema = schema.with_self_loops()
    n_types = schema.num_node_types

    ids: list[dict[int, int | None]] = [dict() for _ in range(n_types)]
    ignored_times = 0
    for rec in node_records:
        try:
            t = schema.node_type_id(rec.node_type)
        except UnknownType:
            raise UnknownType(f"node record references undeclared node type '{rec.node_type}'",
                              source=node_source, line=rec.line) from None
        if rec.local_id in ids[t]:
            raise DuplicateNodeId(f"duplicate {rec.node_type} node id {rec.local_id}",
                                  source=node_source, line=rec.line)
        if schema.node_types[t].is_event:
            if rec.timestamp is None:
                raise IngestError(f"event node {rec.node_type} {rec.local_id} has no timestamp",
                                  source=node_source, line=rec.line)
            ids[t][rec.local_id] = int(rec.timestamp)
        else:
            ignored_times += rec.timestamp is not None
            ids[t][rec.local_id] = None
    if ignored_times:
        logger.warning("timestamps on plain nodes ignored", count=ignored_times)

    num_nodes = []
    node_times: dict[int, np.ndarray] = {}
    for t, nt in enumerate(schema.node_types):
        n = len(ids[t])
        if n and (min(ids[t]) != 0 or max(ids[t]) != n - 1):
            raise IngestError(f"node ids of type '{nt.name}' must be contiguous from 0 (found {n} ids, "
                              f"range {min(ids[t])}..{max(ids[t])})", source=node_source)
        num_nodes.append(n)
        if nt.is_event:
            node_times[t] = np.array([ids[t][i] for i in range(n)], dtype=np.int64)

    lists = _EdgeLists(schema.num_edge_types)
    for seq, rec in enumerate(edge_records):
        try:
            et_id = schema.edge_type_id(rec.edge_type)
            src_t = schema.node_type_id(rec.src_type)
            tgt_t = schema.node_type_id(rec.tgt_type)
        except UnknownType as exc:
            raise UnknownType(f"edge record: {exc.error_message}", source=edge_source, line=rec.line) from None
        et = schema.edge_types[et_id]
        if et.is_self_loop:
            raise IngestError(f"self-loop type '{et.name}' is generated, not ingested",
                              source=edge_source, line=rec.line)
        if (src_t, tgt_t) != (et.src, et.tgt):
            raise IngestError(
                f"edge type '{et.name}' connects {schema.node_name(et.src)}->{schema.node_name(et.tgt)}, "
                f"record has {rec.src_type}->{rec.tgt_type}", source=edge_source, line=rec.line)
        if not 0 <= rec.src_id < num_nodes[src_t]:
            raise DanglingEdge(f"edge source {rec.src_type} {rec.src_id} does not exist",
                               source=edge_source, line=rec.line)
        if not 0 <= rec.tgt_id < num_nodes[tgt_t]:
            raise DanglingEdge(f"edge target {rec.tgt_type} {rec.tgt_id} does not exist",
                               source=edge_source, line=rec.line)
        if not isinstance(rec.timestamp, (int, np.integer)):
            raise IngestError(f"edge timestamp {rec.timestamp!r} is not an integer",
                              source=edge_source, line=rec.line)
        lists.add_with_mirror(schema, et_id, rec.src_id, rec.tgt_id, int(rec.timestamp), seq, ORIGIN_RECORD)

    for mp in schema.metapaths:
        _materialise_metapath(schema, mp.name, mp.path, lists, num_nodes)

    for t in range(n_types):
        loop = schema.self_loop_type(t)
        if loop is None:
            continue
        times = node_times.get(t)
        for v in range(num_nodes[t]):
            ts = int(times[v]) if times is not None else NO_TIME
            lists.add(loop, v, v, ts, -1, ORIGIN_DERIVED)

    adjacency = tuple(lists.pack(i, num_nodes[et.tgt]) for i, et in enumerate(schema.edge_types))

    feats: dict[int, np.ndarray] = {}
    for t, nt in enumerate(schema.node_types):
        given = None if features is None else features.get(nt.name)
        if given is None:
            feats[t] = np.zeros((num_nodes[t], nt.feature_dim), dtype=np.float32)
            continue
        given = np.asarray(given, dtype=np.float32)
        if given.shape != (num_nodes[t], nt.feature_dim):
            raise IngestError(f"features of '{nt.name}' have shape {given.shape}, "
                              f"expected ({num_nodes[t]}, {nt.feature_dim})")
        feats[t] = given

    graph = HeteroGraph(schema, tuple(num_nodes), node_times, feats, adjacency)
    logger.info("graph built", nodes=sum(num_nodes), edges=graph.num_edges(),
                node_types=n_types, edge_types=schema.num_edge_types, self_loops=schema.has_self_loops)
    return graph


def _materialise_metapath(schema: Schema, name: str, path: tuple[str, ...], lists: _EdgeLists,
                          num_nodes: list[int]) -> None:
    """Compose the path's edges into one edge per distinct (src, tgt, time); time is the latest along the path."""
    et_id = schema.edge_type_id(name)
    target_type = schema.edge_types[et_id]
    # frontier: (origin node, current node, latest time)
    frontier: set[tuple[int, int, int]] | None = None
    for step in path:
        step_id = schema.path_step(step)
        col = lists.cols[step_id]
        out_edges: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for src, tgt, ts in zip(col["src"], col["tgt"], col["ts"]):
            out_edges[src].append((tgt, ts))
        if frontier is None:
            frontier = {(s, t, ts) for s, edges in out_edges.items() for t, ts in edges}
            continue
        frontier = {(origin, nxt, max(latest, ts))
                    for origin, node, latest in frontier
                    for nxt, ts in out_edges.get(node, ())}
    composed = sorted(e for e in (frontier or ()) if e[0] != e[1] or target_type.src != target_type.tgt)
    if target_type.symmetric:
        composed = [e for e in composed if e[0] < e[1]]
    for src, tgt, ts in composed:
        lists.add_with_mirror(schema, et_id, src, tgt, ts, -1, ORIGIN_DERIVED)
    logger.info("meta path edges materialised", edge_type=name, edges=len(composed))


def iter_stored_edges(graph: HeteroGraph) -> Iterator[tuple[int, int, int, int]]:
    """Every adjacency entry as (edge type, source, target, timestamp)."""
    for et_id, adj in enumerate(graph.adjacency):
        for src, tgt, ts in zip(adj.sources.tolist(), adj.targets().tolist(), adj.times.tolist()):
            yield et_id, src, tgt, ts
