"""Flat-file ingestion, flat-file serialisation and the binary graph bundle.

A graph directory holds ``schema.json``, ``nodes.tsv``, ``edges.tsv`` and one
``features.<type>.f32`` sidecar per node type with a non-zero feature
dimension. ``ingest`` adds ``graph.json`` (manifest) and ``graph.bin``
(little-endian raw arrays), which load without re-validating records.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from exception import ConfigError, DataError, IngestError, MissingFeatures
from logger.custom_logger import CustomLogger

from .graph import EdgeRecord, HeteroGraph, NodeRecord, RelationAdjacency, build_graph
from .schema import Schema

logger = CustomLogger().get_logger(__file__)

SCHEMA_FILE = "schema.json"
NODES_FILE = "nodes.tsv"
EDGES_FILE = "edges.tsv"
BUNDLE_MANIFEST = "graph.json"
BUNDLE_BUFFER = "graph.bin"
BUNDLE_FORMAT = "hgt-graph"
BUNDLE_VERSION = 1

NODE_COLUMNS = ["type", "local_id", "timestamp"]
EDGE_COLUMNS = ["edge_type", "src_type", "src_id", "tgt_type", "tgt_id", "timestamp"]
ADJACENCY_FIELDS = ("indptr", "sources", "times", "seq", "origin")


def features_file(node_type: str) -> str:
    return f"features.{node_type}.f32"


def _read_table(path: Path, columns: list[str]) -> pd.DataFrame:
    if not path.exists():
        raise ConfigError(f"missing input file {path}")
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    if list(frame.columns) != columns:
        raise IngestError(f"header must be {'<TAB>'.join(columns)}, got {'<TAB>'.join(frame.columns)}",
                          source=path.name, line=1)
    return frame


def _parse_int(value: str, what: str, source: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise IngestError(f"{what} {value!r} is not an integer", source=source, line=line) from None


def read_node_records(path: str | Path) -> list[NodeRecord]:
    path = Path(path)
    frame = _read_table(path, NODE_COLUMNS)
    records = []
    # header is line 1
    for line, (node_type, local_id, timestamp) in enumerate(frame.itertuples(index=False, name=None), start=2):
        records.append(NodeRecord(
            node_type=node_type,
            local_id=_parse_int(local_id, "node id", path.name, line),
            timestamp=None if timestamp == "" else _parse_int(timestamp, "timestamp", path.name, line),
            line=line,
        ))
    return records


def read_edge_records(path: str | Path) -> list[EdgeRecord]:
    path = Path(path)
    frame = _read_table(path, EDGE_COLUMNS)
    records = []
    for line, row in enumerate(frame.itertuples(index=False, name=None), start=2):
        edge_type, src_type, src_id, tgt_type, tgt_id, timestamp = row
        records.append(EdgeRecord(
            edge_type=edge_type,
            src_type=src_type,
            src_id=_parse_int(src_id, "source id", path.name, line),
            tgt_type=tgt_type,
            tgt_id=_parse_int(tgt_id, "target id", path.name, line),
            timestamp=_parse_int(timestamp, "timestamp", path.name, line),
            line=line,
        ))
    return records


def read_features(directory: str | Path, schema: Schema, node_counts: dict[str, int]) -> dict[str, np.ndarray]:
    directory = Path(directory)
    features = {}
    for nt in schema.node_types:
        if nt.feature_dim == 0:
            continue
        path = directory / features_file(nt.name)
        if not path.exists():
            raise MissingFeatures(nt.name, f"no feature file {path.name}")
        flat = np.fromfile(path, dtype="<f4")
        n = node_counts.get(nt.name, 0)
        if flat.size != n * nt.feature_dim:
            raise MissingFeatures(nt.name, f"{path.name} holds {flat.size} floats, expected {n} x {nt.feature_dim}")
        features[nt.name] = flat.reshape(n, nt.feature_dim).astype(np.float32)
    return features


def load_flat_files(directory: str | Path, self_loops: bool = False) -> HeteroGraph:
    directory = Path(directory)
    schema = Schema.from_json(directory / SCHEMA_FILE)
    nodes = read_node_records(directory / NODES_FILE)
    edges = read_edge_records(directory / EDGES_FILE)
    counts: dict[str, int] = {}
    for rec in nodes:
        counts[rec.node_type] = counts.get(rec.node_type, 0) + 1
    features = read_features(directory, schema, counts)
    return build_graph(schema, nodes, edges, features=features, self_loops=self_loops)


def write_flat_files(graph: HeteroGraph, directory: str | Path) -> Path:
    """Serialise to schema/nodes/edges/features; rebuilding reproduces identical adjacency."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    schema = graph.schema
    (directory / SCHEMA_FILE).write_text(json.dumps(schema.to_dict(), sort_keys=True, indent=2) + "\n",
                                         encoding="utf-8")
    nodes, edges = graph.records()
    pd.DataFrame(
        [(r.node_type, r.local_id, "" if r.timestamp is None else r.timestamp) for r in nodes],
        columns=NODE_COLUMNS,
    ).to_csv(directory / NODES_FILE, sep="\t", index=False, lineterminator="\n")
    pd.DataFrame(
        [(r.edge_type, r.src_type, r.src_id, r.tgt_type, r.tgt_id, r.timestamp) for r in edges],
        columns=EDGE_COLUMNS,
    ).to_csv(directory / EDGES_FILE, sep="\t", index=False, lineterminator="\n")
    for t, nt in enumerate(schema.node_types):
        if nt.feature_dim:
            np.ascontiguousarray(graph.features[t], dtype="<f4").tofile(directory / features_file(nt.name))
    return directory


def save_bundle(graph: HeteroGraph, directory: str | Path) -> Path:
    """Write the deterministic binary bundle (manifest + one raw buffer)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    schema = graph.schema
    arrays: list[tuple[str, np.ndarray]] = []
    for t, nt in enumerate(schema.node_types):
        if t in graph.node_times:
            arrays.append((f"times/{nt.name}", graph.node_times[t]))
        arrays.append((f"features/{nt.name}", graph.features[t]))
    for e, et in enumerate(schema.edge_types):
        adj = graph.adjacency[e]
        for field in ADJACENCY_FIELDS:
            arrays.append((f"adjacency/{et.name}/{field}", getattr(adj, field)))

    entries = []
    offset = 0
    with open(directory / BUNDLE_BUFFER, "wb") as fh:
        for name, array in arrays:
            raw = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<")).tobytes()
            entries.append({"name": name, "dtype": array.dtype.name, "shape": list(array.shape),
                            "offset": offset, "nbytes": len(raw)})
            fh.write(raw)
            offset += len(raw)
    manifest = {
        "format": BUNDLE_FORMAT,
        "format_version": BUNDLE_VERSION,
        "schema": schema.to_dict(),
        "schema_hash": schema.schema_hash(),
        "self_loops": schema.has_self_loops,
        "num_nodes": list(graph.num_nodes),
        "counts": graph.counts(),
        "arrays": entries,
    }
    (directory / BUNDLE_MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                                             encoding="utf-8")
    logger.info("graph bundle written", path=str(directory), bytes=offset)
    return directory


def load_bundle(directory: str | Path) -> HeteroGraph:
    directory = Path(directory)
    manifest = json.loads((directory / BUNDLE_MANIFEST).read_text(encoding="utf-8"))
    if manifest.get("format") != BUNDLE_FORMAT or manifest.get("format_version") != BUNDLE_VERSION:
        raise DataError(f"{directory / BUNDLE_MANIFEST} is not a version {BUNDLE_VERSION} graph bundle")
    schema = Schema.from_dict(manifest["schema"], self_loops=manifest["self_loops"])
    buffer = (directory / BUNDLE_BUFFER).read_bytes()
    arrays = {}
    for entry in manifest["arrays"]:
        chunk = buffer[entry["offset"]:entry["offset"] + entry["nbytes"]]
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"]).astype(entry["dtype"])
    node_times = {t: arrays[f"times/{nt.name}"] for t, nt in enumerate(schema.node_types) if nt.is_event}
    features = {t: arrays[f"features/{nt.name}"] for t, nt in enumerate(schema.node_types)}
    adjacency = tuple(
        RelationAdjacency(**{field: arrays[f"adjacency/{et.name}/{field}"] for field in ADJACENCY_FIELDS})
        for et in schema.edge_types
    )
    return HeteroGraph(schema, tuple(manifest["num_nodes"]), node_times, features, adjacency)


def _flat_files_newer(directory: Path) -> bool:
    """True when a flat input file was written after the bundle manifest."""
    bundle_time = (directory / BUNDLE_MANIFEST).stat().st_mtime
    inputs = [directory / SCHEMA_FILE, directory / NODES_FILE, directory / EDGES_FILE,
              *directory.glob(features_file("*"))]
    return any(p.stat().st_mtime > bundle_time for p in inputs if p.exists())


def load_graph(directory: str | Path, self_loops: bool = False) -> HeteroGraph:
    """Load a bundle when present, else ingest flat files; self-loops are added or dropped to match the request.

    Flat files written after the bundle win over it.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"graph directory not found: {directory}")
    if (directory / BUNDLE_MANIFEST).exists():
        if not _flat_files_newer(directory):
            graph = load_bundle(directory)
            logger.info("graph loaded", source="bundle", directory=str(directory))
            if graph.self_loops == self_loops:
                return graph
            return rebuild(graph, self_loops=self_loops)
        logger.warning("flat files are newer than the bundle, ingesting them", directory=str(directory))
    graph = load_flat_files(directory, self_loops=self_loops)
    logger.info("graph loaded", source="flat files", directory=str(directory))
    return graph


def rebuild(graph: HeteroGraph, self_loops: bool) -> HeteroGraph:
    nodes, edges = graph.records()
    features = {nt.name: graph.features[t] for t, nt in enumerate(graph.schema.node_types)}
    return build_graph(graph.schema.without_self_loops(), nodes, edges, features=features, self_loops=self_loops)
