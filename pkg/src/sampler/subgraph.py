from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.hetgraph import MetaRelation, Schema

from .budget import EntryKey, Expansion


@dataclass(frozen=True)
class EdgeBlock:
    """Â for one meta relation: positions into the per-type entry lists plus edge timestamps."""
    rel: MetaRelation
    src: np.ndarray
    tgt: np.ndarray
    times: np.ndarray

    def __len__(self) -> int:
        return int(self.src.shape[0])


@dataclass
class SampledSubgraph:
    """Output node set OS grouped by type, reconstructed adjacency Â and feature slices.

    ``entries[τ][i]`` is the (node id, assigned timestamp) of row i of every
    per-type matrix derived from this subgraph.
    """
    schema: Schema
    entries: dict[int, list[tuple[int, int]]]
    features: dict[int, np.ndarray]
    blocks: list[EdgeBlock]
    seeds: list[EntryKey]
    expansion_log: list[Expansion] = field(default_factory=list)
    rng_seed: int | None = None

    def __post_init__(self):
        self._position = {(t, i, ts): p for t, rows in self.entries.items() for p, (i, ts) in enumerate(rows)}

    def num_nodes(self, node_type: int) -> int:
        return len(self.entries.get(node_type, ()))

    @property
    def total_nodes(self) -> int:
        return sum(len(rows) for rows in self.entries.values())

    @property
    def num_edges(self) -> int:
        return sum(len(b) for b in self.blocks)

    def times(self, node_type: int) -> np.ndarray:
        return np.array([ts for _, ts in self.entries.get(node_type, ())], dtype=np.int64)

    def position(self, key: EntryKey) -> int:
        return self._position[key]

    def __contains__(self, key: EntryKey) -> bool:
        return key in self._position

    def keys(self) -> set[EntryKey]:
        return set(self._position)

    def seed_positions(self) -> list[tuple[int, int]]:
        return [(key[0], self._position[key]) for key in self.seeds]

    def edge_list(self) -> list[tuple[int, EntryKey, EntryKey, int]]:
        """Â as (edge type, source entry, target entry, edge timestamp)."""
        edges = []
        for block in self.blocks:
            src_rows = self.entries[block.rel.src_type]
            tgt_rows = self.entries[block.rel.tgt_type]
            for s, t, ts in zip(block.src.tolist(), block.tgt.tolist(), block.times.tolist()):
                edges.append((block.rel.edge_type,
                              (block.rel.src_type, *src_rows[s]),
                              (block.rel.tgt_type, *tgt_rows[t]), ts))
        return edges

    def with_times(self, remap) -> "SampledSubgraph":
        """Copy with every node and edge timestamp passed through ``remap`` (a vectorised int map)."""
        def one(ts: int) -> int:
            return int(np.asarray(remap(np.array([ts], dtype=np.int64)))[0])

        entries = {t: [(i, one(ts)) for i, ts in rows] for t, rows in self.entries.items()}
        blocks = [EdgeBlock(b.rel, b.src, b.tgt, np.asarray(remap(b.times), dtype=np.int64)) for b in self.blocks]
        seeds = [(t, i, one(ts)) for t, i, ts in self.seeds]
        return SampledSubgraph(self.schema, entries, self.features, blocks, seeds, [], self.rng_seed)

    def to_dict(self) -> dict:
        name = self.schema.node_name
        nodes = [[name(t), i, ts] for t in sorted(self.entries) for i, ts in self.entries[t]]
        edges = [[self.schema.edge_name(et), name(s[0]), s[1], s[2], name(t[0]), t[1], t[2], ts]
                 for et, s, t, ts in self.edge_list()]
        log = [{"parent": [name(e.parent[0]), e.parent[1], e.parent[2]],
                "child": [name(e.child[0]), e.child[1], e.child[2]],
                "edge_type": self.schema.edge_name(e.edge_type),
                "edge_time": e.edge_time,
                "amount": e.amount} for e in self.expansion_log]
        return {
            "rng_seed": self.rng_seed,
            "schema_hash": self.schema.schema_hash(),
            "seeds": [[name(t), i, ts] for t, i, ts in self.seeds],
            "nodes": nodes,
            "edges": edges,
            "edge_columns": ["edge_type", "src_type", "src_id", "src_time", "tgt_type", "tgt_id", "tgt_time", "time"],
            "expansion_log": log,
        }

    def to_json(self, path: str | Path, extra: dict | None = None) -> Path:
        payload = self.to_dict()
        payload.update(extra or {})
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return path
