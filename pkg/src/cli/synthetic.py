"""Planted-class academic graph generator.

Papers are event nodes with integer timestamps; authors, venues, fields and
institutes are plain. Every node gets a class. With probability
``correlation`` a paper links to a neighbour of its own class, otherwise to a
uniformly chosen one, so node classes are recoverable from neighbourhood
composition. Paper features are pure noise; venue and field features carry a
noisy class prototype.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from config import SynthConfig, derive_seed, make_rng
from logger.custom_logger import CustomLogger
from src.hetgraph import EdgeRecord, HeteroGraph, NodeRecord, NodeType, Schema, build_graph, write_flat_files

logger = CustomLogger().get_logger(__file__)

NODE_TYPES = ("paper", "author", "venue", "field", "institute")
EDGE_SPECS = [
    {"name": "cites", "src": "paper", "tgt": "paper"},
    {"name": "writes", "src": "author", "tgt": "paper"},
    {"name": "published_in", "src": "paper", "tgt": "venue"},
    {"name": "has_field", "src": "paper", "tgt": "field"},
    {"name": "affiliated", "src": "author", "tgt": "institute"},
]


@dataclass
class SyntheticGraph:
    graph: HeteroGraph
    labels: pd.DataFrame

    def write(self, directory: str | Path) -> Path:
        directory = write_flat_files(self.graph, directory)
        self.labels.to_csv(Path(directory) / "labels.tsv", sep="\t", index=False, lineterminator="\n")
        return directory


def synth_schema(cfg: SynthConfig) -> Schema:
    node_types = [NodeType(name, cfg.feature_dim, is_event=(name == "paper")) for name in NODE_TYPES]
    return Schema.build(node_types, EDGE_SPECS)


def _pick(rng: np.random.Generator, classes: np.ndarray, cls: int, correlation: float,
          pool: np.ndarray | None = None) -> int:
    """One node id: same-class with probability ``correlation`` (when any exists), else uniform."""
    pool = np.arange(classes.size) if pool is None else pool
    if rng.random() < correlation:
        same = pool[classes[pool] == cls]
        if same.size:
            return int(rng.choice(same))
    return int(rng.choice(pool))


def _pick_distinct(rng, classes, cls, correlation, k, pool=None) -> list[int]:
    chosen: list[int] = []
    limit = classes.size if pool is None else pool.size
    for _ in range(10 * k):
        if len(chosen) == min(k, limit):
            break
        node = _pick(rng, classes, cls, correlation, pool)
        if node not in chosen:
            chosen.append(node)
    return chosen


def generate(cfg: SynthConfig) -> SyntheticGraph:
    rng = make_rng(derive_seed(cfg.seed, "synth"))
    C = cfg.n_classes
    counts = {"paper": cfg.papers, "author": cfg.authors, "venue": cfg.venues,
              "field": cfg.fields, "institute": cfg.institutes}
    classes = {name: rng.integers(0, C, size=n) for name, n in counts.items()}
    times = rng.integers(cfg.time_min, cfg.time_max, size=cfg.papers)

    nodes = [NodeRecord("paper", i, int(times[i])) for i in range(cfg.papers)]
    for name in NODE_TYPES[1:]:
        nodes.extend(NodeRecord(name, i) for i in range(counts[name]))

    corr = cfg.correlation
    paper_cls = classes["paper"]
    edges: list[EdgeRecord] = []
    for p in range(cfg.papers):
        t = int(times[p])
        c = int(paper_cls[p])
        earlier = np.flatnonzero(times < t)
        if earlier.size:
            for q in _pick_distinct(rng, paper_cls, c, corr, cfg.citations_per_paper, earlier):
                edges.append(EdgeRecord("cites", "paper", p, "paper", q, t))
        for a in _pick_distinct(rng, classes["author"], c, corr, cfg.authors_per_paper):
            edges.append(EdgeRecord("writes", "author", a, "paper", p, t))
        v = _pick(rng, classes["venue"], c, corr)
        edges.append(EdgeRecord("published_in", "paper", p, "venue", v, t))
        for f in _pick_distinct(rng, classes["field"], c, corr, cfg.fields_per_paper):
            edges.append(EdgeRecord("has_field", "paper", p, "field", f, t))
    for a in range(cfg.authors):
        i = _pick(rng, classes["institute"], int(classes["author"][a]), corr)
        edges.append(EdgeRecord("affiliated", "author", a, "institute", i, cfg.time_min))

    prototypes = rng.normal(0.0, 1.0, size=(C, cfg.feature_dim))
    features = {}
    for name, n in counts.items():
        noise = rng.normal(0.0, 1.0, size=(n, cfg.feature_dim))
        if name in ("venue", "field"):
            noise = 0.5 * noise + prototypes[classes[name]]
        features[name] = noise.astype(np.float32)

    graph = build_graph(synth_schema(cfg), nodes, edges, features=features)
    labels = pd.DataFrame(
        [(name, i, int(classes[name][i])) for name in NODE_TYPES for i in range(counts[name])],
        columns=["type", "local_id", "label"],
    )
    logger.info("synthetic graph generated", **counts, edges=len(edges), correlation=corr)
    return SyntheticGraph(graph, labels)


def majority_vote_accuracy(graph: HeteroGraph, labels: pd.DataFrame, target_type: str = "paper") -> float:
    """Accuracy of predicting each target's class as the most common class among its 1-hop neighbours."""
    schema = graph.schema
    label_of = {(schema.node_type_id(t), int(i)): int(c) for t, i, c in labels.itertuples(index=False)}
    tgt = schema.node_type_id(target_type)
    n_classes = int(labels["label"].max()) + 1
    correct = 0
    total = 0
    for node in range(graph.num_nodes[tgt]):
        votes = np.zeros(n_classes, dtype=np.int64)
        for rel in schema.relations_into(tgt):
            if schema.edge_types[rel.edge_type].is_self_loop:
                continue
            for src, _ in graph.neighbors((tgt, node), rel):
                cls = label_of.get((rel.src_type, src))
                if cls is not None:
                    votes[cls] += 1
        if votes.sum() == 0:
            continue
        total += 1
        correct += int(votes.argmax() == label_of[(tgt, node)])
    return correct / total if total else 0.0
