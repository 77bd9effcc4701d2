"""Per-type candidate budgets, their sampling law and timestamp inheritance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from exception import EmptyBudget, MissingTimestamp
from src.hetgraph import HeteroGraph

# (node type, node id, assigned timestamp); one node may appear under several timestamps
EntryKey = tuple[int, int, int]
# (edge type, source id, target id)
EdgeKey = tuple[int, int, int]


@dataclass
class Budget:
    """B[τ]: (node id, timestamp) → cumulative normalised degree, one map per node type."""
    by_type: dict[int, dict[tuple[int, int], float]] = field(default_factory=dict)

    def add(self, node_type: int, node_id: int, timestamp: int, amount: float) -> None:
        bucket = self.by_type.setdefault(node_type, {})
        key = (node_id, timestamp)
        bucket[key] = bucket.get(key, 0.0) + amount

    def pop(self, key: EntryKey) -> float | None:
        bucket = self.by_type.get(key[0])
        if bucket is None:
            return None
        value = bucket.pop((key[1], key[2]), None)
        if not bucket:
            del self.by_type[key[0]]
        return value

    def for_type(self, node_type: int) -> dict[tuple[int, int], float]:
        return self.by_type.get(node_type, {})

    def types(self) -> list[int]:
        return sorted(t for t, bucket in self.by_type.items() if bucket)

    def keys(self) -> set[EntryKey]:
        return {(t, i, ts) for t, bucket in self.by_type.items() for i, ts in bucket}

    def __len__(self) -> int:
        return sum(len(bucket) for bucket in self.by_type.values())


@dataclass(frozen=True)
class Expansion:
    """One budget contribution: ``child`` reached from ``parent`` over ``edge_type`` at ``edge_time``."""
    parent: EntryKey
    child: EntryKey
    edge_type: int
    edge_time: int
    amount: float


def assign_timestamp(node_type: int, node_id: int, parent_time: int, graph: HeteroGraph) -> int:
    """Event nodes keep their own timestamp; plain nodes inherit ``parent_time``."""
    own = graph.node_time(node_type, node_id)
    return parent_time if own is None else own


def add_in_budget(
    budget: Budget,
    target: EntryKey,
    graph: HeteroGraph,
    sampled: set[EntryKey],
    excluded: set[EdgeKey] | frozenset = frozenset(),
    log: list[Expansion] | None = None,
) -> Budget:
    """Spread 1/d over the unsampled in-neighbours of ``target`` for every relation with d > 0.

    ``excluded`` edges neither count towards d nor contribute. Contributions are
    appended to ``log`` when given.
    """
    node_type, node_id, t_time = target
    if t_time is None:
        raise MissingTimestamp(f"{graph.schema.node_name(node_type)} {node_id} has no assigned timestamp")
    for rel in graph.schema.relations_into(node_type):
        adj = graph.adjacency[rel.edge_type]
        row = adj.row(node_id)
        sources = adj.sources[row].tolist()
        times = adj.times[row].tolist()
        if excluded:
            kept = [(s, ts) for s, ts in zip(sources, times) if (rel.edge_type, s, node_id) not in excluded]
        else:
            kept = list(zip(sources, times))
        if not kept:
            continue
        share = 1.0 / len(kept)
        for s, ts in kept:
            key = (rel.src_type, s, assign_timestamp(rel.src_type, s, t_time, graph))
            if key in sampled:
                continue
            budget.add(key[0], key[1], key[2], share)
            if log is not None:
                log.append(Expansion(target, key, rel.edge_type, ts, share))
    return budget


def sampling_prob(budget_for_type: Mapping[tuple[int, int], float]) -> dict[tuple[int, int], float]:
    """prob[s] = B[s]² / ‖B‖₂², keyed in ascending (node id, timestamp) order."""
    if not budget_for_type:
        raise EmptyBudget("cannot sample from an empty budget")
    keys = sorted(budget_for_type)
    probs = probability_vector(np.array([budget_for_type[k] for k in keys], dtype=np.float64))
    return dict(zip(keys, probs.tolist()))


def probability_vector(values: np.ndarray) -> np.ndarray:
    if values.size == 0:
        raise EmptyBudget("cannot sample from an empty budget")
    squared = np.square(values)
    total = squared.sum()
    if not total > 0:
        raise EmptyBudget("budget values are all zero")
    return squared / total


def draw_categorical(probs: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray | int:
    """Inverse-CDF draw(s) over ``probs``; the lowest index wins at a CDF tie."""
    cdf = np.cumsum(probs)
    u = rng.random(size) * cdf[-1]
    index = np.searchsorted(cdf, u, side="right")
    index = np.minimum(index, len(probs) - 1)
    return int(index) if size is None else index


def draw_without_replacement(keys: list, values: np.ndarray, k: int, rng: np.random.Generator) -> list:
    """Sequential draws, renormalising the squared-budget law over the remaining keys."""
    if k >= len(keys):
        return list(keys)
    remaining = list(keys)
    weights = values.astype(np.float64).copy()
    chosen = []
    for _ in range(k):
        i = draw_categorical(probability_vector(weights), rng)
        chosen.append(remaining.pop(i))
        weights = np.delete(weights, i)
    return chosen


def draw_with_replacement(keys: list, values: np.ndarray, k: int, rng: np.random.Generator) -> list:
    """k independent draws; repeated picks collapse to one entry."""
    picks = draw_categorical(probability_vector(values.astype(np.float64)), rng, size=k)
    seen: dict = {}
    for i in picks.tolist():
        seen.setdefault(keys[i], None)
    return list(seen)


def expand_excluded(graph: HeteroGraph, edges: Iterable[EdgeKey]) -> frozenset[EdgeKey]:
    """Close a set of excluded edges under mirroring."""
    closed = set()
    for edge_type, src, tgt in edges:
        closed.add((edge_type, src, tgt))
        closed.add((graph.schema.inverse(edge_type), tgt, src))
    return frozenset(closed)
