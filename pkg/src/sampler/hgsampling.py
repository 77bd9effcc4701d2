"""Heterogeneous mini-batch graph sampling.

Each round takes a snapshot of the budget, draws up to ``n`` entries per node
type from it, moves every drawn entry into the output set and only then
expands the drawn entries into the budget. Rounds therefore grow the sample
layer by layer from the seeds.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from config import SamplerConfig, make_rng
from exception import EmptySeedSet, MissingTimestamp
from logger.custom_logger import CustomLogger
from src.hetgraph import HeteroGraph

from .budget import (
    Budget,
    EdgeKey,
    EntryKey,
    Expansion,
    add_in_budget,
    assign_timestamp,
    draw_with_replacement,
    draw_without_replacement,
    expand_excluded,
)
from .subgraph import EdgeBlock, SampledSubgraph

logger = CustomLogger().get_logger(__file__)

RoundObserver = Callable[[int, Budget, set[EntryKey]], None]


@dataclass(frozen=True)
class Seed:
    """A target node for the batch; ``time`` may be omitted for event nodes.

    ``exclusions`` are (edge type, source id, target id) label edges removed
    from expansion and from Â together with their mirrors.
    """
    node_type: int
    node_id: int
    time: int | None = None
    exclusions: tuple[EdgeKey, ...] = field(default=())


class HGSampler:
    """One instance per worker; the graph is shared read-only."""

    def __init__(self, graph: HeteroGraph, config: SamplerConfig):
        self.graph = graph
        self.config = config

    def _seed_key(self, seed: Seed) -> EntryKey:
        own = self.graph.node_time(seed.node_type, seed.node_id)
        if own is not None:
            return (seed.node_type, seed.node_id, own)
        if seed.time is None:
            raise MissingTimestamp(
                f"seed {self.graph.schema.node_name(seed.node_type)} {seed.node_id} is a plain node without a timestamp")
        return (seed.node_type, seed.node_id, int(seed.time))

    def sample(self, seeds: list[Seed], rng: np.random.Generator | None = None,
               rng_seed: int | None = None, on_round: RoundObserver | None = None) -> SampledSubgraph:
        """Run ``depth`` rounds from ``seeds``; ``on_round(round_id, budget, sampled)`` sees the state after each."""
        if not seeds:
            raise EmptySeedSet("hg_sample needs at least one seed")
        if rng is None:
            rng_seed = self.config.seed if rng_seed is None else rng_seed
            rng = make_rng(rng_seed)
        graph = self.graph
        cfg = self.config
        excluded = expand_excluded(graph, (e for s in seeds for e in s.exclusions))

        seed_keys: list[EntryKey] = []
        for seed in seeds:
            key = self._seed_key(seed)
            if key not in seed_keys:
                seed_keys.append(key)

        order: list[EntryKey] = list(seed_keys)
        sampled: set[EntryKey] = set(seed_keys)
        budget = Budget()
        log: list[Expansion] = []
        for key in seed_keys:
            add_in_budget(budget, key, graph, sampled, excluded, log)

        draw = draw_with_replacement if cfg.with_replacement else draw_without_replacement
        for round_id in range(cfg.depth):
            if not len(budget):
                break
            picked: list[EntryKey] = []
            for node_type in budget.types():
                bucket = budget.for_type(node_type)
                keys = sorted(bucket)
                values = np.array([bucket[k] for k in keys], dtype=np.float64)
                for node_id, ts in draw(keys, values, min(cfg.n, len(keys)), rng):
                    picked.append((node_type, node_id, ts))
            for key in picked:
                sampled.add(key)
                order.append(key)
                budget.pop(key)
            for key in picked:
                add_in_budget(budget, key, graph, sampled, excluded, log)
            logger.debug("sampling round", round=round_id, sampled=len(picked), budget=len(budget))
            if on_round is not None:
                on_round(round_id, budget, sampled)

        return self._assemble(order, seed_keys, excluded, log, rng_seed)

    def _assemble(self, order: list[EntryKey], seed_keys: list[EntryKey], excluded: frozenset,
                  log: list[Expansion], rng_seed: int | None) -> SampledSubgraph:
        graph = self.graph
        entries: dict[int, list[tuple[int, int]]] = {t: [] for t in range(graph.schema.num_node_types)}
        for t, i, ts in order:
            entries[t].append((i, ts))
        position = {(t, i, ts): p for t, rows in entries.items() for p, (i, ts) in enumerate(rows)}
        if self.config.reconstruct == "traversed":
            edges = self._traversed_edges(log, position)
        else:
            edges = self._induced_edges(entries, position)

        blocks = []
        for edge_type in sorted(edges):
            rows = [r for r in edges[edge_type] if (edge_type, r[3], r[4]) not in excluded]
            if not rows:
                continue
            arr = np.asarray([r[:3] for r in rows], dtype=np.int64).reshape(-1, 3)
            blocks.append(EdgeBlock(graph.schema.meta_relation(edge_type), arr[:, 0], arr[:, 1], arr[:, 2]))
        features = {t: graph.features[t][np.array([i for i, _ in rows], dtype=np.int64)]
                    for t, rows in entries.items()}
        return SampledSubgraph(graph.schema, entries, features, blocks, seed_keys, log, rng_seed)

    def _induced_edges(self, entries, position) -> dict[int, list[tuple[int, int, int, int, int]]]:
        """Every stored edge between OS entries, closed under mirrors.

        A plain source is matched at its target's timestamp. An event source feeding a plain target keyed at
        another time has no forward counterpart for its mirror, so the mirror is added here.
        """
        graph = self.graph
        schema = graph.schema
        edges: dict[int, list] = defaultdict(list)
        for tgt_type, rows in entries.items():
            tgt_plain = not graph.is_event(tgt_type)
            for rel in schema.relations_into(tgt_type):
                adj = graph.adjacency[rel.edge_type]
                is_loop = schema.edge_types[rel.edge_type].is_self_loop
                for t_pos, (t_id, t_time) in enumerate(rows):
                    row = adj.row(t_id)
                    for s_id, ts in zip(adj.sources[row].tolist(), adj.times[row].tolist()):
                        s_key = (rel.src_type, s_id, assign_timestamp(rel.src_type, s_id, t_time, graph))
                        s_pos = position.get(s_key)
                        if s_pos is None:
                            continue
                        edge_time = t_time if is_loop else ts
                        edges[rel.edge_type].append((s_pos, t_pos, edge_time, s_id, t_id))
                        if tgt_plain and not is_loop and s_key[2] != t_time:
                            edges[schema.inverse(rel.edge_type)].append((t_pos, s_pos, ts, t_id, s_id))
        for rows in edges.values():
            rows.sort(key=lambda r: r[1])
        return edges

    def _traversed_edges(self, log: list[Expansion], position) -> dict[int, list[tuple[int, int, int, int, int]]]:
        """Only edges used while expanding, each with its mirror."""
        schema = self.graph.schema
        seen = set()
        edges: dict[int, list] = defaultdict(list)
        for e in log:
            if e.child not in position or e.parent not in position:
                continue
            for edge_type, src, tgt in ((e.edge_type, e.child, e.parent),
                                        (schema.inverse(e.edge_type), e.parent, e.child)):
                item = (edge_type, src, tgt, e.edge_time)
                if item in seen:
                    continue
                seen.add(item)
                edges[edge_type].append((position[src], position[tgt], e.edge_time, src[1], tgt[1]))
        for key, pos in position.items():
            loop = schema.self_loop_type(key[0])
            if loop is not None:
                edges[loop].append((pos, pos, key[2], key[1], key[1]))
        for edge_type in edges:
            edges[edge_type].sort(key=lambda r: (r[1], r[0], r[2]))
        return edges


def hg_sample(graph: HeteroGraph, seeds: list[Seed], cfg: SamplerConfig,
              rng: np.random.Generator | None = None) -> SampledSubgraph:
    return HGSampler(graph, cfg).sample(seeds, rng=rng)
