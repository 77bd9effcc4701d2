"""Task drivers: query splits, seed construction, batch losses and ranking evaluation.

Both tasks split their query nodes on the query's timestamp: train before
``train_end``, validation up to ``valid_end``, test from there on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from config import SamplerConfig, TaskSpec, derive_seed, make_rng
from exception import ConfigError, DataError, LabelOutOfRange
from logger.custom_logger import CustomLogger
from src.hetgraph import HeteroGraph
from src.hgt import HGTModel
from src.sampler import HGSampler, SampledSubgraph, Seed, assign_timestamp
from src.tensor import ParamStore, Tensor, ops

from .heads import ClassificationHead, NTNHead
from .metrics import accuracy, mrr, ndcg, rank_by_score

logger = CustomLogger().get_logger(__file__)

SPLITS = ("train", "valid", "test")
LABEL_COLUMNS = ["type", "local_id", "label"]


@dataclass
class Batch:
    seeds: list[Seed]
    queries: np.ndarray
    labels: np.ndarray | None = None
    # link prediction: candidate source ids per query, positive first before shuffling
    candidates: list[np.ndarray] = field(default_factory=list)
    targets: list[np.ndarray] = field(default_factory=list)


class TaskDriver:
    kind = ""

    def __init__(self, graph: HeteroGraph, spec: TaskSpec):
        self.graph = graph
        self.spec = spec
        self.query_type = self._query_type()
        if not graph.is_event(self.query_type):
            raise ConfigError(f"query type '{graph.schema.node_name(self.query_type)}' has no timestamps "
                              f"to split on")
        self.times = graph.node_times[self.query_type]
        self._splits = self._make_splits(self.candidate_queries())

    def _query_type(self) -> int:
        return self.graph.schema.node_type_id(self.spec.target_type)

    def candidate_queries(self) -> np.ndarray:
        raise NotImplementedError

    def _make_splits(self, queries: np.ndarray) -> dict[str, np.ndarray]:
        t = self.times[queries]
        return {
            "train": queries[t < self.spec.train_end],
            "valid": queries[(t >= self.spec.train_end) & (t < self.spec.valid_end)],
            "test": queries[t >= self.spec.valid_end],
        }

    def split(self, name: str) -> np.ndarray:
        if name not in self._splits:
            raise ConfigError(f"unknown split {name!r}; expected one of {SPLITS}")
        return self._splits[name]

    def split_sizes(self) -> dict[str, int]:
        return {name: int(self._splits[name].size) for name in SPLITS}

    def query_time(self, query: int) -> int:
        return int(self.times[query])

    def build_head(self, params: ParamStore, hidden_dim: int):
        raise NotImplementedError

    def make_batch(self, queries: np.ndarray, rng: np.random.Generator) -> Batch:
        raise NotImplementedError

    def batch_loss(self, model: HGTModel, head, subgraph: SampledSubgraph, batch: Batch,
                   training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def query_scores(self, model: HGTModel, head, subgraph: SampledSubgraph, batch: Batch) -> list[np.ndarray]:
        raise NotImplementedError

    def _rows(self, subgraph: SampledSubgraph, node_type: int, ids, times) -> np.ndarray:
        return np.array([subgraph.position((node_type, int(i), int(t))) for i, t in zip(ids, times)],
                        dtype=np.int64)

    def batches(self, queries: np.ndarray, order_seed: int | None = None) -> list[np.ndarray]:
        if order_seed is not None:
            queries = make_rng(order_seed).permutation(queries)
        size = self.spec.batch_size
        return [queries[i:i + size] for i in range(0, len(queries), size)]

    def evaluate(self, model: HGTModel, head, sampler_cfg: SamplerConfig, queries: np.ndarray,
                 root_seed: int, split: str = "test") -> tuple[dict, pd.DataFrame]:
        """Rank every query's candidates; per-query ndcg and mrr plus their means."""
        sampler = HGSampler(self.graph, sampler_cfg)
        rows = []
        for index, chunk in enumerate(self.batches(queries)):
            batch = self.make_batch(chunk, make_rng(derive_seed(root_seed, "negatives", split, index)))
            subgraph = sampler.sample(batch.seeds, rng_seed=derive_seed(root_seed, "sampler", split, index))
            for q, scores, relevance in zip(batch.queries, self.query_scores(model, head, subgraph, batch),
                                            self._relevances(batch)):
                order = rank_by_score(scores)
                ranked = relevance[order]
                rows.append({"query": int(q), "time": self.query_time(int(q)),
                             "ndcg": ndcg(ranked), "mrr": mrr(ranked),
                             "predicted": int(order[0]), "rank": int(np.flatnonzero(ranked > 0)[0]) + 1})
        frame = pd.DataFrame(rows, columns=["query", "time", "ndcg", "mrr", "predicted", "rank"])
        metrics = {
            "task": self.kind,
            "split": split,
            "n_queries": len(rows),
            "ndcg": float(frame["ndcg"].mean()) if rows else 0.0,
            "mrr": float(frame["mrr"].mean()) if rows else 0.0,
        }
        metrics.update(self._extra_metrics(frame))
        logger.info("evaluation finished", **{k: v for k, v in metrics.items()})
        return metrics, frame

    def _relevances(self, batch: Batch) -> list[np.ndarray]:
        raise NotImplementedError

    def _extra_metrics(self, frame: pd.DataFrame) -> dict:
        return {}


class NodeClassificationTask(TaskDriver):
    """Softmax classification of query nodes; ranking is over classes by logit."""

    kind = "node-class"

    def __init__(self, graph: HeteroGraph, spec: TaskSpec, labels: pd.DataFrame):
        self.labels_frame = labels
        type_name = spec.target_type
        own = labels[labels["type"] == type_name]
        if own.empty:
            raise DataError(f"no labels for node type '{type_name}'")
        n = graph.num_nodes[graph.schema.node_type_id(type_name)]
        ids = own["local_id"].to_numpy(dtype=np.int64)
        if ids.min() < 0 or ids.max() >= n:
            raise DataError(f"labels reference {type_name} nodes outside [0, {n})")
        self.label_of = np.full(n, -1, dtype=np.int64)
        self.label_of[ids] = own["label"].to_numpy(dtype=np.int64)
        if (self.label_of[ids] < 0).any():
            raise LabelOutOfRange("labels must be non-negative")
        self.n_classes = int(self.label_of.max()) + 1
        super().__init__(graph, spec)

    @classmethod
    def from_dir(cls, graph: HeteroGraph, spec: TaskSpec, directory: str | Path) -> "NodeClassificationTask":
        return cls(graph, spec, read_labels(Path(directory) / spec.labels_file))

    def candidate_queries(self) -> np.ndarray:
        return np.flatnonzero(self.label_of >= 0)

    def majority_baseline(self, split: str = "test") -> float:
        """Accuracy of always predicting the most frequent training class."""
        train = self.label_of[self.split("train")]
        if train.size == 0:
            return 0.0
        majority = int(np.bincount(train, minlength=self.n_classes).argmax())
        return accuracy(np.full(self.split(split).size, majority), self.label_of[self.split(split)])

    def build_head(self, params: ParamStore, hidden_dim: int) -> ClassificationHead:
        return ClassificationHead(params, hidden_dim, self.n_classes)

    def make_batch(self, queries: np.ndarray, rng: np.random.Generator) -> Batch:
        queries = np.asarray(queries, dtype=np.int64)
        seeds = [Seed(self.query_type, int(q)) for q in queries]
        return Batch(seeds=seeds, queries=queries, labels=self.label_of[queries])

    def _logits(self, model: HGTModel, head, subgraph, batch, training=False, rng=None) -> Tensor:
        H = model.forward(subgraph, rng=rng, training=training)
        rows = self._rows(subgraph, self.query_type, batch.queries, self.times[batch.queries])
        return head.logits(ops.gather_rows(H[self.query_type], rows))

    def batch_loss(self, model, head, subgraph, batch, training=False, rng=None) -> Tensor:
        return ops.cross_entropy(self._logits(model, head, subgraph, batch, training, rng), batch.labels)

    def query_scores(self, model, head, subgraph, batch) -> list[np.ndarray]:
        return list(self._logits(model, head, subgraph, batch).data)

    def _relevances(self, batch: Batch) -> list[np.ndarray]:
        return [np.eye(self.n_classes)[label] for label in batch.labels]

    def _extra_metrics(self, frame: pd.DataFrame) -> dict:
        if frame.empty:
            return {"accuracy": 0.0}
        return {"accuracy": accuracy(frame["predicted"], self.label_of[frame["query"].to_numpy()])}


class LinkPredictionTask(TaskDriver):
    """Rank candidate sources of ``edge_type`` for each query target with an NTN head.

    Each query gets one true source and ``n_candidates - 1`` sources it is not
    linked to. Every true (source, query) edge is excluded from the sampled
    subgraph; candidate seeds take the query's timestamp.
    """

    kind = "link"

    def __init__(self, graph: HeteroGraph, spec: TaskSpec):
        schema = graph.schema
        self.edge_type = schema.edge_type_id(spec.edge_type)
        rel = schema.meta_relation(self.edge_type)
        if schema.node_name(rel.tgt_type) != spec.target_type:
            raise ConfigError(f"edge type '{spec.edge_type}' does not target '{spec.target_type}'")
        self.candidate_type = rel.src_type
        self.n_sources = graph.num_nodes[rel.src_type]
        if self.n_sources < spec.n_candidates:
            raise DataError(f"only {self.n_sources} candidate nodes for {spec.n_candidates} candidates per query")
        self.adjacency = graph.adjacency[self.edge_type]
        super().__init__(graph, spec)

    def true_sources(self, query: int) -> np.ndarray:
        return np.unique(self.adjacency.sources[self.adjacency.row(query)])

    def candidate_queries(self) -> np.ndarray:
        degree = np.diff(self.adjacency.indptr)
        return np.flatnonzero(degree > 0)

    def build_head(self, params: ParamStore, hidden_dim: int) -> NTNHead:
        return NTNHead(params, hidden_dim, self.spec.ntn_slices)

    def make_batch(self, queries: np.ndarray, rng: np.random.Generator) -> Batch:
        queries = np.asarray(queries, dtype=np.int64)
        seeds = []
        candidates = []
        targets = []
        n_neg = self.spec.n_candidates - 1
        for q in queries.tolist():
            positives = self.true_sources(q)
            pool = np.setdiff1d(np.arange(self.n_sources), positives, assume_unique=True)
            if pool.size < n_neg:
                raise DataError(f"query {q} has only {pool.size} negative candidates")
            positive = int(rng.choice(positives))
            negatives = rng.choice(pool, size=n_neg, replace=False)
            cand = np.concatenate([[positive], negatives]).astype(np.int64)
            label = np.zeros(cand.size)
            label[0] = 1.0
            perm = rng.permutation(cand.size)
            candidates.append(cand[perm])
            targets.append(label[perm])
            t = self.query_time(q)
            exclusions = tuple((self.edge_type, int(s), q) for s in positives)
            seeds.append(Seed(self.query_type, q, exclusions=exclusions))
            seeds.extend(Seed(self.candidate_type, int(c), time=t) for c in cand)
        return Batch(seeds=seeds, queries=queries, candidates=candidates, targets=targets)

    def _logits(self, model, head, subgraph, batch, training=False, rng=None) -> Tensor:
        H = model.forward(subgraph, rng=rng, training=training)
        q_ids = np.repeat(batch.queries, [c.size for c in batch.candidates])
        q_times = self.times[q_ids]
        cand = np.concatenate(batch.candidates)
        p = ops.gather_rows(H[self.query_type], self._rows(subgraph, self.query_type, q_ids, q_times))
        c_times = [assign_timestamp(self.candidate_type, int(c), int(t), self.graph) for c, t in zip(cand, q_times)]
        a = ops.gather_rows(H[self.candidate_type], self._rows(subgraph, self.candidate_type, cand, c_times))
        return head.logits(p, a)

    def batch_loss(self, model, head, subgraph, batch, training=False, rng=None) -> Tensor:
        logits = self._logits(model, head, subgraph, batch, training, rng)
        return ops.bce_with_logits(logits, np.concatenate(batch.targets))

    def query_scores(self, model, head, subgraph, batch) -> list[np.ndarray]:
        flat = self._logits(model, head, subgraph, batch).data
        splits = np.cumsum([c.size for c in batch.candidates])[:-1]
        return np.split(flat, splits)

    def _relevances(self, batch: Batch) -> list[np.ndarray]:
        return batch.targets


def read_labels(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"labels file not found: {path}")
    frame = pd.read_csv(path, sep="\t", dtype={"type": str})
    if list(frame.columns) != LABEL_COLUMNS:
        raise DataError(f"{path.name}: header must be {'<TAB>'.join(LABEL_COLUMNS)}")
    return frame


def make_task(graph: HeteroGraph, spec: TaskSpec, directory: str | Path | None = None) -> TaskDriver:
    if spec.kind == "node-class":
        if directory is None:
            raise ConfigError("node classification needs a directory holding the labels file")
        return NodeClassificationTask.from_dir(graph, spec, directory)
    return LinkPredictionTask(graph, spec)
