"""Ranking metrics with binary relevance; ranks start at 1."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from exception import NoPositive


def _discounts(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2, dtype=np.float64))


def ndcg(ranked_relevances: Sequence[float], k: int | None = None) -> float:
    """DCG@k / IDCG@k with gain = relevance and discount 1/log2(rank + 1); 0 when nothing is relevant."""
    rel = np.asarray(ranked_relevances, dtype=np.float64)
    if k is not None:
        rel = rel[:k]
    ideal = np.sort(np.asarray(ranked_relevances, dtype=np.float64))[::-1][: rel.size]
    idcg = float((ideal * _discounts(ideal.size)).sum())
    if idcg == 0.0:
        return 0.0
    return float((rel * _discounts(rel.size)).sum()) / idcg


def mrr(ranked_relevances: Sequence[float]) -> float:
    """Reciprocal rank of the first positive."""
    rel = np.asarray(ranked_relevances, dtype=np.float64)
    hits = np.flatnonzero(rel > 0)
    if hits.size == 0:
        raise NoPositive("ranking has no positive item")
    return 1.0 / (int(hits[0]) + 1)


def mean_mrr(rankings: Iterable[Sequence[float]]) -> float:
    """Dataset MRR: the per-query reciprocal ranks averaged over queries."""
    values = [mrr(r) for r in rankings]
    return float(np.mean(values)) if values else 0.0


def rank_by_score(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; ties keep their input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def accuracy(predicted: Sequence[int], labels: Sequence[int]) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    return float((predicted == labels).mean()) if labels.size else 0.0
