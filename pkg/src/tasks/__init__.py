from .drivers import (
    Batch,
    LinkPredictionTask,
    NodeClassificationTask,
    TaskDriver,
    make_task,
    read_labels,
)
from .heads import ClassificationHead, NTNHead, classify_loss, ntn_score
from .metrics import accuracy, mean_mrr, mrr, ndcg, rank_by_score

__all__ = [
    "Batch",
    "ClassificationHead",
    "LinkPredictionTask",
    "NTNHead",
    "NodeClassificationTask",
    "TaskDriver",
    "accuracy",
    "classify_loss",
    "make_task",
    "mean_mrr",
    "mrr",
    "ndcg",
    "ntn_score",
    "rank_by_score",
    "read_labels",
]
