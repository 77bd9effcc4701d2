from .layer import (
    AttentionRecord,
    HGTLayer,
    Projection,
    aggregate,
    att_head_scores,
    hetero_attention,
    message,
)
from .model import HGTModel, attention_frame, attention_summary, per_layer_parameter_count
from .rte import RelativeTemporalEncoding, apply_rte, rte_base

__all__ = [
    "AttentionRecord",
    "HGTLayer",
    "HGTModel",
    "Projection",
    "RelativeTemporalEncoding",
    "aggregate",
    "apply_rte",
    "att_head_scores",
    "attention_frame",
    "attention_summary",
    "hetero_attention",
    "message",
    "per_layer_parameter_count",
    "rte_base",
]
