from __future__ import annotations

import numpy as np
import pandas as pd

from config import HGTConfig, make_rng
from exception import ShapeMismatch
from logger.custom_logger import CustomLogger
from src.hetgraph import Schema
from src.sampler import SampledSubgraph
from src.tensor import ParamStore, Tensor, ops

from .layer import AttentionRecord, HGTLayer, Projection

logger = CustomLogger().get_logger(__file__)


class HGTModel:
    """Per-type input adapters followed by ``n_layers`` HGT layers over one ParamStore."""

    def __init__(self, schema: Schema, cfg: HGTConfig, params: ParamStore | None = None, seed: int = 0):
        self.schema = schema
        self.cfg = cfg
        self.params = params if params is not None else ParamStore(cfg.dtype, make_rng(seed))
        d = cfg.hidden_dim
        # adapters stay per type: input feature dimensions differ between types
        self.adapters = {
            t: Projection(self.params.create(f"adapt.{nt.name}.weight", (nt.feature_dim, d)),
                          self.params.create(f"adapt.{nt.name}.bias", (d,), init="zeros"))
            for t, nt in enumerate(schema.node_types)
        }
        self.layers = [HGTLayer(self.params, schema, cfg, i) for i in range(cfg.n_layers)]

    def adapt_input(self, features, node_type: int) -> Tensor:
        """H^(0) rows for one node type: the type's adapter applied to its raw features."""
        x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=self.params.dtype))
        expected = self.schema.node_types[node_type].feature_dim
        if x.ndim != 2 or x.shape[1] != expected:
            raise ShapeMismatch(f"features of '{self.schema.node_name(node_type)}' have shape {x.shape}, "
                                f"expected [n x {expected}]")
        return self.adapters[node_type](x)

    def forward(
        self,
        subgraph: SampledSubgraph,
        recorder: list[AttentionRecord] | None = None,
        rng: np.random.Generator | None = None,
        training: bool = False,
        inputs: dict[int, Tensor] | None = None,
    ) -> dict[int, Tensor]:
        """H^(L) per node type for every OS entry. ``inputs`` overrides H^(0)."""
        if inputs is None:
            H = {t: self.adapt_input(subgraph.features[t], t) for t in range(self.schema.num_node_types)}
        else:
            H = dict(inputs)
        for layer in self.layers:
            if layer.rte is not None:
                layer.rte.reset_cache()
            H = layer.forward(H, subgraph, recorder=recorder, rng=rng, training=training)
        return H

    # --- parameter accounting ---

    def layer_parameter_count(self) -> int:
        return self.params.count("layer")

    def parameter_count(self) -> int:
        return self.params.count()

    def expected_layer_parameter_count(self) -> int:
        return per_layer_parameter_count(self.schema.num_node_types, self.schema.num_edge_types,
                                         self.cfg.hidden_dim, self.cfg.n_heads, self.cfg.use_heter,
                                         self.cfg.use_rte) * self.cfg.n_layers


def per_layer_parameter_count(n_node_types: int, n_edge_types: int, d: int, h: int,
                              use_heter: bool = True, use_rte: bool = True) -> int:
    """|A|·3(d²+d) + |A|(d²+d) + |R|·2h(d/h)² + |meta| + (d²+d); −Heter collapses |A|, |R|, |meta| to 1."""
    a = n_node_types if use_heter else 1
    r = n_edge_types if use_heter else 1
    meta = n_edge_types if use_heter else 1
    dk = d // h
    total = a * 3 * (d * d + d) + a * (d * d + d) + r * 2 * h * dk * dk + meta
    if use_rte:
        total += d * d + d
    return total


ATTENTION_COLUMNS = ["layer", "relation", "tgt_type", "tgt_id", "tgt_time", "src_type", "src_id", "src_time"]


def attention_frame(subgraph: SampledSubgraph, records: list[AttentionRecord]) -> pd.DataFrame:
    """One row per (layer, edge): the edge's endpoints and its attention in every head."""
    schema = subgraph.schema
    frames = []
    for record in records:
        rel = record.rel
        src_rows = subgraph.entries[rel.src_type]
        tgt_rows = subgraph.entries[rel.tgt_type]
        frame = pd.DataFrame({
            "layer": record.layer,
            "relation": schema.relation_name(rel),
            "tgt_type": schema.node_name(rel.tgt_type),
            "tgt_id": [tgt_rows[i][0] for i in record.tgt.tolist()],
            "tgt_time": [tgt_rows[i][1] for i in record.tgt.tolist()],
            "src_type": schema.node_name(rel.src_type),
            "src_id": [src_rows[i][0] for i in record.src.tolist()],
            "src_time": [src_rows[i][1] for i in record.src.tolist()],
        })
        for head in range(record.attention.shape[1]):
            frame[f"head_{head}"] = record.attention[:, head]
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=ATTENTION_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def attention_summary(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean attention per head and edge count for every (layer, meta relation)."""
    heads = [c for c in frame.columns if c.startswith("head_")]
    if frame.empty:
        return pd.DataFrame(columns=["layer", "relation", "edges", *heads])
    grouped = frame.groupby(["layer", "relation"], sort=True)
    summary = grouped[heads].mean()
    summary.insert(0, "edges", grouped.size())
    return summary.reset_index()
