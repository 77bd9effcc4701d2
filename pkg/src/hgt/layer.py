"""One HGT layer: heterogeneous mutual attention, message passing and target-specific aggregation.

Parameters are keyed by node type (K/Q/M/A-Linear), edge type (W_ATT, W_MSG)
and meta relation (μ). With ``use_heter`` off every key collapses to
``shared`` so all types and relations alias one parameter set.

The batched :meth:`HGTLayer.forward` computes, per meta relation block,

    K-Linear(H[s] + RTE(ΔT)) = K-Linear(H[s]) + RTE(ΔT)·W_K

which lets the node-wise projections run once per node and the RTE term once
per distinct ΔT. The per-edge functions at the bottom of this module spell the
same computation out for single sources and targets.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from config import HGTConfig
from exception import NoNeighbors, ShapeMismatch, UnknownRelation
from src.hetgraph import MetaRelation, Schema
from src.sampler import SampledSubgraph
from src.tensor import ParamStore, Tensor, ops

from .rte import RelativeTemporalEncoding

SHARED = "shared"


@dataclass(frozen=True)
class Projection:
    weight: Tensor
    bias: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


@dataclass
class AttentionRecord:
    layer: int
    rel: MetaRelation
    src: np.ndarray
    tgt: np.ndarray
    attention: np.ndarray


class HGTLayer:
    def __init__(self, params: ParamStore, schema: Schema, cfg: HGTConfig, index: int):
        self.schema = schema
        self.cfg = cfg
        self.index = index
        self.prefix = f"layer{index}"
        d, h, dk = cfg.hidden_dim, cfg.n_heads, cfg.head_dim

        def projection(kind: str, node_type: int) -> Projection:
            key = self.type_key(node_type)
            return Projection(params.create(f"{self.prefix}.{kind}.{key}.weight", (d, d)),
                              params.create(f"{self.prefix}.{kind}.{key}.bias", (d,), init="zeros"))

        types = range(schema.num_node_types)
        self.k_linear = {t: projection("k_linear", t) for t in types}
        self.q_linear = {t: projection("q_linear", t) for t in types}
        self.m_linear = {t: projection("m_linear", t) for t in types}
        self.a_linear = {t: projection("a_linear", t) for t in types}
        self.w_att = {}
        self.w_msg = {}
        self.mu = {}
        for rel in schema.meta_relations():
            edge_key = self.edge_key(rel.edge_type)
            self.w_att[rel.edge_type] = params.create(f"{self.prefix}.w_att.{edge_key}", (h, dk, dk))
            self.w_msg[rel.edge_type] = params.create(f"{self.prefix}.w_msg.{edge_key}", (h, dk, dk))
            self.mu[rel] = params.create(f"{self.prefix}.mu.{self.relation_key(rel)}", (1,), init="ones")
        self.rte = RelativeTemporalEncoding(params, d, f"{self.prefix}.t_linear") if cfg.use_rte else None
        self.activation = ops.ACTIVATIONS[cfg.activation]
        self.scale = 1.0 / math.sqrt(d)

    # --- parameter keys ---

    def type_key(self, node_type: int) -> str:
        return self.schema.node_name(node_type) if self.cfg.use_heter else SHARED

    def edge_key(self, edge_type: int) -> str:
        return self.schema.edge_name(edge_type) if self.cfg.use_heter else SHARED

    def relation_key(self, rel: MetaRelation) -> str:
        if not self.cfg.use_heter:
            return SHARED
        return self.schema.relation_name(rel)

    def check_relation(self, rel: MetaRelation) -> MetaRelation:
        rel = MetaRelation(*rel)
        if rel not in self.mu:
            raise UnknownRelation(f"no parameters for meta relation {tuple(rel)}")
        return rel

    # --- batched forward ---

    def forward(
        self,
        H: dict[int, Tensor],
        graph: SampledSubgraph,
        recorder: list[AttentionRecord] | None = None,
        rng: np.random.Generator | None = None,
        training: bool = False,
    ) -> dict[int, Tensor]:
        d, h, dk = self.cfg.hidden_dim, self.cfg.n_heads, self.cfg.head_dim
        K = {t: self.k_linear[t](x) for t, x in H.items()}
        Q = {t: self.q_linear[t](x) for t, x in H.items()}
        M = {t: self.m_linear[t](x) for t, x in H.items()}
        times = {t: graph.times(t) for t in H}

        scores_in = defaultdict(list)
        messages_in = defaultdict(list)
        targets_in = defaultdict(list)
        blocks_in = defaultdict(list)
        for block in graph.blocks:
            if len(block) == 0:
                continue
            rel = self.check_relation(block.rel)
            E = len(block)
            k_e = ops.gather_rows(K[rel.src_type], block.src)
            m_e = ops.gather_rows(M[rel.src_type], block.src)
            if self.rte is not None:
                delta = times[rel.tgt_type][block.tgt] - times[rel.src_type][block.src]
                table, inverse = self.rte.table(delta)
                k_e = ops.add(k_e, ops.gather_rows(ops.matmul(table, self.k_linear[rel.src_type].weight), inverse))
                if self.cfg.rte_on_messages:
                    m_e = ops.add(m_e, ops.gather_rows(ops.matmul(table, self.m_linear[rel.src_type].weight), inverse))
            q_e = ops.gather_rows(Q[rel.tgt_type], block.tgt)

            k_att = ops.batched_matmul(ops.reshape(k_e, (E, h, dk)), self.w_att[rel.edge_type])
            scores = ops.reduce_sum(ops.mul(k_att, ops.reshape(q_e, (E, h, dk))), axis=2)
            scores = ops.mul(scores, ops.mul(self.mu[rel], self.scale))
            msg = ops.batched_matmul(ops.reshape(m_e, (E, h, dk)), self.w_msg[rel.edge_type])

            scores_in[rel.tgt_type].append(scores)
            messages_in[rel.tgt_type].append(msg)
            targets_in[rel.tgt_type].append(block.tgt)
            blocks_in[rel.tgt_type].append(block)

        out = dict(H)
        for tgt_type, score_list in scores_in.items():
            n = H[tgt_type].shape[0]
            groups = np.concatenate(targets_in[tgt_type])
            attn = ops.softmax_rows(ops.concat(score_list, axis=0), groups=groups)
            msgs = ops.concat(messages_in[tgt_type], axis=0)
            E = groups.shape[0]
            weighted = ops.mul(msgs, ops.reshape(attn, (E, h, 1)))
            summed = ops.segment_sum(ops.reshape(weighted, (E, d)), groups, n)
            update = self.a_linear[tgt_type](self.activation(summed))
            if self.cfg.layer_norm:
                update = ops.layer_norm(update)
            if training and self.cfg.dropout > 0.0 and rng is not None:
                update = ops.dropout(update, self.cfg.dropout, rng)
            has_neighbors = (np.bincount(groups, minlength=n) > 0).astype(update.dtype).reshape(n, 1)
            out[tgt_type] = ops.add(H[tgt_type], ops.mul(update, Tensor(has_neighbors)))

            if recorder is not None:
                offset = 0
                for block in blocks_in[tgt_type]:
                    size = len(block)
                    recorder.append(AttentionRecord(self.index, block.rel, block.src, block.tgt,
                                                    attn.data[offset:offset + size].copy()))
                    offset += size
        return out


# --- per-edge formulation ---

def _row(x: Tensor) -> Tensor:
    return ops.reshape(x, (1, x.shape[-1])) if x.ndim == 1 else x


def att_head_scores(s_aug: Tensor, t_repr: Tensor, rel: MetaRelation, layer: HGTLayer) -> Tensor:
    """Per-head score K^i · W_ATT · Q^iᵀ · μ / √d for one (source, target) pair; shape [h]."""
    rel = layer.check_relation(rel)
    h, dk = layer.cfg.n_heads, layer.cfg.head_dim
    k = layer.k_linear[rel.src_type](_row(s_aug))
    q = layer.q_linear[rel.tgt_type](_row(t_repr))
    k_att = ops.batched_matmul(ops.reshape(k, (1, h, dk)), layer.w_att[rel.edge_type])
    scores = ops.reduce_sum(ops.mul(k_att, ops.reshape(q, (1, h, dk))), axis=2)
    scores = ops.mul(scores, ops.mul(layer.mu[rel], layer.scale))
    return ops.reshape(scores, (h,))


def hetero_attention(neighbor_scores: list[Tensor]) -> Tensor:
    """Softmax per head across all neighbours of one target, every relation pooled; shape [N×h]."""
    if not neighbor_scores:
        raise NoNeighbors("target has no neighbours to attend to")
    stacked = ops.concat([_row(s) for s in neighbor_scores], axis=0)
    return ops.softmax_rows(stacked)


def message(s_aug: Tensor, rel: MetaRelation, layer: HGTLayer) -> Tensor:
    """Concatenated heads M-Linear^i(ŝ) · W_MSG^i; shape [d]."""
    rel = layer.check_relation(rel)
    d, h, dk = layer.cfg.hidden_dim, layer.cfg.n_heads, layer.cfg.head_dim
    m = layer.m_linear[rel.src_type](_row(s_aug))
    msg = ops.batched_matmul(ops.reshape(m, (1, h, dk)), layer.w_msg[rel.edge_type])
    return ops.reshape(msg, (d,))


def aggregate(attn: Tensor, messages: Tensor, h_prev: Tensor, tgt_type: int, layer: HGTLayer) -> Tensor:
    """A-Linear(σ(Σ attn ⊙ messages)) + H_prev for one target; shape [d]."""
    d, h, dk = layer.cfg.hidden_dim, layer.cfg.n_heads, layer.cfg.head_dim
    messages = _row(messages)
    n = messages.shape[0]
    if attn.shape != (n, h) or messages.shape != (n, d) or h_prev.shape[-1] != d:
        raise ShapeMismatch(f"aggregate: attention {attn.shape}, messages {messages.shape}, "
                            f"residual {h_prev.shape} for d={d}, h={h}")
    weighted = ops.mul(ops.reshape(messages, (n, h, dk)), ops.reshape(attn, (n, h, 1)))
    summed = ops.reduce_sum(ops.reshape(weighted, (n, d)), axis=0)
    update = layer.a_linear[tgt_type](ops.reshape(layer.activation(summed), (1, d)))
    if layer.cfg.layer_norm:
        update = ops.layer_norm(update)
    return ops.add(ops.reshape(h_prev, (d,)), ops.reshape(update, (d,)))
