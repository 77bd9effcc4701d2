from .budget import (
    Budget,
    EdgeKey,
    EntryKey,
    Expansion,
    add_in_budget,
    assign_timestamp,
    draw_categorical,
    expand_excluded,
    probability_vector,
    sampling_prob,
)
from .hgsampling import HGSampler, Seed, hg_sample
from .subgraph import EdgeBlock, SampledSubgraph

__all__ = [
    "Budget",
    "EdgeBlock",
    "EdgeKey",
    "EntryKey",
    "Expansion",
    "HGSampler",
    "SampledSubgraph",
    "Seed",
    "add_in_budget",
    "assign_timestamp",
    "draw_categorical",
    "expand_excluded",
    "hg_sample",
    "probability_vector",
    "sampling_prob",
]
