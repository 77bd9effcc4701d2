import numpy as np
import pytest

from config import HGTConfig, RunConfig, SamplerConfig, ScheduleConfig, SynthConfig, TaskSpec
from src.cli.synthetic import generate
from src.hetgraph import EdgeRecord, NodeRecord, NodeType, Schema, build_graph


def academic_schema(feature_dims=(3, 2, 2), cites: bool = False) -> Schema:
    """paper (event), author, venue; writes author->paper, published_in paper->venue."""
    nodes = [NodeType("paper", feature_dims[0], is_event=True),
             NodeType("author", feature_dims[1]),
             NodeType("venue", feature_dims[2])]
    edges = [{"name": "writes", "src": "author", "tgt": "paper"},
             {"name": "published_in", "src": "paper", "tgt": "venue"}]
    if cites:
        edges.append({"name": "cites", "src": "paper", "tgt": "paper"})
    return Schema.build(nodes, edges)


def make_graph(schema: Schema, papers: dict[int, int], authors: int = 0, venues: int = 0,
               edges: list[tuple] = (), features=None, self_loops: bool = False):
    """papers: id -> timestamp; edges: (edge type, src id, tgt id, timestamp)."""
    ends = {e.name: (schema.node_name(e.src), schema.node_name(e.tgt)) for e in schema.edge_types}
    nodes = [NodeRecord("paper", i, t) for i, t in sorted(papers.items())]
    nodes += [NodeRecord("author", i) for i in range(authors)]
    nodes += [NodeRecord("venue", i) for i in range(venues)]
    records = [EdgeRecord(et, ends[et][0], s, ends[et][1], t, ts) for et, s, t, ts in edges]
    return build_graph(schema, nodes, records, features=features, self_loops=self_loops)


def rel(schema: Schema, edge_type: str):
    return schema.meta_relation(schema.edge_type_id(edge_type))


@pytest.fixture
def schema():
    return academic_schema()


@pytest.fixture
def six_node_graph():
    """3 papers, 2 authors, 1 venue over 4 edge types (writes, published_in and their reverses)."""
    schema = academic_schema()
    rng = np.random.default_rng(7)
    features = {"paper": rng.normal(size=(3, 3)), "author": rng.normal(size=(2, 2)),
                "venue": rng.normal(size=(1, 2))}
    edges = [("writes", 0, 0, 1), ("writes", 0, 1, 2), ("writes", 1, 2, 3), ("writes", 1, 0, 1),
             ("published_in", 0, 0, 1), ("published_in", 1, 0, 2), ("published_in", 2, 0, 3)]
    return make_graph(schema, {0: 1, 1: 2, 2: 3}, authors=2, venues=1, edges=edges, features=features)


@pytest.fixture(scope="session")
def toy():
    return generate(SynthConfig.toy())


@pytest.fixture
def small_hgt():
    return HGTConfig(hidden_dim=8, n_heads=2, n_layers=2, dtype="float64")


@pytest.fixture
def small_run():
    return RunConfig(
        seed=3,
        sampler=SamplerConfig(n=4, depth=2),
        hgt=HGTConfig(hidden_dim=8, n_heads=2, n_layers=1, dtype="float64"),
        schedule=ScheduleConfig(base_lr=1e-2, min_lr=1e-4, epochs=3),
        task=TaskSpec(kind="node-class", target_type="paper", batch_size=8, batches_per_epoch=2),
    )
