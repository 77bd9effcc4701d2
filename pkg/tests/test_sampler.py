import json
from collections import Counter, defaultdict

import numpy as np
import pytest

from config import SamplerConfig, make_rng
from conftest import academic_schema, make_graph
from exception import EmptyBudget, EmptySeedSet, MissingTimestamp
from src.hetgraph import EdgeRecord, NodeRecord, NodeType, Schema, build_graph, iter_stored_edges
from src.sampler import (
    Budget,
    HGSampler,
    Seed,
    add_in_budget,
    assign_timestamp,
    draw_categorical,
    probability_vector,
    sampling_prob,
)
from src.sampler.budget import draw_without_replacement


@pytest.fixture
def star(schema):
    """Paper 0 (2010) written by authors 0..3 and published in venue 0."""
    edges = [("writes", a, 0, 2010) for a in range(4)] + [("published_in", 0, 0, 2010)]
    return make_graph(schema, {0: 2010}, authors=4, venues=1, edges=edges)


def test_add_in_budget_spreads_normalised_degree(star):
    budget = add_in_budget(Budget(), (0, 0, 2010), star, sampled={(0, 0, 2010)})
    assert budget.for_type(1) == {(a, 2010): 0.25 for a in range(4)}
    assert budget.for_type(2) == {(0, 2010): 1.0}


def test_sampled_neighbours_do_not_enter_the_budget(star):
    sampled = {(0, 0, 2010), (1, 2, 2010)}
    budget = add_in_budget(Budget(), (0, 0, 2010), star, sampled)
    assert (2, 2010) not in budget.for_type(1)
    assert budget.for_type(1)[(0, 2010)] == 0.25


def test_budget_accumulates_across_targets(schema):
    edges = [("writes", 0, 0, 1), ("writes", 0, 1, 2), ("writes", 1, 1, 2)]
    graph = make_graph(schema, {0: 5, 1: 5}, authors=2, edges=edges)
    budget = Budget()
    add_in_budget(budget, (0, 0, 5), graph, set())
    add_in_budget(budget, (0, 1, 5), graph, set())
    assert budget.for_type(1) == {(0, 5): 1.5, (1, 5): 0.5}


def test_target_without_timestamp(star):
    with pytest.raises(MissingTimestamp):
        add_in_budget(Budget(), (1, 0, None), star, set())


def test_sampling_prob_squares_the_budget():
    assert sampling_prob({(0, 1): 1.0, (1, 1): 1.0}) == {(0, 1): 0.5, (1, 1): 0.5}
    probs = sampling_prob({(1, 0): 1.0, (0, 0): 2.0})
    assert list(probs) == [(0, 0), (1, 0)]
    assert probs[(0, 0)] == pytest.approx(0.8)
    assert probs[(1, 0)] == pytest.approx(0.2)


def test_sampling_prob_empty():
    with pytest.raises(EmptyBudget):
        sampling_prob({})
    with pytest.raises(EmptyBudget):
        probability_vector(np.zeros(3))


def test_assign_timestamp(star):
    assert assign_timestamp(1, 3, 1999, star) == 1999
    assert assign_timestamp(0, 0, 1999, star) == 2010


def test_plain_node_appears_once_per_inherited_time(schema):
    edges = [("published_in", 0, 0, 2000), ("published_in", 1, 0, 2019)]
    graph = make_graph(schema, {0: 2000, 1: 2019}, venues=1, edges=edges)
    sub = HGSampler(graph, SamplerConfig(n=2, depth=1)).sample([Seed(0, 0), Seed(0, 1)])
    assert sorted(sub.entries[2]) == [(0, 2000), (0, 2019)]


def test_star_subgraph(star):
    sub = HGSampler(star, SamplerConfig(n=2, depth=1)).sample([Seed(0, 0)], rng_seed=1)
    assert sub.num_nodes(0) == 1
    assert sub.num_nodes(1) == 2
    # venue competes in its own type bucket
    assert sub.num_nodes(2) == 1
    writes = [e for e in sub.edge_list() if e[0] in (0, 2)]
    assert len(writes) == 4


def test_sampling_is_deterministic_per_seed(toy):
    sampler = HGSampler(toy.graph, SamplerConfig(n=4, depth=2))
    seeds = [Seed(0, i) for i in range(5)]
    a = sampler.sample(seeds, rng_seed=42).to_dict()
    b = sampler.sample(seeds, rng_seed=42).to_dict()
    assert a == b
    assert a["rng_seed"] == 42


def test_event_seed_keeps_its_own_timestamp(star):
    sub = HGSampler(star, SamplerConfig(n=1, depth=1)).sample([Seed(0, 0, time=999)])
    assert sub.seeds == [(0, 0, 2010)]


def test_seed_errors(star):
    sampler = HGSampler(star, SamplerConfig())
    with pytest.raises(EmptySeedSet):
        sampler.sample([])
    with pytest.raises(MissingTimestamp):
        sampler.sample([Seed(1, 0)])
    sub = sampler.sample([Seed(1, 0, time=2010)])
    assert (0, 0, 2010) in sub


def _random_mixed_graph(seed: int):
    schema = academic_schema(cites=True)
    rng = np.random.default_rng(seed)
    n_papers, n_authors, n_venues = 12, 8, 3
    papers = {i: int(t) for i, t in enumerate(rng.integers(0, 4, size=n_papers))}
    edges = []
    for p in range(n_papers):
        for a in rng.choice(n_authors, size=rng.integers(0, 3), replace=False):
            edges.append(("writes", int(a), p, papers[p]))
        if rng.random() < 0.7:
            edges.append(("published_in", p, int(rng.integers(n_venues)), papers[p]))
        for q in rng.choice(n_papers, size=rng.integers(0, 2), replace=False):
            edges.append(("cites", p, int(q), papers[p]))
    return make_graph(schema, papers, n_authors, n_venues, edges)


def _reachable(graph, seeds):
    seen = set(seeds)
    frontier = list(seeds)
    while frontier:
        nxt = []
        for t, i, ts in frontier:
            for r in graph.schema.relations_into(t):
                for s, _ in graph.neighbors((t, i), r):
                    key = (r.src_type, s, assign_timestamp(r.src_type, s, ts, graph))
                    if key not in seen:
                        seen.add(key)
                        nxt.append(key)
        frontier = nxt
    return seen


def _induced(graph, keys):
    """Stored edges between sampled entries; two plain entries must share a timestamp."""
    times = defaultdict(list)
    for t, i, ts in keys:
        times[(t, i)].append(ts)
    edges = Counter()
    for et, s, t, edge_time in iter_stored_edges(graph):
        rel = graph.schema.meta_relation(et)
        for s_time in times.get((rel.src_type, s), []):
            for t_time in times.get((rel.tgt_type, t), []):
                if graph.is_event(rel.src_type) or graph.is_event(rel.tgt_type) or s_time == t_time:
                    edges[(et, (rel.src_type, s, s_time), (rel.tgt_type, t, t_time), edge_time)] += 1
    return edges


@pytest.mark.parametrize("graph_seed", range(20))
def test_unbounded_sampling_matches_breadth_first_search(graph_seed):
    graph = _random_mixed_graph(graph_seed)
    seeds = [Seed(0, 0), Seed(1, 0, time=2)]
    expected = _reachable(graph, {(0, 0, graph.node_time(0, 0)), (1, 0, 2)})
    cfg = SamplerConfig(n=1000, depth=sum(graph.num_nodes) * 5)
    sub = HGSampler(graph, cfg).sample(seeds, rng_seed=graph_seed)
    assert sub.keys() == expected
    assert Counter(sub.edge_list()) == _induced(graph, expected)


def _assert_mirror_closed(sub):
    edges = Counter(sub.edge_list())
    for (et, src, tgt, ts), count in edges.items():
        assert edges[(sub.schema.inverse(et), tgt, src, ts)] == count


def test_event_source_of_a_plain_target_keeps_its_mirror(schema):
    edges = [("published_in", 0, 0, 2005), ("published_in", 1, 0, 2010)]
    graph = make_graph(schema, {0: 2005, 1: 2010}, venues=1, edges=edges)
    sub = HGSampler(graph, SamplerConfig(n=50, depth=2)).sample([Seed(0, 0)])
    assert sub.keys() == {(0, 0, 2005), (2, 0, 2005), (0, 1, 2010)}
    _assert_mirror_closed(sub)
    published, reverse = schema.edge_type_id("published_in"), schema.edge_type_id("published_in~rev")
    listed = sub.edge_list()
    assert (reverse, (2, 0, 2005), (0, 1, 2010), 2010) in listed
    assert sum(e[0] == published for e in listed) == sum(e[0] == reverse for e in listed) == 2


@pytest.mark.parametrize("rng_seed", [0, 7, 31])
def test_toy_subgraphs_are_closed_under_mirrors(toy, rng_seed):
    seeds = [Seed(0, i) for i in range(4)] + [Seed(1, 2, time=60)]
    sub = HGSampler(toy.graph, SamplerConfig(n=4, depth=3)).sample(seeds, rng_seed=rng_seed)
    _assert_mirror_closed(sub)


def test_every_type_gets_its_own_quota():
    nodes = [NodeType("A", 1), NodeType("B", 1), NodeType("C", 1)]
    schema = Schema.build(nodes, [{"name": "cites", "src": "A", "tgt": "A"},
                                  {"name": "to_b", "src": "A", "tgt": "B"},
                                  {"name": "to_c", "src": "A", "tgt": "C"}])
    records = [NodeRecord("A", i) for i in range(200)]
    records += [NodeRecord("B", i) for i in range(20)]
    records += [NodeRecord("C", i) for i in range(2)]
    edges = []
    for i in range(5):
        edges += [EdgeRecord("cites", "A", i, "A", 5 + 4 * i + k, 0) for k in range(6)]
        edges += [EdgeRecord("to_b", "A", i, "B", 3 * i + k, 0) for k in range(6)]
        edges.append(EdgeRecord("to_c", "A", i, "C", i % 2, 0))
    graph = build_graph(schema, records, edges)
    seeds = [Seed(0, i, time=0) for i in range(5)]
    sub = HGSampler(graph, SamplerConfig(n=15, depth=1)).sample(seeds, rng_seed=9)
    assert sub.num_nodes(0) == 5 + 15
    assert sub.num_nodes(1) == 15
    assert sub.num_nodes(2) == 2


def _skewed_graph():
    """2000 A, 200 B and 20 C plain nodes; every A links to four A, three B and three C."""
    nodes = [NodeType("A", 1), NodeType("B", 1), NodeType("C", 1)]
    schema = Schema.build(nodes, [{"name": "aa", "src": "A", "tgt": "A"},
                                  {"name": "ab", "src": "A", "tgt": "B"},
                                  {"name": "ac", "src": "A", "tgt": "C"}])
    records = [NodeRecord("A", i) for i in range(2000)]
    records += [NodeRecord("B", i) for i in range(200)]
    records += [NodeRecord("C", i) for i in range(20)]
    edges = []
    for i in range(2000):
        edges += [EdgeRecord("aa", "A", i, "A", (i + 1 + 97 * k) % 2000, 0) for k in range(4)]
        edges += [EdgeRecord("ab", "A", i, "B", (i + 50 * k) % 200, 0) for k in range(3)]
        edges += [EdgeRecord("ac", "A", i, "C", (i + 7 * k) % 20, 0) for k in range(3)]
    return build_graph(schema, records, edges)


def _run_skewed(rounds: list):
    def on_round(round_id, budget, sampled):
        assert budget.keys().isdisjoint(sampled)
        counts = Counter(t for t, _, _ in sampled)
        snapshot = {t: dict(budget.for_type(t)) for t in budget.types()}
        rounds.append((round_id, counts, snapshot))

    seeds = [Seed(0, i, time=0) for i in range(5)]
    return HGSampler(_skewed_graph(), SamplerConfig(n=5, depth=3)).sample(seeds, rng_seed=17, on_round=on_round)


def test_skewed_types_each_gain_n_per_round():
    rounds = []
    sub = _run_skewed(rounds)
    assert [r[0] for r in rounds] == [0, 1, 2]
    for round_id, counts, _ in rounds:
        new = round_id + 1
        assert counts == {0: 5 + 5 * new, 1: 5 * new, 2: 5 * new}
    assert (sub.num_nodes(0), sub.num_nodes(1), sub.num_nodes(2)) == (20, 15, 15)


def test_single_draws_from_a_live_budget_follow_the_squared_law():
    rounds = []
    _run_skewed(rounds)
    budgets = [bucket for _, _, snapshot in rounds for bucket in snapshot.values() if len(bucket) > 1]
    bucket = min(budgets, key=len)
    keys = sorted(bucket)
    values = np.array([bucket[k] for k in keys], dtype=np.float64)
    probs = values ** 2 / np.sum(values ** 2)
    rng = make_rng(99)
    n = 100_000
    index = {k: i for i, k in enumerate(keys)}
    hits = np.zeros(len(keys))
    for _ in range(n):
        hits[index[draw_without_replacement(keys, values, 1, rng)[0]]] += 1
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(hits / n - probs) <= 3 * se)


def test_draws_follow_the_squared_budget_law():
    probs = np.array(list(sampling_prob({(i, 0): float(i + 1) for i in range(4)}).values()))
    np.testing.assert_allclose(probs, np.array([1, 4, 9, 16]) / 30)
    n = 100_000
    draws = draw_categorical(probs, make_rng(2024), size=n)
    freq = np.bincount(draws, minlength=4) / n
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(freq - probs) <= 4 * se)


def test_expansion_log_inherits_timestamps(toy):
    graph = toy.graph
    sub = HGSampler(graph, SamplerConfig(n=5, depth=3)).sample([Seed(0, i) for i in range(3)], rng_seed=5)
    assert sub.expansion_log
    for e in sub.expansion_log:
        child_type, child_id, child_time = e.child
        if graph.is_event(child_type):
            assert child_time == graph.node_time(child_type, child_id)
        else:
            assert child_time == e.parent[2]


def test_excluded_label_edge_is_invisible(schema):
    edges = [("writes", 0, 0, 2010), ("writes", 1, 0, 2010)]
    graph = make_graph(schema, {0: 2010}, authors=2, edges=edges)
    writes = schema.edge_type_id("writes")
    seed = Seed(0, 0, exclusions=((writes, 0, 0),))
    sub = HGSampler(graph, SamplerConfig(n=10, depth=2)).sample([seed])
    assert (1, 0, 2010) not in sub
    assert (1, 1, 2010) in sub
    assert all(e[1][:2] != (1, 0) and e[2][:2] != (1, 0) for e in sub.edge_list())


def test_traversed_edges_stay_inside_the_sample(toy):
    seeds = [Seed(0, i) for i in range(4)]
    induced = HGSampler(toy.graph, SamplerConfig(n=3, depth=2)).sample(seeds, rng_seed=8)
    traversed = HGSampler(toy.graph, SamplerConfig(n=3, depth=2, reconstruct="traversed")).sample(seeds, rng_seed=8)
    assert traversed.keys() == induced.keys()
    keys = traversed.keys()
    for _, src, tgt, _ in traversed.edge_list():
        assert src in keys and tgt in keys
    assert traversed.num_edges > 0


def test_subgraph_json_dump(tmp_path, toy):
    sub = HGSampler(toy.graph, SamplerConfig(n=2, depth=1)).sample([Seed(0, 1)], rng_seed=3)
    path = sub.to_json(tmp_path / "sub.json", extra={"config": {"n": 2}})
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["config"] == {"n": 2}
    assert payload["seeds"] == [["paper", 1, toy.graph.node_time(0, 1)]]
    assert len(payload["nodes"]) == sub.total_nodes
    assert len(payload["edges"]) == sub.num_edges


def test_features_follow_entry_order(toy):
    sub = HGSampler(toy.graph, SamplerConfig(n=3, depth=2)).sample([Seed(0, 0)], rng_seed=0)
    for t, rows in sub.entries.items():
        ids = [i for i, _ in rows]
        np.testing.assert_array_equal(sub.features[t], toy.graph.features[t][ids])
