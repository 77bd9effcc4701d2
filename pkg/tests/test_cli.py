import json

import pandas as pd
import pytest

from config import HGTConfig, RunConfig, SamplerConfig, ScheduleConfig, SynthConfig, TaskSpec
from src.cli import build_parser, generate, main, majority_vote_accuracy

TOY_COUNTS = {"paper": 40, "author": 25, "venue": 5, "field": 10, "institute": 3}
GRAPH_FILES = ["schema.json", "nodes.tsv", "edges.tsv", "labels.tsv",
               *(f"features.{t}.f32" for t in TOY_COUNTS)]


@pytest.fixture(autouse=True)
def _no_data_dir(monkeypatch):
    monkeypatch.delenv("HGT_DATA_DIR", raising=False)


def run_cli(capsys, *argv) -> tuple[int, dict | None]:
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def toy_dir(tmp_path, capsys):
    code, _ = run_cli(capsys, "synth", "--toy", "--out", tmp_path / "toy")
    assert code == 0
    return tmp_path / "toy"


@pytest.fixture
def run_json(tmp_path):
    run = RunConfig(
        sampler=SamplerConfig(n=4, depth=2),
        hgt=HGTConfig(hidden_dim=8, n_heads=2, n_layers=1),
        schedule=ScheduleConfig(base_lr=1e-2, min_lr=1e-4, epochs=2),
        task=TaskSpec(batch_size=8, batches_per_epoch=2, train_end=50, valid_end=75),
    )
    path = tmp_path / "run.json"
    path.write_text(run.to_json(), encoding="utf-8")
    return path


def test_synth_toy(tmp_path, capsys):
    code, payload = run_cli(capsys, "synth", "--toy", "--out", tmp_path / "a", "--seed", 4)
    assert code == 0
    assert payload["nodes"] == TOY_COUNTS
    assert payload["seed"] == 4
    run_cli(capsys, "synth", "--toy", "--out", tmp_path / "b", "--seed", 4)
    for name in GRAPH_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ingest_is_byte_deterministic(tmp_path, capsys, toy_dir):
    code, payload = run_cli(capsys, "ingest", "--graph", toy_dir, "--out", tmp_path / "b1")
    assert code == 0
    assert payload["nodes"] == TOY_COUNTS
    assert len(payload["schema_hash"]) == 64
    run_cli(capsys, "ingest", "--graph", toy_dir, "--out", tmp_path / "b2")
    for name in ("graph.json", "graph.bin", "labels.tsv"):
        assert (tmp_path / "b1" / name).read_bytes() == (tmp_path / "b2" / name).read_bytes()


def test_ingest_without_features_is_a_data_error(capsys, toy_dir):
    (toy_dir / "features.author.f32").unlink()
    assert main(["ingest", "--graph", str(toy_dir)]) == 3
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "MissingFeatures: node type 'author'" in captured.err


def test_missing_graph_directory(tmp_path, capsys):
    code, _ = run_cli(capsys, "train", "--graph", tmp_path / "nope", "--out", tmp_path / "out")
    assert code == 2


def test_planted_classes_are_recoverable():
    strong = generate(SynthConfig(correlation=1.0, seed=2))
    assert majority_vote_accuracy(strong.graph, strong.labels) > 0.9
    noise = generate(SynthConfig(correlation=0.0, seed=2))
    assert abs(majority_vote_accuracy(noise.graph, noise.labels) - 0.2) < 0.06


def test_sample(tmp_path, capsys, toy_dir):
    seeds = tmp_path / "seeds.tsv"
    seeds.write_text("type\tlocal_id\ttimestamp\npaper\t0\t\nauthor\t1\t50\n", encoding="utf-8")
    out = tmp_path / "sub.json"
    code, payload = run_cli(capsys, "sample", "--graph", toy_dir, "--seeds", seeds, "--n", 3, "--depth", 2,
                            "--rng-seed", 11, "--out", out)
    assert code == 0
    dumped = json.loads(out.read_text(encoding="utf-8"))
    assert dumped["rng_seed"] == 11
    assert dumped["config"]["n"] == 3
    assert len(dumped["nodes"]) == payload["nodes"]
    assert ["author", 1, 50] in dumped["seeds"]


def test_missing_synth_config_is_a_config_error(tmp_path, capsys):
    code, payload = run_cli(capsys, "synth", "--synth-config", tmp_path / "absent.json", "--out", tmp_path / "g")
    assert (code, payload) == (2, None)
    assert "config file not found" in capsys.readouterr().err


def test_seed_file_errors(tmp_path, capsys, toy_dir):
    seeds = tmp_path / "seeds.tsv"
    seeds.write_text("type\tlocal_id\ttimestamp\npaper\t0\t\npaper\tseven\t\n", encoding="utf-8")
    argv = ("sample", "--graph", toy_dir, "--seeds", seeds, "--out", tmp_path / "sub.json")
    code, payload = run_cli(capsys, *argv)
    assert (code, payload) == (3, None)
    assert f"{seeds}:3: seed id 'seven'" in capsys.readouterr().err
    seeds.unlink()
    code, _ = run_cli(capsys, *argv)
    assert code == 2


@pytest.mark.parametrize("node_types, edge_types", [(2, 2), (5, 10), (5, 32)])
def test_param_count_matches_the_closed_form(capsys, node_types, edge_types):
    code, payload = run_cli(capsys, "param-count", "--node-types", node_types, "--edge-types", edge_types,
                            "--hidden", 256, "--heads", 8)
    assert code == 0
    assert (payload["node_types"], payload["edge_types"]) == (node_types, edge_types)
    assert payload["full"]["matches"] and payload["no_heter"]["matches"]
    assert payload["no_heter"]["layer_parameters"] < payload["full"]["layer_parameters"]
    if (node_types, edge_types) == (2, 2):
        assert payload["full"]["layer_parameters"] == 3 * 624898


def test_param_count_rejects_odd_edge_counts(capsys):
    code, _ = run_cli(capsys, "param-count", "--node-types", 3, "--edge-types", 3)
    assert code == 2


def test_unknown_flag_and_help(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--bogus"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["train", "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--graph", "--task", "--config", "--out", "--seed", "--epochs", "--workers", "--self-loops"):
        assert flag in text
    commands = build_parser()._subparsers._group_actions[0].choices
    assert set(commands) == {"ingest", "synth", "sample", "train", "ablate", "eval", "export-attention",
                             "param-count"}


def test_train_eval_and_export(tmp_path, capsys, toy_dir, run_json):
    out = tmp_path / "run"
    code, trained = run_cli(capsys, "train", "--graph", toy_dir, "--config", run_json, "--out", out, "--seed", 3)
    assert code == 0
    assert trained["epochs"] == 2 and trained["seed"] == 3
    for name in ("history.csv", "run.json", "checkpoint/params.json", "checkpoint/params.bin"):
        assert (out / name).exists()

    code, metrics = run_cli(capsys, "eval", "--ckpt", out, "--split", "test")
    assert code == 0
    assert metrics["config_hash"] == trained["config_hash"]
    assert {"ndcg", "mrr", "accuracy", "n_queries"} <= set(metrics)
    first = (out / "eval_test.json").read_text(encoding="utf-8")
    run_cli(capsys, "eval", "--ckpt", out, "--split", "test")
    assert (out / "eval_test.json").read_text(encoding="utf-8") == first
    per_query = pd.read_csv(out / "eval_test.csv")
    assert len(per_query) == metrics["n_queries"]

    code, exported = run_cli(capsys, "export-attention", "--ckpt", out, "--split", "train", "--batches", 2,
                             "--out", tmp_path / "attn")
    assert code == 0
    edges = pd.read_csv(tmp_path / "attn" / "attention.csv")
    assert len(edges) == exported["edges"] > 0
    assert set(edges["batch"]) <= {0, 1}
    summary = pd.read_csv(tmp_path / "attn" / "attention_summary.csv")
    assert summary["edges"].sum() == len(edges)


def test_link_prediction_run(tmp_path, capsys, toy_dir, run_json):
    out = tmp_path / "link"
    code, trained = run_cli(capsys, "train", "--graph", toy_dir, "--config", run_json, "--task", "link",
                            "--epochs", 1, "--out", out)
    assert code == 0 and trained["epochs"] == 1
    code, metrics = run_cli(capsys, "eval", "--ckpt", out, "--split", "valid")
    assert code == 0
    assert metrics["task"] == "link"
    assert 0.0 < metrics["mrr"] <= 1.0


def test_same_seed_same_evaluation(tmp_path, capsys, toy_dir, run_json):
    for name in ("a", "b"):
        run_cli(capsys, "train", "--graph", toy_dir, "--config", run_json, "--out", tmp_path / name, "--seed", 9)
        run_cli(capsys, "eval", "--ckpt", tmp_path / name, "--split", "valid")
    a = json.loads((tmp_path / "a" / "eval_valid.json").read_text(encoding="utf-8"))
    b = json.loads((tmp_path / "b" / "eval_valid.json").read_text(encoding="utf-8"))
    assert a == b
