"""Command-line entry point.

Every subcommand prints one JSON document on stdout (sorted keys, UTF-8,
newline-terminated) and logs to stderr. Failures exit with the error's code:
2 configuration, 3 data, 4 numeric.
"""

from __future__ import annotations

import argparse
import json
import math
import shutil
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from config import RunConfig, SamplerConfig, Settings, SynthConfig, derive_seed, make_rng
from exception import ConfigError, HGTEngineException, IngestError, SchemaMismatch
from logger.custom_logger import CustomLogger
from src.hetgraph import NodeType, Schema, load_flat_files, load_graph, save_bundle
from src.hgt import HGTModel, attention_frame, attention_summary, per_layer_parameter_count
from src.sampler import HGSampler, Seed
from src.tasks import make_task
from src.train import Trainer, load_checkpoint, run_ablation

from .synthetic import generate

logger = CustomLogger().get_logger(__file__)

LABELS_FILE = "labels.tsv"


def emit(payload: dict, path: Path | None = None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    sys.stdout.flush()


def _graph_dir(value: str | None) -> Path:
    path = Settings.from_env().resolve_graph_dir(value)
    if path is None:
        raise ConfigError("no graph directory given (use --graph or set HGT_DATA_DIR)")
    if not path.is_dir():
        raise ConfigError(f"graph directory not found: {path}")
    return path


def _run_config(args) -> RunConfig:
    run = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    if getattr(args, "task", None):
        updates["task"] = run.task.model_copy(update={"kind": args.task})
    if getattr(args, "epochs", None) is not None:
        updates["schedule"] = run.schedule.model_copy(update={"epochs": args.epochs})
    if getattr(args, "self_loops", False):
        updates["hgt"] = run.hgt.model_copy(update={"self_loops": True})
    return run.with_updates(**updates) if updates else run


# --- subcommands ---

def cmd_ingest(args) -> int:
    src = _graph_dir(args.graph)
    out = Path(args.out) if args.out else src
    graph = load_flat_files(src, self_loops=args.self_loops)
    save_bundle(graph, out)
    if out != src and (src / LABELS_FILE).exists():
        shutil.copyfile(src / LABELS_FILE, out / LABELS_FILE)
    emit({"bundle": str(out), "schema_hash": graph.schema.schema_hash(), **graph.counts()})
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig.toy() if args.toy else SynthConfig()
    if args.synth_config:
        cfg = SynthConfig.load(args.synth_config)
    overrides = {k: v for k, v in (("papers", args.papers), ("n_classes", args.classes),
                                   ("correlation", args.correlation), ("seed", args.seed)) if v is not None}
    cfg = SynthConfig.model_validate({**cfg.model_dump(), **overrides})
    synthetic = generate(cfg)
    out = synthetic.write(args.out)
    emit({"out": str(out), "seed": cfg.seed, "config": cfg.model_dump(mode="json"), **synthetic.graph.counts()})
    return 0


def _read_seeds(path: str, graph) -> list[Seed]:
    if not Path(path).is_file():
        raise ConfigError(f"seed file not found: {path}")
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    missing = {"type", "local_id"} - set(frame.columns)
    if missing:
        raise SchemaMismatch(f"seed file {path} lacks column(s) {sorted(missing)}")
    schema = graph.schema
    seeds = []
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        ts = getattr(row, "timestamp", "")
        try:
            node_id, time = int(row.local_id), (int(ts) if ts != "" else None)
        except ValueError:
            raise IngestError(f"seed id {row.local_id!r} or timestamp {ts!r} is not an integer",
                              source=str(path), line=line) from None
        seeds.append(Seed(schema.node_type_id(row.type), node_id, time))
    return seeds


def cmd_sample(args) -> int:
    graph = load_graph(_graph_dir(args.graph), self_loops=args.self_loops)
    cfg = SamplerConfig(n=args.n, depth=args.depth, seed=args.rng_seed,
                        with_replacement=args.with_replacement, reconstruct=args.reconstruct)
    subgraph = HGSampler(graph, cfg).sample(_read_seeds(args.seeds, graph))
    path = subgraph.to_json(args.out, extra={"config": cfg.model_dump(mode="json")})
    emit({"out": str(path), "seed": cfg.seed, "nodes": subgraph.total_nodes, "edges": subgraph.num_edges})
    return 0


def _load_task(graph_dir: Path, run: RunConfig):
    graph = load_graph(graph_dir, self_loops=run.hgt.self_loops)
    return graph, make_task(graph, run.task, graph_dir)


def cmd_train(args) -> int:
    graph_dir = _graph_dir(args.graph)
    run = _run_config(args).with_updates(graph_dir=str(graph_dir), out_dir=args.out)
    graph, task = _load_task(graph_dir, run)
    result = Trainer(graph, task, run).fit(args.out)
    emit({"out": args.out, "config_hash": run.config_hash(), "seed": run.seed,
          "best_epoch": result.best_epoch,
          "best_val_loss": None if math.isnan(result.best_val_loss) else result.best_val_loss,
          "epochs": int(len(result.history))})
    return 0


def _checkpoint_run(ckpt: Path) -> RunConfig:
    path = ckpt / "run.json"
    if not path.exists():
        raise ConfigError(f"{ckpt} is not a training output directory (no run.json)")
    return RunConfig.load(path)


def cmd_eval(args) -> int:
    ckpt = Path(args.ckpt)
    run = _checkpoint_run(ckpt)
    if args.task:
        run = run.with_updates(task=run.task.model_copy(update={"kind": args.task}))
    graph_dir = _graph_dir(args.graph or run.graph_dir)
    graph, task = _load_task(graph_dir, run)
    model, head, _ = load_checkpoint(ckpt, graph, task)
    metrics, per_query = task.evaluate(model, head, run.sampler, task.split(args.split), run.seed, args.split)
    out = Path(args.out) if args.out else ckpt
    out.mkdir(parents=True, exist_ok=True)
    per_query.to_csv(out / f"eval_{args.split}.csv", index=False, lineterminator="\n")
    emit({**metrics, "config_hash": run.config_hash(), "seed": run.seed}, out / f"eval_{args.split}.json")
    return 0


def cmd_export_attention(args) -> int:
    ckpt = Path(args.ckpt)
    run = _checkpoint_run(ckpt)
    graph_dir = _graph_dir(args.graph or run.graph_dir)
    graph, task = _load_task(graph_dir, run)
    model, _, _ = load_checkpoint(ckpt, graph, task)
    sampler = HGSampler(graph, run.sampler)
    frames = []
    for index, chunk in enumerate(task.batches(task.split(args.split))[: args.batches]):
        batch = task.make_batch(chunk, make_rng(derive_seed(run.seed, "negatives", args.split, index)))
        subgraph = sampler.sample(batch.seeds, rng_seed=derive_seed(run.seed, "sampler", args.split, index))
        records = []
        model.forward(subgraph, recorder=records)
        frame = attention_frame(subgraph, records)
        frame.insert(0, "batch", index)
        frames.append(frame)
    if not frames:
        raise ConfigError(f"split '{args.split}' has no queries to export attention for")
    edges = pd.concat(frames, ignore_index=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    edges.to_csv(out / "attention.csv", index=False, lineterminator="\n")
    summary = attention_summary(edges)
    summary.to_csv(out / "attention_summary.csv", index=False, lineterminator="\n")
    emit({"out": str(out), "edges": int(len(edges)), "relations": int(len(summary)),
          "config_hash": run.config_hash(), "seed": run.seed})
    return 0


def _count_schema(n_node_types: int, n_edge_types: int) -> Schema:
    """A schema with exactly the requested numbers of node and edge types (reverses included)."""
    if n_edge_types % 2:
        raise ConfigError("edge type count must be even: every edge type has a reverse")
    nodes = [NodeType(f"t{i}", 1) for i in range(n_node_types)]
    specs = []
    for k in range(n_edge_types // 2):
        tgt = (k + 1 + k // n_node_types) % n_node_types
        specs.append({"name": f"e{k}", "src": f"t{k % n_node_types}", "tgt": f"t{tgt}"})
    return Schema.build(nodes, specs)


def cmd_param_count(args) -> int:
    run = _run_config(args)
    if args.graph:
        schema = load_graph(_graph_dir(args.graph), self_loops=run.hgt.self_loops).schema
    else:
        schema = _count_schema(args.node_types, args.edge_types)
    hgt = run.hgt.model_copy(update={k: v for k, v in (("hidden_dim", args.hidden), ("n_heads", args.heads),
                                                          ("n_layers", args.layers)) if v is not None})
    hgt = type(hgt).model_validate(hgt.model_dump())
    result = {"node_types": schema.num_node_types, "edge_types": schema.num_edge_types,
              "hidden_dim": hgt.hidden_dim, "n_heads": hgt.n_heads, "n_layers": hgt.n_layers}
    for name, heter in (("full", True), ("no_heter", False)):
        variant = hgt.model_copy(update={"use_heter": heter, "dtype": "float32"})
        model = HGTModel(schema, variant)
        counted = model.layer_parameter_count()
        formula = per_layer_parameter_count(schema.num_node_types, schema.num_edge_types, variant.hidden_dim,
                                            variant.n_heads, heter, variant.use_rte) * variant.n_layers
        result[name] = {"layer_parameters": counted, "formula": formula, "matches": counted == formula,
                        "adapter_parameters": model.params.count("adapt")}
    emit(result)
    return 0


def cmd_ablate(args) -> int:
    graph_dir = _graph_dir(args.graph)
    run = _run_config(args).with_updates(graph_dir=str(graph_dir), out_dir=args.out)
    graph, task = _load_task(graph_dir, run)
    table = run_ablation(graph, task, run, args.out)
    emit({"out": args.out, "config_hash": run.config_hash(), "seed": run.seed,
          "variants": json.loads(table.to_json(orient="records"))})
    return 0


# --- parser ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgt-engine", description="Heterogeneous Graph Transformer engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate flat files and write the binary graph bundle")
    p.add_argument("--graph", help="directory with schema.json, nodes.tsv, edges.tsv, features")
    p.add_argument("--out", help="bundle directory (default: the graph directory)")
    p.add_argument("--self-loops", action="store_true", help="add one self-loop edge type per node type")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a planted-class synthetic academic graph")
    p.add_argument("--out", required=True)
    p.add_argument("--toy", action="store_true", help="the small fixture (40/25/5/10/3 nodes)")
    p.add_argument("--synth-config", help="JSON file with generator settings")
    p.add_argument("--papers", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--correlation", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample", help="draw one HGSampling subgraph around seed nodes")
    p.add_argument("--graph")
    p.add_argument("--seeds", required=True, help="TSV with columns type, local_id, timestamp")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--with-replacement", action="store_true")
    p.add_argument("--reconstruct", choices=["induced", "traversed"], default="induced")
    p.add_argument("--self-loops", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    for name, func, help_text in (("train", cmd_train, "train an HGT model and keep the best checkpoint"),
                                  ("ablate", cmd_ablate, "train full, -Heter, -RTE and -Heter-RTE variants")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--graph")
        p.add_argument("--task", choices=["node-class", "link"])
        p.add_argument("--config", help="run.json")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--self-loops", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="rank test queries with a trained checkpoint")
    p.add_argument("--ckpt", required=True, help="training output directory")
    p.add_argument("--graph")
    p.add_argument("--task", choices=["node-class", "link"])
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-attention", help="dump per-edge attention and a per-relation summary as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph")
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_attention)

    p = sub.add_parser("param-count", help="trainable parameters per HGT stack against the closed form")
    p.add_argument("--graph")
    p.add_argument("--node-types", type=int, default=2)
    p.add_argument("--edge-types", type=int, default=2)
    p.add_argument("--hidden", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--config")
    p.add_argument("--self-loops", action="store_true")
    p.set_defaults(func=cmd_param_count)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logger.info("command started", command=args.command)
    try:
        code = args.func(args)
    except HGTEngineException as exc:
        logger.error("command failed", command=args.command, error=exc.error_message,
                     kind=type(exc).__name__, exit_code=exc.exit_code)
        sys.stderr.write(f"{type(exc).__name__}: {exc.error_message}\n")
        return exc.exit_code
    except ValidationError as exc:
        logger.error("command failed", command=args.command, error=str(exc), kind="ConfigError", exit_code=2)
        sys.stderr.write(f"ConfigError: {exc}\n")
        return ConfigError.exit_code
    logger.info("command finished", command=args.command)
    return code


if __name__ == "__main__":
    sys.exit(main())
