"""Mini-batch training with validation-based model selection.

Per epoch the trainer draws ``batches_per_epoch`` batches of training queries,
samples one subgraph per batch, and applies one clipped AdamW step per batch.
Validation subgraphs are sampled once with fixed seeds so every epoch scores
the same batches. Every random stream comes from the run's root seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import pandas as pd

from config import RunConfig, derive_seed, make_rng
from exception import NonFiniteLoss, SchemaMismatch
from logger.custom_logger import CustomLogger
from src.hetgraph import HeteroGraph
from src.hgt import HGTModel
from src.sampler import HGSampler, SampledSubgraph
from src.tasks import Batch, TaskDriver
from src.tensor import ParamStore, Tape

from .optimizer import OptimizerState, adamw_step, clip_grad_norm, cosine_lr

logger = CustomLogger().get_logger(__file__)

HISTORY_FILE = "history.csv"
RUN_FILE = "run.json"
CHECKPOINT_DIR = "checkpoint"
HISTORY_COLUMNS = ["epoch", "lr", "train_loss", "val_loss"]


@dataclass
class FitResult:
    model: HGTModel
    head: object
    history: pd.DataFrame
    best_epoch: int
    best_val_loss: float
    checkpoint: Path | None = None


def build_model(graph: HeteroGraph, task: TaskDriver, run: RunConfig) -> tuple[HGTModel, object]:
    params = ParamStore(run.hgt.dtype, make_rng(derive_seed(run.seed, "init")))
    model = HGTModel(graph.schema, run.hgt, params)
    head = task.build_head(params, run.hgt.hidden_dim)
    return model, head


def _prefetch(jobs: list, fn: Callable, workers: int) -> Iterator:
    """Yield fn(job) in job order, sampling at most ``2 * workers`` jobs ahead."""
    if workers <= 1:
        for job in jobs:
            yield fn(job)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = []
        queue = iter(jobs)
        for job in queue:
            pending.append(pool.submit(fn, job))
            if len(pending) >= 2 * workers:
                break
        while pending:
            result = pending.pop(0).result()
            nxt = next(queue, None)
            if nxt is not None:
                pending.append(pool.submit(fn, nxt))
            yield result


class Trainer:
    def __init__(self, graph: HeteroGraph, task: TaskDriver, run: RunConfig):
        self.graph = graph
        self.task = task
        self.run = run
        self.sampler = HGSampler(graph, run.sampler)
        self.model, self.head = build_model(graph, task, run)
        self.params = self.model.params
        self._valid: list[tuple[Batch, SampledSubgraph]] | None = None

    def _sample(self, job: tuple[np.ndarray, int, int, str]) -> tuple[Batch, SampledSubgraph]:
        chunk, epoch, index, stream = job
        seed = self.run.seed
        batch = self.task.make_batch(chunk, make_rng(derive_seed(seed, "negatives", stream, epoch, index)))
        subgraph = self.sampler.sample(batch.seeds, rng_seed=derive_seed(seed, "sampler", stream, epoch, index))
        return batch, subgraph

    def validation_batches(self) -> list[tuple[Batch, SampledSubgraph]]:
        if self._valid is None:
            queries = self.task.split("valid")
            chunks = self.task.batches(queries)[: self.run.task.batches_per_epoch]
            self._valid = [self._sample((chunk, 0, i, "valid")) for i, chunk in enumerate(chunks)]
        return self._valid

    def validation_loss(self) -> float:
        """Mean loss over the fixed validation batches (NaN when the split is empty)."""
        losses = [self.task.batch_loss(self.model, self.head, subgraph, batch).item()
                  for batch, subgraph in self.validation_batches()]
        return float(np.mean(losses)) if losses else float("nan")

    def train_epoch(self, epoch: int, lr: float, state: OptimizerState) -> float:
        spec = self.run.task
        chunks = self.task.batches(self.task.split("train"), order_seed=derive_seed(self.run.seed, "batches", epoch))
        jobs = [(chunk, epoch, i, "train") for i, chunk in enumerate(chunks[: spec.batches_per_epoch])]
        dropout_rng = make_rng(derive_seed(self.run.seed, "dropout", epoch))
        losses = []
        for (batch, subgraph), (_, _, index, _) in zip(
                _prefetch(jobs, self._sample, self.run.effective_workers), jobs):
            self.params.zero_grad()
            with Tape() as tape:
                loss = self.task.batch_loss(self.model, self.head, subgraph, batch, training=True, rng=dropout_rng)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLoss(f"epoch{epoch}/batch{index}", value)
                tape.backward(loss)
            clip_grad_norm(self.params, self.run.optimizer.clip_norm)
            adamw_step(self.params, state, lr)
            losses.append(value)
        return float(np.mean(losses)) if losses else float("nan")

    def fit(self, out_dir: str | Path | None = None) -> FitResult:
        run = self.run
        state = OptimizerState.from_config(self.params, run.optimizer)
        best_state = self.params.state()
        best_epoch = -1
        best_loss = math.inf
        rows = []
        logger.info("training started", epochs=run.schedule.epochs, splits=self.task.split_sizes(),
                    parameters=self.model.parameter_count(), config_hash=run.config_hash())
        for epoch in range(run.schedule.epochs):
            lr = cosine_lr(epoch, run.schedule)
            train_loss = self.train_epoch(epoch, lr, state)
            val_loss = self.validation_loss()
            selection = train_loss if math.isnan(val_loss) else val_loss
            if selection < best_loss:
                best_loss = selection
                best_epoch = epoch
                best_state = self.params.state()
            rows.append({"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_loss": val_loss})
            logger.info("epoch finished", epoch=epoch, lr=lr, train_loss=train_loss, val_loss=val_loss)

        self.params.load_state(best_state)
        history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
        result = FitResult(self.model, self.head, history, best_epoch,
                           best_loss if best_epoch >= 0 else float("nan"))
        if out_dir is not None:
            result.checkpoint = self.save(out_dir, result)
        return result

    def save(self, out_dir: str | Path, result: FitResult) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metadata = checkpoint_metadata(self.run, self.graph, self.task, result.best_epoch, result.best_val_loss)
        self.params.save(out_dir / CHECKPOINT_DIR, metadata=metadata)
        write_history(result.history, out_dir / HISTORY_FILE, self.run)
        (out_dir / RUN_FILE).write_text(self.run.to_json(), encoding="utf-8")
        logger.info("checkpoint written", path=str(out_dir), best_epoch=result.best_epoch)
        return out_dir


def fit(graph: HeteroGraph, task: TaskDriver, run: RunConfig, out_dir: str | Path | None = None) -> FitResult:
    return Trainer(graph, task, run).fit(out_dir)


def checkpoint_metadata(run: RunConfig, graph: HeteroGraph, task: TaskDriver, best_epoch: int,
                        best_val_loss: float) -> dict:
    return {
        "config_hash": run.config_hash(),
        "seed": run.seed,
        "schema_hash": graph.schema.schema_hash(),
        "best_epoch": best_epoch,
        "best_val_loss": None if math.isnan(best_val_loss) else best_val_loss,
        "task": task.kind,
        "run": run.model_dump(mode="json"),
    }


def write_history(history: pd.DataFrame, path: Path, run: RunConfig) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={run.config_hash()} seed={run.seed}\n")
        history.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_history(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def load_checkpoint(ckpt_dir: str | Path, graph: HeteroGraph, task: TaskDriver) -> tuple[HGTModel, object, RunConfig]:
    """Rebuild model and head from a training output directory; the graph's schema must match."""
    ckpt_dir = Path(ckpt_dir)
    metadata = ParamStore.read_manifest(ckpt_dir / CHECKPOINT_DIR).get("metadata", {})
    if metadata.get("schema_hash") != graph.schema.schema_hash():
        raise SchemaMismatch(f"checkpoint {ckpt_dir} was trained on schema {metadata.get('schema_hash')}, "
                             f"graph has {graph.schema.schema_hash()}")
    run = RunConfig.model_validate(metadata["run"])
    model, head = build_model(graph, task, run)
    model.params.load(ckpt_dir / CHECKPOINT_DIR)
    return model, head, run
