"""Run configuration models.

Every knob of a run lives in one of these pydantic models; ``RunConfig`` is the
whole of ``run.json``. Validation errors surface as ``ConfigError`` so the CLI
exits with code 2.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from exception import ConfigError


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    @classmethod
    def load(cls, path: str | Path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as exc:
            raise ConfigError(f"invalid {cls.__name__} file {path}: {exc}") from exc


class SamplerConfig(_Model):
    n: int = Field(32, ge=1, description="nodes sampled per type per round")
    depth: int = Field(3, ge=1, description="number of sampling rounds L")
    seed: int = 0
    with_replacement: bool = False
    reconstruct: Literal["induced", "traversed"] = "induced"


class HGTConfig(_Model):
    hidden_dim: int = Field(256, ge=1)
    n_heads: int = Field(8, ge=1)
    n_layers: int = Field(3, ge=1)
    use_heter: bool = True
    use_rte: bool = True
    rte_on_messages: bool = True
    activation: Literal["gelu", "relu", "tanh", "identity"] = "gelu"
    self_loops: bool = False
    dropout: float = Field(0.0, ge=0.0, lt=1.0)
    layer_norm: bool = False
    dtype: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def _heads_divide_dim(self) -> "HGTConfig":
        if self.hidden_dim % self.n_heads != 0:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by n_heads {self.n_heads}")
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.n_heads


class OptimizerConfig(_Model):
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    weight_decay: float = Field(0.01, ge=0.0)
    clip_norm: float | None = Field(1.0, gt=0.0)


class ScheduleConfig(_Model):
    base_lr: float = Field(1e-3, gt=0.0)
    min_lr: float = Field(1e-6, gt=0.0)
    epochs: int = Field(200, ge=0)

    @model_validator(mode="after")
    def _min_below_base(self) -> "ScheduleConfig":
        if self.min_lr > self.base_lr:
            raise ValueError(f"min_lr {self.min_lr} exceeds base_lr {self.base_lr}")
        return self


class TaskSpec(_Model):
    kind: Literal["node-class", "link"] = "node-class"
    target_type: str = "paper"
    labels_file: str = "labels.tsv"
    # link prediction: queries are edge targets, candidates are edge sources
    edge_type: str = "writes"
    n_candidates: int = Field(10, ge=2)
    ntn_slices: int = Field(4, ge=1)
    # temporal split on the target's timestamp
    train_end: int = 70
    valid_end: int = 80
    batch_size: int = Field(64, ge=1)
    batches_per_epoch: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _ordered_split(self) -> "TaskSpec":
        if self.valid_end < self.train_end:
            raise ValueError("valid_end must not precede train_end")
        return self


class SynthConfig(_Model):
    papers: int = Field(1000, ge=1)
    authors: int = Field(400, ge=1)
    venues: int = Field(20, ge=1)
    fields: int = Field(50, ge=1)
    institutes: int = Field(20, ge=1)
    n_classes: int = Field(5, ge=1)
    correlation: float = Field(0.9, ge=0.0, le=1.0)
    time_min: int = 0
    time_max: int = 100
    feature_dim: int = Field(16, ge=1)
    citations_per_paper: int = Field(5, ge=0)
    authors_per_paper: int = Field(3, ge=1)
    fields_per_paper: int = Field(2, ge=1)
    seed: int = 0

    @field_validator("time_max")
    @classmethod
    def _non_empty_range(cls, value: int, info) -> int:
        if value <= info.data.get("time_min", 0):
            raise ValueError("time_max must exceed time_min")
        return value

    @classmethod
    def toy(cls, seed: int = 0) -> "SynthConfig":
        """The bundled toy academic graph: 40 papers, 25 authors, 5 venues, 10 fields, 3 institutes."""
        return cls(papers=40, authors=25, venues=5, fields=10, institutes=3, n_classes=3,
                   feature_dim=8, citations_per_paper=2, authors_per_paper=2, fields_per_paper=1,
                   seed=seed)


class RunConfig(_Model):
    graph_dir: str | None = None
    schema_path: str | None = None
    out_dir: str | None = None
    seed: int = 0
    deterministic: bool = True
    workers: int = Field(1, ge=1)
    sampler: SamplerConfig = SamplerConfig()
    hgt: HGTConfig = HGTConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    task: TaskSpec = TaskSpec()

    @property
    def effective_workers(self) -> int:
        return 1 if self.deterministic else self.workers

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of every knob; where outputs go is not a knob."""
        payload = json.dumps(self.model_dump(mode="json", exclude={"out_dir"}), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"

    def with_updates(self, **sections) -> "RunConfig":
        """Copy with whole sections or top-level fields replaced, re-validated."""
        data = self.model_dump()
        for key, value in sections.items():
            data[key] = value.model_dump() if isinstance(value, BaseModel) else value
        try:
            return RunConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc
