from .optimizer import OptimizerState, adamw_step, clip_grad_norm, cosine_lr
from .report import VARIANTS, ComparisonWorkbook, run_ablation, write_comparison
from .trainer import (
    FitResult,
    Trainer,
    build_model,
    fit,
    load_checkpoint,
    read_history,
    write_history,
)

__all__ = [
    "VARIANTS",
    "ComparisonWorkbook",
    "FitResult",
    "OptimizerState",
    "Trainer",
    "adamw_step",
    "build_model",
    "clip_grad_norm",
    "cosine_lr",
    "fit",
    "load_checkpoint",
    "read_history",
    "run_ablation",
    "write_comparison",
    "write_history",
]
