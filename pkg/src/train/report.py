"""Ablation harness: train the full model and its −Heter / −RTE variants under one seed and tabulate them."""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill

from config import RunConfig
from logger.custom_logger import CustomLogger
from src.hetgraph import HeteroGraph
from src.tasks import TaskDriver

from .trainer import Trainer

logger = CustomLogger().get_logger(__file__)

VARIANTS = {
    "full": {"use_heter": True, "use_rte": True},
    "no_heter": {"use_heter": False, "use_rte": True},
    "no_rte": {"use_heter": True, "use_rte": False},
    "no_heter_no_rte": {"use_heter": False, "use_rte": False},
}
COMPARISON_COLUMNS = ["variant", "use_heter", "use_rte", "parameters", "best_epoch", "best_val_loss",
                      "test_ndcg", "test_mrr", "test_accuracy", "n_queries"]


def run_ablation(graph: HeteroGraph, task: TaskDriver, run: RunConfig, out_dir: str | Path,
                 variants: list[str] | None = None) -> pd.DataFrame:
    """Train and test every variant with identical seeds; no ordering between variants is assumed."""
    out_dir = Path(out_dir)
    rows = []
    for name in variants or list(VARIANTS):
        variant_run = run.with_updates(hgt=run.hgt.model_copy(update=VARIANTS[name]))
        trainer = Trainer(graph, task, variant_run)
        result = trainer.fit(out_dir / name)
        metrics, _ = task.evaluate(result.model, result.head, variant_run.sampler, task.split("test"),
                                   variant_run.seed)
        rows.append({
            "variant": name,
            **VARIANTS[name],
            "parameters": result.model.parameter_count(),
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
            "test_ndcg": metrics["ndcg"],
            "test_mrr": metrics["mrr"],
            "test_accuracy": metrics.get("accuracy"),
            "n_queries": metrics["n_queries"],
        })
        logger.info("ablation variant finished", variant=name, **{k: v for k, v in metrics.items() if k != "task"})
    table = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    write_comparison(table, out_dir, run)
    return table


def write_comparison(table: pd.DataFrame, out_dir: Path, run: RunConfig) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "comparison.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={run.config_hash()} seed={run.seed}\n")
        table.to_csv(fh, index=False, float_format="%.6f", lineterminator="\n")
    xlsx_path = ComparisonWorkbook().write(table, out_dir / "comparison.xlsx", run)
    return csv_path, xlsx_path


class ComparisonWorkbook:
    """Styled Excel rendering of the ablation table plus the run configuration."""

    def __init__(self):
        self.colors = {
            "header": PatternFill(start_color="1F4E79", end_color="1F4E79", fill_type="solid"),
            "best": PatternFill(start_color="C6EFCE", end_color="C6EFCE", fill_type="solid"),
            "worst": PatternFill(start_color="FFC7CE", end_color="FFC7CE", fill_type="solid"),
        }
        self.fonts = {
            "header": Font(color="FFFFFF", bold=True, size=12),
            "title": Font(bold=True, size=14),
        }

    def write(self, table: pd.DataFrame, path: Path, run: RunConfig) -> Path:
        wb = Workbook()
        wb.remove(wb.active)
        self._create_comparison_sheet(wb, table, run)
        self._create_config_sheet(wb, run)
        wb.save(path)
        logger.info("comparison workbook saved", path=str(path))
        return path

    def _create_comparison_sheet(self, wb: Workbook, table: pd.DataFrame, run: RunConfig):
        ws = wb.create_sheet("Ablation")
        ws["A1"] = f"ABLATION COMPARISON (seed {run.seed})"
        ws["A1"].font = self.fonts["title"]
        if table.empty:
            ws["A3"] = "No variants were run"
            return

        for col, header in enumerate(table.columns, 1):
            cell = ws.cell(row=3, column=col, value=header)
            cell.fill = self.colors["header"]
            cell.font = self.fonts["header"]

        # highlight the best and worst test score per metric
        highlight = {}
        for metric in ("test_ndcg", "test_mrr", "test_accuracy"):
            values = table[metric].dropna()
            if len(values) > 1 and values.max() != values.min():
                highlight[metric] = (values.max(), values.min())

        for row_idx, (_, row) in enumerate(table.iterrows(), 4):
            for col_idx, (column, value) in enumerate(row.items(), 1):
                cell = ws.cell(row=row_idx, column=col_idx, value=None if pd.isna(value) else value)
                if column in highlight:
                    best, worst = highlight[column]
                    if value == best:
                        cell.fill = self.colors["best"]
                    elif value == worst:
                        cell.fill = self.colors["worst"]
        self._auto_adjust_columns(ws)

    def _create_config_sheet(self, wb: Workbook, run: RunConfig):
        ws = wb.create_sheet("Run Config")
        ws["A1"] = f"config_hash {run.config_hash()}"
        ws["A1"].font = self.fonts["title"]
        flat = pd.json_normalize(json.loads(run.to_json()), sep=".").iloc[0]
        for row_idx, (key, value) in enumerate(flat.items(), 3):
            ws.cell(row=row_idx, column=1, value=key)
            ws.cell(row=row_idx, column=2, value=str(value))
        self._auto_adjust_columns(ws)

    def _auto_adjust_columns(self, ws):
        for column in ws.columns:
            max_length = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
            ws.column_dimensions[column[0].column_letter].width = min(max_length + 2, 50)
