# retypelab/services/reports.py - CSV tables and text summaries written to the report directory
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from retypelab.schemas.asm import LabelScheme
from retypelab.schemas.evaluation import (
    DECOMPILER_BASELINES,
    ConvergenceTrace,
    Method2Result,
    Method3Result,
    Metrics,
    RepeatedEval,
)
from retypelab.schemas.selection import GridSearchResult, SelectionResult

logger = logging.getLogger(__name__)

TIMESTAMP_PREFIX = "# generated "


def _timestamp() -> str:
    return f"{TIMESTAMP_PREFIX}{datetime.now(timezone.utc).isoformat(timespec='seconds')}\n"


def write_frame(frame: pd.DataFrame, path: Path, timestamp: bool = False) -> Path:
    """CSV with an optional leading timestamp comment; everything after it is deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        if timestamp:
            f.write(_timestamp())
        frame.to_csv(f, index=False, lineterminator="\n", float_format="%.6f")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def write_text(text: str, path: Path, timestamp: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text((_timestamp() if timestamp else "") + text, encoding="utf-8")
    return path


def write_provenance(config: Dict[str, Any], report_dir: Path, command: str) -> Path:
    """Echo the resolved configuration of a command next to its outputs."""
    path = Path(report_dir) / f"{command}_config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def repetitions_frame(evaluation: RepeatedEval) -> pd.DataFrame:
    frame = pd.DataFrame({
        "repetition": range(1, evaluation.repetitions + 1),
        "accuracy": evaluation.accuracies,
    })
    for name in ("macro_precision", "macro_recall", "macro_f1"):
        summary = getattr(evaluation, name)
        if summary is not None:
            frame[name] = summary.values
    return frame


def _summary_cells(evaluation: RepeatedEval) -> Dict[str, float]:
    cells = {"accuracy": evaluation.mean, "accuracy_ci": (evaluation.ci95[1] - evaluation.ci95[0]) / 2}
    for name in ("macro_precision", "macro_recall", "macro_f1"):
        summary = getattr(evaluation, name)
        cells[name] = summary.mean if summary else float("nan")
        cells[f"{name}_ci"] = summary.half_width if summary else float("nan")
    return cells


def metrics_table(
    rows: Sequence[Tuple[str, Union[RepeatedEval, Metrics]]],
    scheme: Optional[LabelScheme] = None,
) -> pd.DataFrame:
    """One row per model with CI half-widths, then the decompiler baselines of the scheme."""
    records: List[Dict[str, Any]] = []
    for name, result in rows:
        if isinstance(result, RepeatedEval):
            record = {"model": name, **_summary_cells(result)}
        else:
            record = {
                "model": name,
                "accuracy": result.accuracy,
                "macro_precision": result.macro_precision,
                "macro_recall": result.macro_recall,
                "macro_f1": result.macro_f1,
            }
        records.append(record)
    if scheme is not None:
        for baseline in DECOMPILER_BASELINES[scheme]:
            records.append({
                "model": f"baseline:{baseline.tool}",
                "accuracy": baseline.accuracy,
                "macro_precision": baseline.macro_precision,
                "macro_recall": baseline.macro_recall,
                "macro_f1": baseline.macro_f1,
            })
    return pd.DataFrame.from_records(records)


def per_class_frame(metrics: Metrics) -> pd.DataFrame:
    return pd.DataFrame.from_records([
        {"class": c, "precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
        for c, m in metrics.per_class.items()
    ])


def confusion_frame(classes: Sequence[str], confusion: Sequence[Sequence[int]]) -> pd.DataFrame:
    frame = pd.DataFrame(confusion, columns=list(classes))
    frame.insert(0, "actual", list(classes))
    return frame


def trace_frame(trace: ConvergenceTrace) -> pd.DataFrame:
    return pd.DataFrame({
        "x": trace.xs,
        "accuracy": trace.accuracies,
        "cov": trace.covs,
        "stop": [i == trace.stop_index for i in range(len(trace.xs))],
    })


def selection_frame(selection: SelectionResult) -> pd.DataFrame:
    records = []
    for evaluation in selection.evaluated:
        record = {"method": evaluation.method.name, "n_features": evaluation.n_features}
        for i, accuracy in enumerate(evaluation.fold_accuracies, start=1):
            record[f"fold{i}"] = accuracy
        record["mean"] = evaluation.cv_accuracy
        record["chosen"] = evaluation.method == selection.method
        records.append(record)
    return pd.DataFrame.from_records(records)


def grid_frame(result: GridSearchResult) -> pd.DataFrame:
    records = []
    for point in result.table:
        record = {"params": json.dumps(point.params, sort_keys=True)}
        for i, accuracy in enumerate(point.fold_accuracies, start=1):
            record[f"fold{i}"] = accuracy
        record["mean"] = point.mean_accuracy
        record["best"] = point.params == result.best_params
        records.append(record)
    return pd.DataFrame.from_records(records)


def summarize_repeated(name: str, evaluation: RepeatedEval) -> str:
    lines = [
        f"model: {name}",
        f"repetitions: {evaluation.repetitions}",
        f"accuracy: {evaluation.mean:.4f} (95% CI {evaluation.ci95[0]:.4f} - {evaluation.ci95[1]:.4f}, sd {evaluation.sd:.4f})",
    ]
    for label in ("macro_precision", "macro_recall", "macro_f1"):
        summary = getattr(evaluation, label)
        if summary is not None:
            lines.append(f"{label}: {summary.mean:.4f} ± {summary.half_width:.4f}")
    return "\n".join(lines) + "\n"


def summarize_method2(name: str, result: Method2Result) -> str:
    trace = result.trace
    status = "converged" if trace.converged else "did not converge (reported at 100%)"
    return (
        f"model: {name}\n"
        f"real functions needed: {trace.stop_x:.0f}% ({status}; window {trace.window}, CoV < {trace.threshold})\n"
        f"real holdout: {result.holdout_size} functions; {result.holdout_note}\n"
        + summarize_repeated(name, result.at_stop).split("\n", 1)[1]
    )


def summarize_method3(name: str, result: Method3Result) -> str:
    lines = [f"model: {name}"]
    for program in result.programs:
        lines.append(
            f"held out {program.program}: accuracy {program.metrics.accuracy:.4f}, "
            f"macro F1 {program.metrics.macro_f1:.4f} ({program.n_test} test / {program.n_train} train)"
        )
    lines.append(f"mean accuracy {result.mean_accuracy:.4f}, mean macro F1 {result.mean_macro_f1:.4f}")
    return "\n".join(lines) + "\n"
