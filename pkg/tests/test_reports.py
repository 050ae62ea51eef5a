# tests/test_reports.py - Report table and summary tests
import json

from retypelab.schemas.asm import LabelScheme
from retypelab.schemas.evaluation import RepeatedEval
from retypelab.services.evaluation import compute_metrics, find_convergence
from retypelab.services.reports import (
    TIMESTAMP_PREFIX,
    confusion_frame,
    metrics_table,
    summarize_repeated,
    trace_frame,
    write_frame,
    write_provenance,
    write_text,
)


def repeated():
    return RepeatedEval(accuracies=[0.8, 0.9], mean=0.85, sd=0.0707, ci95=(0.2, 1.0))


def test_metrics_table_appends_baselines():
    """Test model rows come first, then the baselines of the label scheme."""
    table = metrics_table([("decision_tree", repeated())], LabelScheme.HIGH_LEVEL)

    assert table["model"].tolist()[0] == "decision_tree"
    assert "baseline:IDA" in table["model"].tolist()
    assert table.loc[0, "accuracy_ci"] == 0.4


def test_metrics_table_single_run():
    metrics = compute_metrics(["int", "void"], ["int", "int"])
    table = metrics_table([("knn", metrics)])

    assert table.to_dict("records") == [{
        "model": "knn",
        "accuracy": 0.5,
        "macro_precision": metrics.macro_precision,
        "macro_recall": metrics.macro_recall,
        "macro_f1": metrics.macro_f1,
    }]


def test_confusion_frame():
    frame = confusion_frame(["int", "void"], [[3, 1], [0, 2]])

    assert frame.columns.tolist() == ["actual", "int", "void"]
    assert frame.iloc[0].tolist() == ["int", 3, 1]


def test_trace_frame_marks_stop():
    trace = find_convergence([1, 2, 3], [0.9, 0.9, 0.9], window=2, threshold=0.01)
    frame = trace_frame(trace)

    assert frame["stop"].tolist() == [False, True]


def test_timestamp_only_on_request(tmp_path):
    """Test reports are deterministic unless a timestamp is asked for."""
    frame = confusion_frame(["int"], [[1]])
    plain = write_frame(frame, tmp_path / "plain.csv")
    stamped = write_frame(frame, tmp_path / "stamped.csv", timestamp=True)

    assert plain.read_text() == "actual,int\nint,1\n"
    assert stamped.read_text().startswith(TIMESTAMP_PREFIX)
    assert stamped.read_text().splitlines()[1:] == plain.read_text().splitlines()


def test_summary_and_provenance(tmp_path):
    write_text(summarize_repeated("knn", repeated()), tmp_path / "summary.txt")
    path = write_provenance({"seed": 3, "threads": 1}, tmp_path / "reports", "train")

    assert (tmp_path / "summary.txt").read_text().startswith("model: knn\nrepetitions: 2\n")
    assert path.name == "train_config.json"
    assert json.loads(path.read_text()) == {"seed": 3, "threads": 1}
