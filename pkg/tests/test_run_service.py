# tests/test_run_service.py - Run registry tests
import logging

import pytest

from retypelab.commands.common import PACKAGE_LOGGER, RunTracker
from retypelab.core.config import CONFIG_ENV_VAR, load_pipeline_config, settings
from retypelab.database import SessionLocal
from retypelab.services.run_service import RunService, RunStatus


def test_create_run(session):
    """Test a new run is pending and logged."""
    run = RunService(session).create_run("train", seed=42, config={"algorithm": "decision_tree"})

    assert run.id is not None
    assert run.status == RunStatus.PENDING.value
    assert run.seed == "42"
    assert run.config == {"algorithm": "decision_tree"}
    assert [log.stage for log in run.logs] == ["initialization"]


def test_run_lifecycle(session):
    """Test start and completion record timing, memory and log entries."""
    service = RunService(session)
    run = service.create_run("build", seed=1)
    service.start_run(run.id)
    completed = service.complete_run(run.id, RunStatus.SUCCESS)

    assert completed.status == "success"
    assert completed.duration_seconds >= 0
    assert completed.peak_rss_bytes > 0
    stages = [log.stage for log in service.get_run_with_logs(run.id).logs]
    assert stages == ["initialization", "execution", "completion"]


def test_failed_run_keeps_error(session):
    service = RunService(session)
    run = service.create_run("eval", seed=1)
    failed = service.complete_run(run.id, RunStatus.FAILED, "Class 'void' has 1 rows")

    assert failed.error_message == "Class 'void' has 1 rows"
    assert failed.logs[-1].log_level == "error"


def test_start_requires_pending(session):
    service = RunService(session)
    run = service.create_run("synth", seed=1)
    service.start_run(run.id)

    with pytest.raises(ValueError):
        service.start_run(run.id)


def test_complete_only_once(session):
    service = RunService(session)
    run = service.create_run("synth", seed=1)
    service.complete_run(run.id, RunStatus.SUCCESS)

    with pytest.raises(ValueError):
        service.complete_run(run.id, RunStatus.FAILED)


def test_unknown_run(session):
    with pytest.raises(ValueError):
        RunService(session).start_run(9999)


def test_list_runs(session):
    """Test listing filters by command, newest first."""
    service = RunService(session)
    first = service.create_run("train", seed=1)
    service.create_run("build", seed=1)
    second = service.create_run("train", seed=2)

    assert [r.id for r in service.list_runs(command="train")] == [second.id, first.id]
    assert len(service.list_runs(limit=2)) == 2


def test_tracker_stores_command_logs(tmp_path, monkeypatch, caplog):
    """Test package log records during a command become execution-stage run logs."""
    monkeypatch.setattr(settings, "DATABASE_URL", f"sqlite:///{tmp_path / 'runs.db'}")
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    caplog.set_level(logging.INFO, logger=PACKAGE_LOGGER)
    builder = logging.getLogger("retypelab.services.dataset_builder")

    with RunTracker("build", load_pipeline_config(overrides={"seed": 1})) as tracker:
        builder.info("Wrote 3x4 dataset")
        builder.warning("Pattern budget 64 truncated 2 chunks")
        builder.debug("per-function detail")

    db = SessionLocal()
    try:
        run = RunService(db).get_run_with_logs(tracker.run_id)
        entries = [(log.stage, log.log_level, log.message) for log in run.logs]
    finally:
        db.close()

    assert run.status == "success"
    assert ("execution", "info", "retypelab.services.dataset_builder: Wrote 3x4 dataset") in entries
    assert ("execution", "warning", "retypelab.services.dataset_builder: Pattern budget 64 truncated 2 chunks") in entries
    assert not any("per-function detail" in message for _, _, message in entries)
    assert entries[-1][0] == "completion"
    assert tracker.capture not in logging.getLogger(PACKAGE_LOGGER).handlers
