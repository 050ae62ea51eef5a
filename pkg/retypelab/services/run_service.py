# retypelab/services/run_service.py - Run registry bookkeeping
import logging
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

import psutil
from sqlalchemy import desc
from sqlalchemy.orm import Session, joinedload

from retypelab.models import Run, RunLog

logger = logging.getLogger(__name__)


class RunStatus(str, Enum):
    """Run status enumeration."""
    PENDING = "pending"
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


def peak_rss_bytes() -> int:
    """Resident set size of this process (peak where the platform reports it)."""
    memory = psutil.Process().memory_info()
    return int(getattr(memory, "peak_wset", 0) or memory.rss)


class RunService:
    """Service for recording CLI runs."""

    def __init__(self, db: Session):
        self.db = db

    def create_run(self, command: str, seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> Run:
        run = Run(
            command=command,
            seed=str(seed) if seed is not None else None,
            config=config or {},
            status=RunStatus.PENDING.value,
        )
        self.db.add(run)
        self.db.flush()
        self.add_log(run.id, "initialization", f"Run {run.id} created for {command}")
        self.db.commit()
        logger.debug(f"Created run {run.id} ({command})")
        return run

    def _get(self, run_id: int) -> Run:
        run = self.db.get(Run, run_id)
        if not run:
            raise ValueError(f"Run {run_id} not found")
        return run

    def start_run(self, run_id: int) -> Run:
        run = self._get(run_id)
        if run.status != RunStatus.PENDING.value:
            raise ValueError(f"Run {run_id} is not pending")
        run.status = RunStatus.RUNNING.value
        run.started_at = datetime.utcnow()
        self.add_log(run.id, "execution", "Run started")
        self.db.commit()
        return run

    def complete_run(self, run_id: int, status: RunStatus, error_message: Optional[str] = None) -> Run:
        run = self._get(run_id)
        if run.status not in (RunStatus.PENDING.value, RunStatus.RUNNING.value):
            raise ValueError(f"Run {run_id} is already completed")
        run.status = status.value
        run.completed_at = datetime.utcnow()
        run.duration_seconds = (run.completed_at - (run.started_at or run.completed_at)).total_seconds()
        run.peak_rss_bytes = peak_rss_bytes()
        if error_message:
            run.error_message = error_message
        level = "error" if status == RunStatus.FAILED else "info"
        self.add_log(run.id, "completion", f"Run {status.value}", level)
        self.db.commit()
        logger.debug(f"Completed run {run.id} with status {status.value}")
        return run

    def add_log(self, run_id: int, stage: str, message: str, level: str = "info") -> RunLog:
        entry = RunLog(run_id=run_id, stage=stage, message=message, log_level=level)
        self.db.add(entry)
        self.db.flush()
        return entry

    def get_run_with_logs(self, run_id: int) -> Optional[Run]:
        return self.db.query(Run).options(joinedload(Run.logs)).filter(Run.id == run_id).first()

    def list_runs(self, command: Optional[str] = None, limit: int = 20) -> List[Run]:
        query = self.db.query(Run)
        if command:
            query = query.filter(Run.command == command)
        return query.order_by(desc(Run.id)).limit(limit).all()
