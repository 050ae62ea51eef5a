# retypelab/commands/common.py - Helpers shared by the subcommands
import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from sqlalchemy.exc import SQLAlchemyError

from retypelab.core.config import PipelineConfig
from retypelab.core.errors import DuplicateFunctionError, ValidationError
from retypelab.database import SessionLocal, init_db
from retypelab.schemas.asm import FunctionListing, LabelScheme
from retypelab.schemas.model import Algorithm, ModelSpec, coerce_hyperparameter
from retypelab.schemas.patterns import ExtractionOptions
from retypelab.services.listing_parser import parse_listing
from retypelab.services.run_service import RunService, RunStatus

logger = logging.getLogger(__name__)

PACKAGE_LOGGER = "retypelab"


def add_global_flags(parser: argparse.ArgumentParser, suppress: bool = False) -> None:
    """Flags accepted before or after the subcommand name."""
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="key=value config file (falls back to $RETYPELAB_CONFIG)")
    parser.add_argument("--seed", type=int, default=default, help="unsigned 64-bit seed; required")
    parser.add_argument("--threads", type=int, default=default, help="cap on worker threads")
    parser.add_argument("--no-timestamp", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="omit the timestamp line from reports")
    parser.add_argument("--no-registry", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="do not record the run in the registry")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="debug logging")


def add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--algorithm", choices=[a.value for a in Algorithm])
    parser.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                        help="hyperparameter override, repeatable")


def parse_params(pairs: Sequence[str]) -> Optional[Dict[str, Any]]:
    if not pairs:
        return None
    params = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name.strip():
            raise ValidationError(f"--param expects NAME=VALUE, got {pair!r}")
        params[name.strip()] = coerce_hyperparameter(name.strip(), value)
    return params


def model_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {"algorithm": args.algorithm, "hyperparameters": parse_params(args.param)}


def spec_from(config: PipelineConfig) -> ModelSpec:
    try:
        return ModelSpec(algorithm=config.algorithm, hyperparameters=config.hyperparameters, rng_seed=config.seed)
    except ValueError as e:
        raise ValidationError(f"Invalid model specification: {e}")


def options_from(config: PipelineConfig) -> ExtractionOptions:
    return ExtractionOptions(
        max_len=config.max_chunk_len,
        pattern_budget=config.pattern_budget,
        include_post=config.include_post,
        include_advanced=config.include_advanced,
        anchor_mode=config.anchor_mode,
    )


def scheme_choices() -> List[str]:
    return [s.value for s in LabelScheme]


def require_file(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise ValidationError(f"{what} {path} not found")
    return Path(path)


def load_listings(paths: Iterable[Path], strict: bool = False) -> List[FunctionListing]:
    """Parse listing files in order; a function name may appear only once across them."""
    paths = list(paths)
    functions: List[FunctionListing] = []
    seen = set()
    for path in paths:
        require_file(path, "Listing file")
        for fn in parse_listing(Path(path).read_text(encoding="utf-8"), strict=strict):
            if fn.name in seen:
                raise DuplicateFunctionError(f"Function {fn.name} defined in more than one listing ({path})")
            seen.add(fn.name)
            functions.append(fn)
    logger.info(f"Loaded {len(functions)} functions from {len(paths)} listings")
    return functions


class RunLogCapture(logging.Handler):
    """Buffers package log records during a command; the tracker stores them when the command ends."""

    def __init__(self, level: int = logging.INFO):
        super().__init__(level)
        self.records: List[logging.LogRecord] = []

    def emit(self, record: logging.LogRecord) -> None:
        # called under the handler lock, so worker threads append safely
        self.records.append(record)


class RunTracker:
    """Records a command in the run registry; registry failures never fail the command."""

    def __init__(self, command: str, config: PipelineConfig):
        self.command = command
        self.config = config
        self.db = None
        self.service: Optional[RunService] = None
        self.run_id: Optional[int] = None
        self.capture = RunLogCapture()

    def __enter__(self) -> "RunTracker":
        if not self.config.registry:
            return self
        try:
            init_db()
            self.db = SessionLocal()
            self.service = RunService(self.db)
            run = self.service.create_run(self.command, self.config.seed, self.config.model_dump(mode="json"))
            self.service.start_run(run.id)
            self.run_id = run.id
        except SQLAlchemyError as e:
            logger.warning(f"Run registry unavailable: {e}")
            self._close()
            return self
        logging.getLogger(PACKAGE_LOGGER).addHandler(self.capture)
        return self

    def flush_logs(self) -> None:
        """Store the captured records as execution-stage log rows."""
        logging.getLogger(PACKAGE_LOGGER).removeHandler(self.capture)
        records, self.capture.records = self.capture.records, []
        try:
            for record in records:
                message = f"{record.name}: {record.getMessage()}"
                self.service.add_log(self.run_id, "execution", message, record.levelname.lower())
            self.db.commit()
        except SQLAlchemyError as e:
            self.db.rollback()
            logger.warning(f"Could not record {len(records)} log entries for run {self.run_id}: {e}")

    def __exit__(self, exc_type, exc, tb) -> bool:
        if self.service is not None:
            self.flush_logs()
            try:
                if exc is None:
                    self.service.complete_run(self.run_id, RunStatus.SUCCESS)
                else:
                    self.service.complete_run(self.run_id, RunStatus.FAILED, error_message=str(exc))
            except SQLAlchemyError as e:
                logger.warning(f"Could not complete run {self.run_id}: {e}")
        self._close()
        return False

    def _close(self) -> None:
        if self.db is not None:
            self.db.close()
        self.db = None
        self.service = None
