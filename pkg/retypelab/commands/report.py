# retypelab/commands/report.py - `report`: run registry listing and stored summaries
import sys
from pathlib import Path

from retypelab.core.config import PipelineConfig
from retypelab.core.errors import ValidationError
from retypelab.database import SessionLocal, init_db
from retypelab.services.run_service import RunService

from retypelab.commands.common import require_file


def register(subparsers) -> None:
    parser = subparsers.add_parser("report", help="show recorded runs or print a text summary")
    parser.add_argument("--run", type=int, help="show one run with its logs")
    parser.add_argument("--command", dest="run_command", help="only runs of this subcommand")
    parser.add_argument("--limit", type=int, default=20)
    parser.add_argument("--summary", type=Path, help="print a stored summary file")
    parser.set_defaults(handler=run, overrides=overrides, track=False)


def overrides(args) -> dict:
    # listing runs needs no seed
    return {"seed": args.seed if getattr(args, "seed", None) is not None else 0}


def run(args, config: PipelineConfig) -> None:
    if args.summary is not None:
        sys.stdout.write(require_file(args.summary, "Summary file").read_text(encoding="utf-8"))
        return

    init_db()
    db = SessionLocal()
    try:
        service = RunService(db)
        if args.run is not None:
            found = service.get_run_with_logs(args.run)
            if found is None:
                raise ValidationError(f"Run {args.run} not found")
            sys.stdout.write(
                f"run {found.id} {found.command} {found.status} seed={found.seed} "
                f"duration={found.duration_seconds} rss={found.peak_rss_bytes}\n"
            )
            if found.error_message:
                sys.stdout.write(f"error: {found.error_message}\n")
            for entry in found.logs:
                sys.stdout.write(f"  [{entry.log_level}] {entry.stage}: {entry.message}\n")
            return
        for found in service.list_runs(args.run_command, args.limit):
            sys.stdout.write(
                f"{found.id}\t{found.command}\t{found.status}\tseed={found.seed}\t"
                f"{found.created_at}\t{found.duration_seconds}\n"
            )
    finally:
        db.close()
