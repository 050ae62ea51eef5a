# retypelab/commands/tune.py - `tune`: exhaustive grid search report
import json
import logging
from pathlib import Path

from retypelab.core.config import PipelineConfig
from retypelab.services.dataset_builder import read_csv
from retypelab.services.model_selection import apply_selection, grid_search, load_selection
from retypelab.services.reports import grid_frame, write_frame, write_provenance

from retypelab.commands.common import add_model_flags, model_overrides, spec_from

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("tune", help="grid-search hyperparameters with stratified CV")
    parser.add_argument("--dataset", type=Path, help="dataset CSV")
    add_model_flags(parser)
    parser.add_argument("--selection", type=Path, help="selection JSON to restrict the columns")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    return {"dataset_path": args.dataset, **model_overrides(args)}


def run(args, config: PipelineConfig) -> None:
    dataset = read_csv(config.dataset_path)
    if args.selection is not None:
        dataset = apply_selection(dataset, load_selection(args.selection))
    algorithm = spec_from(config).algorithm
    result = grid_search(dataset, algorithm, config.grid, config.seed, config.cv_folds, config.threads)

    report_dir = Path(config.report_dir)
    write_frame(grid_frame(result), report_dir / f"tune_{algorithm.value}.csv", config.timestamp)
    (report_dir / f"tune_{algorithm.value}.json").write_text(
        json.dumps({"algorithm": algorithm.value, "best_params": result.best_params,
                    "best_accuracy": result.best_accuracy}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    write_provenance(config.model_dump(mode="json"), report_dir, "tune")
