# retypelab/commands/select.py - `select`: wrapper feature selection report
import logging
from pathlib import Path

from retypelab.core.config import PipelineConfig
from retypelab.schemas.selection import SelectionMethod
from retypelab.services.dataset_builder import read_csv
from retypelab.services.model_selection import save_selection, select_features
from retypelab.services.reports import selection_frame, write_frame, write_provenance

from retypelab.commands.common import add_model_flags, model_overrides, spec_from

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("select", help="pick a feature subset by cross-validated wrapper selection")
    parser.add_argument("--dataset", type=Path, help="dataset CSV")
    add_model_flags(parser)
    parser.add_argument("--methods", help="comma list such as rfe,sfm:random_forest:mean")
    parser.add_argument("--out", type=Path, help="selection JSON (default: <report_dir>/selection_<algorithm>.json)")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    values = {"dataset_path": args.dataset, **model_overrides(args)}
    if args.methods:
        values["selection_methods"] = [SelectionMethod.parse(t) for t in args.methods.split(",") if t.strip()]
    return values


def run(args, config: PipelineConfig) -> None:
    dataset = read_csv(config.dataset_path)
    spec = spec_from(config)
    result = select_features(
        dataset,
        spec,
        config.selection_methods,
        seed=config.seed,
        k=config.cv_folds,
        tie_tolerance=config.tie_tolerance,
        threads=config.threads,
    )
    report_dir = Path(config.report_dir)
    out = args.out or report_dir / f"selection_{spec.algorithm.value}.json"
    save_selection(result, out)
    write_frame(selection_frame(result), report_dir / f"selection_{spec.algorithm.value}.csv", config.timestamp)
    write_provenance(config.model_dump(mode="json"), report_dir, "select")
    logger.info(f"Selected {result.n_features} of {dataset.n_features} features with {result.method.name}")
