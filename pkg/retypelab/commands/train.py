# retypelab/commands/train.py - `train`: fit a classifier and write the model file
import logging
from pathlib import Path

from retypelab.core.config import PipelineConfig
from retypelab.services.classifiers import save_model, train
from retypelab.services.dataset_builder import read_csv
from retypelab.services.model_selection import (
    apply_selection,
    grid_search,
    load_selection,
    save_selection,
    select_features,
)
from retypelab.services.reports import write_provenance

from retypelab.commands.common import add_model_flags, model_overrides, spec_from

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train a classifier on a dataset CSV")
    parser.add_argument("--dataset", type=Path, help="dataset CSV")
    add_model_flags(parser)
    parser.add_argument("--selection", type=Path, help="selection JSON from `select`")
    parser.add_argument("--select", action="store_true", help="run feature selection before training")
    parser.add_argument("--tune", action="store_true", help="grid-search hyperparameters before training")
    parser.add_argument("--out", type=Path, help="model file path")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    return {"dataset_path": args.dataset, "model_path": args.out, **model_overrides(args)}


def run(args, config: PipelineConfig) -> None:
    dataset = read_csv(config.dataset_path)
    spec = spec_from(config)
    report_dir = Path(config.report_dir)

    if args.selection is not None:
        dataset = apply_selection(dataset, load_selection(args.selection))
    elif args.select:
        selection = select_features(dataset, spec, config.selection_methods, config.seed,
                                    config.cv_folds, config.tie_tolerance, config.threads)
        save_selection(selection, report_dir / f"selection_{spec.algorithm.value}.json")
        dataset = apply_selection(dataset, selection)

    if args.tune:
        result = grid_search(dataset, spec.algorithm, config.grid, config.seed, config.cv_folds, config.threads)
        spec = spec.with_params(**result.best_params)

    model = train(spec, dataset, config.threads)
    save_model(model, config.model_path)
    write_provenance(config.model_dump(mode="json"), report_dir, "train")
    logger.info(f"Trained {spec.algorithm.value} on {dataset.n_rows} rows, {dataset.n_features} features")
