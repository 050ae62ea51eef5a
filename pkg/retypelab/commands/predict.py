# retypelab/commands/predict.py - `predict`: return types for an unlabeled listing
import logging
import sys
from pathlib import Path

import pandas as pd

from retypelab.core.config import PipelineConfig
from retypelab.core.errors import ValidationError
from retypelab.schemas.patterns import ExtractionOptions
from retypelab.services.classifiers import TrainedModel, load_model
from retypelab.services.dataset_builder import feature_rows
from retypelab.services.reports import write_frame

from retypelab.commands.common import load_listings, options_from

logger = logging.getLogger(__name__)

# config field -> extraction option it sets
_OPTION_FIELDS = {
    "max_chunk_len": "max_len",
    "pattern_budget": "pattern_budget",
    "include_post": "include_post",
    "include_advanced": "include_advanced",
    "anchor_mode": "anchor_mode",
}


def register(subparsers) -> None:
    parser = subparsers.add_parser("predict", help="predict the return type of every function in a listing")
    parser.add_argument("listing", type=Path, help="listing file")
    parser.add_argument("--model", type=Path, help="model file")
    parser.add_argument("--out", type=Path, help="also write the predictions CSV here")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    return {"model_path": args.model}


def extraction_options(config: PipelineConfig, model: TrainedModel) -> ExtractionOptions:
    """The model's training options; explicitly configured options must agree with them."""
    if model.options is None:
        logger.warning("Model file carries no extraction options; using the configured ones")
        return options_from(config)
    for field in sorted(config.model_fields_set & _OPTION_FIELDS.keys()):
        wanted = getattr(config, field)
        trained = getattr(model.options, _OPTION_FIELDS[field])
        if wanted != trained:
            raise ValidationError(f"Configured {field}={wanted} differs from the model's training value {trained}")
    return model.options


def predictions_frame(config: PipelineConfig, listing: Path) -> pd.DataFrame:
    model = load_model(config.model_path)
    functions = load_listings([listing], config.strict_mnemonics)
    names, X = feature_rows(functions, model.vocabulary, extraction_options(config, model), config.threads)
    frame = pd.DataFrame({"function": names, "predicted": model.predict(X) if names else []})
    scores = model.decision_scores(X) if names else []
    for c, label in enumerate(model.classes):
        frame[f"score_{label}"] = [row[c] for row in scores]
    return frame


def run(args, config: PipelineConfig) -> None:
    frame = predictions_frame(config, args.listing)
    sys.stdout.write(frame.to_csv(index=False, lineterminator="\n", float_format="%.6f"))
    if args.out is not None:
        write_frame(frame, args.out, config.timestamp)
    logger.info(f"Predicted {len(frame)} functions")
