# retypelab/commands/build.py - `build`: listings to a dataset CSV
import logging
from pathlib import Path

from retypelab.core.config import PipelineConfig
from retypelab.core.errors import ValidationError
from retypelab.services.classifiers import load_model
from retypelab.services.dataset_builder import build_from_functions, project_onto, prune_rare_features, write_csv
from retypelab.services.reports import write_provenance

from retypelab.commands.common import load_listings, options_from, scheme_choices

logger = logging.getLogger(__name__)

_ANCHOR_MODES = {"auto": None, "on": True, "off": False}


def register(subparsers) -> None:
    parser = subparsers.add_parser("build", help="extract patterns and write the dataset CSV")
    parser.add_argument("listings", nargs="*", type=Path, help="listing files (default: every .asm in the corpus dir)")
    parser.add_argument("--out", type=Path, help="dataset CSV path")
    parser.add_argument("--scheme", choices=scheme_choices())
    parser.add_argument("--no-post", action="store_true", help="skip POST-CALL features")
    parser.add_argument("--no-advanced", action="store_true", help="skip discriminator features")
    parser.add_argument("--anchor-mode", choices=sorted(_ANCHOR_MODES))
    parser.add_argument("--min-support-rows", type=int, help="drop features seen in fewer rows")
    parser.add_argument("--vocabulary", type=Path, metavar="MODEL", help="express rows in a model's vocabulary instead")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    values = {
        "dataset_path": args.out,
        "scheme": args.scheme,
        "min_support_rows": args.min_support_rows,
        "include_post": False if args.no_post else None,
        "include_advanced": False if args.no_advanced else None,
    }
    if args.anchor_mode is not None and _ANCHOR_MODES[args.anchor_mode] is not None:
        values["anchor_mode"] = _ANCHOR_MODES[args.anchor_mode]
    return values


def run(args, config: PipelineConfig) -> None:
    paths = list(args.listings) or sorted(Path(config.corpus_dir).glob("*.asm"))
    if not paths:
        raise ValidationError(f"No listings given and none found in {config.corpus_dir}")
    functions = load_listings(paths, config.strict_mnemonics)
    dataset = build_from_functions(functions, config.scheme, options_from(config), config.threads)
    if args.vocabulary is not None:
        dataset = project_onto(dataset, load_model(args.vocabulary).vocabulary)
    elif config.min_support_rows > 1:
        dataset = prune_rare_features(dataset, config.min_support_rows)
    write_csv(dataset, config.dataset_path)
    write_provenance(config.model_dump(mode="json"), config.report_dir, "build")
