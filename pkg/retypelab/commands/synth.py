# retypelab/commands/synth.py - `synth`: write synthetic labeled listings
import logging
from pathlib import Path

from retypelab.core.config import PipelineConfig
from retypelab.schemas.asm import TypeLabel
from retypelab.schemas.synth import SynthConfig
from retypelab.services.corpus_synth import emit_listing, synthesize_corpus, synthesize_programs
from retypelab.services.reports import write_provenance

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="generate a synthetic labeled corpus")
    parser.add_argument("--out", type=Path, help="corpus directory")
    parser.add_argument("--count", type=int, help="functions per return type")
    parser.add_argument("--programs", type=int, help="number of independent programs to write")
    parser.add_argument("--confusable", action="store_true", default=None, help="share templates between bool and char")
    parser.add_argument("--label-rotation", type=int, help="rotate template families across labels")
    parser.add_argument("--anchors", action="store_true", default=None, help="emit return anchor labels")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    return {"corpus_dir": args.out, "programs": args.programs}


def run(args, config: PipelineConfig) -> None:
    updates = {}
    if args.count is not None:
        updates["counts"] = {label: args.count for label in TypeLabel}
    if args.confusable:
        updates["confusable_mode"] = True
    if args.label_rotation is not None:
        updates["label_rotation"] = args.label_rotation
    if args.anchors:
        updates["return_anchors"] = True
    synth = SynthConfig.model_validate({**config.synth.model_dump(), **updates})

    out = Path(config.corpus_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.programs == 1:
        corpora = [synthesize_corpus(synth, config.threads)]
        paths = [out / "corpus.asm"]
    else:
        corpora = synthesize_programs(synth, config.programs, config.threads)
        paths = [out / f"program{p + 1:02d}.asm" for p in range(config.programs)]

    for corpus, path in zip(corpora, paths):
        path.write_text(emit_listing(corpus), encoding="utf-8")
        logger.info(f"Wrote {len(corpus.functions)} functions to {path}")
    write_provenance(config.model_dump(mode="json"), config.report_dir, "synth")
