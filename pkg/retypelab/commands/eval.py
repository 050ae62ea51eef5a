# retypelab/commands/eval.py - `eval`: the three evaluation methods and the dataset-size loop
import logging
from pathlib import Path
from typing import List, Optional, Tuple

from retypelab.core.config import PipelineConfig, settings
from retypelab.core.errors import ValidationError
from retypelab.schemas.dataset import Dataset, FeatureVocabulary
from retypelab.schemas.model import Algorithm
from retypelab.schemas.selection import SelectionResult
from retypelab.services.dataset_builder import project_onto, read_csv
from retypelab.services.evaluation import (
    compare_models,
    converge_dataset_size,
    evaluate_method1,
    evaluate_method2,
    evaluate_method3,
)
from retypelab.services.model_selection import load_selection
from retypelab.services.reports import (
    confusion_frame,
    metrics_table,
    per_class_frame,
    repetitions_frame,
    summarize_method2,
    summarize_method3,
    summarize_repeated,
    trace_frame,
    write_frame,
    write_provenance,
    write_text,
)

from retypelab.commands.common import add_model_flags, model_overrides, options_from, spec_from

logger = logging.getLogger(__name__)

METHODS = ("1", "2", "3", "size")


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="evaluate a classifier specification")
    parser.add_argument("--method", choices=METHODS, help="1 mixed, 2 real-fraction, 3 leave-one-program-out, size")
    parser.add_argument("--dataset", type=Path, help="synthetic (or only) dataset CSV")
    parser.add_argument("--real", type=Path, help="real dataset CSV for methods 1 and 2")
    parser.add_argument("--programs", type=Path, nargs="+", help="one dataset CSV per program for method 3")
    add_model_flags(parser)
    parser.add_argument("--compare", choices=[a.value for a in Algorithm], help="second algorithm to compare against")
    parser.add_argument("--selection", type=Path, help="selection JSON restricting the columns")
    parser.add_argument("--repetitions", type=int)
    parser.add_argument("--start", type=int, default=100, help="size loop: first functions per type")
    parser.add_argument("--step", type=int, default=1000, help="size loop: functions per type added each step")
    parser.add_argument("--max-steps", type=int, default=40, help="size loop: step cap")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    return {
        "eval_method": int(args.method) if args.method in ("1", "2", "3") else None,
        "dataset_path": args.dataset,
        "repetitions": args.repetitions,
        **model_overrides(args),
    }


def _restrict(dataset: Dataset, selection: Optional[SelectionResult]) -> Dataset:
    if selection is None:
        return dataset
    return project_onto(dataset, FeatureVocabulary(names=tuple(selection.feature_names)))


def _name(config: PipelineConfig, algorithm: Optional[str] = None) -> str:
    return algorithm or config.algorithm.value


def run(args, config: PipelineConfig) -> None:
    selection = load_selection(args.selection) if args.selection is not None else None
    method = args.method or str(config.eval_method)
    report_dir = Path(config.report_dir)
    spec = spec_from(config)
    stem = f"eval_method{method}" if method != "size" else "eval_size"

    if method == "size":
        trace = converge_dataset_size(
            config.synth, spec, start=args.start, step=args.step, window=config.cov_window,
            threshold=settings.SIZE_THRESHOLD, max_steps=args.max_steps, scheme=config.scheme,
            options=options_from(config), threads=config.threads,
        )
        write_frame(trace_frame(trace), report_dir / f"{stem}_trace.csv", config.timestamp)
        status = "converged" if trace.converged else "did not converge"
        recommended = f"{trace.recommended_x:.0f}" if trace.recommended_x is not None else "n/a"
        write_text(
            f"model: {_name(config)}\nstop size: {trace.stop_x:.0f} per type ({status})\n"
            f"recommended size: {recommended} per type\n",
            report_dir / f"{stem}_summary.txt", config.timestamp,
        )

    elif method == "3":
        if not args.programs:
            raise ValidationError("Method 3 needs --programs with one dataset per program")
        programs: List[Tuple[str, Dataset]] = [(p.stem, _restrict(read_csv(p), selection)) for p in args.programs]
        result = evaluate_method3(programs, spec, config.seed, config.threads)
        rows = [(f"{_name(config)}@{p.program}", p.metrics) for p in result.programs]
        write_frame(metrics_table(rows, config.scheme), report_dir / f"{stem}_metrics.csv", config.timestamp)
        for p in result.programs:
            write_frame(confusion_frame(p.metrics.classes, p.metrics.confusion),
                        report_dir / f"{stem}_{p.program}_confusion.csv", config.timestamp)
            write_frame(per_class_frame(p.metrics), report_dir / f"{stem}_{p.program}_per_class.csv", config.timestamp)
        write_text(summarize_method3(_name(config), result), report_dir / f"{stem}_summary.txt", config.timestamp)

    else:
        synthetic = _restrict(read_csv(config.dataset_path), selection)
        real = _restrict(read_csv(args.real), selection) if args.real is not None else None

        def evaluate(spec_to_run):
            if method == "2":
                if real is None:
                    raise ValidationError("Method 2 needs --real")
                return evaluate_method2(
                    real, synthetic, spec_to_run, config.seed, window=config.cov_window,
                    threshold=config.method2_threshold, holdout_fraction=config.holdout_fraction,
                    repetitions=config.repetitions, threads=config.threads,
                )
            return evaluate_method1(real, synthetic, spec_to_run, config.seed, config.repetitions,
                                    config.holdout_fraction, config.threads)

        outcome = evaluate(spec)
        repeated = outcome.at_stop if method == "2" else outcome
        rows = [(_name(config), repeated)]
        summary = summarize_method2(_name(config), outcome) if method == "2" else summarize_repeated(_name(config), repeated)
        if method == "2":
            write_frame(trace_frame(outcome.trace), report_dir / f"{stem}_trace.csv", config.timestamp)

        if args.compare:
            other_spec = spec.model_copy(update={"algorithm": Algorithm(args.compare), "hyperparameters": {}})
            other = evaluate(other_spec)
            other_repeated = other.at_stop if method == "2" else other
            rows.append((args.compare, other_repeated))
            verdict = compare_models(repeated, other_repeated)
            summary += f"comparison with {args.compare}: {verdict.value}\n"

        write_frame(repetitions_frame(repeated), report_dir / f"{stem}_repetitions.csv", config.timestamp)
        write_frame(metrics_table(rows, config.scheme), report_dir / f"{stem}_metrics.csv", config.timestamp)
        write_frame(confusion_frame(repeated.classes, repeated.confusion), report_dir / f"{stem}_confusion.csv", config.timestamp)
        write_text(summary, report_dir / f"{stem}_summary.txt", config.timestamp)

    write_provenance(config.model_dump(mode="json"), report_dir, "eval")
    logger.info(f"Evaluation reports written to {report_dir}")
