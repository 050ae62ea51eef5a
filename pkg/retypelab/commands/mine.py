# retypelab/commands/mine.py - `mine`: association rules rendered as rule cards
import logging
from pathlib import Path

from retypelab.core.config import PipelineConfig
from retypelab.services.dataset_builder import read_csv
from retypelab.services.model_selection import load_selection
from retypelab.services.reports import write_provenance, write_text
from retypelab.services.rule_miner import mine_rules, preselect_columns, render_rule_cards, verify_rule

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("mine", help="mine return-type rules from a dataset")
    parser.add_argument("--dataset", type=Path, help="dataset CSV")
    parser.add_argument("--selection", type=Path, nargs="*", default=[], help="selection JSON files to intersect")
    parser.add_argument("--min-support", type=float)
    parser.add_argument("--max-antecedents", type=int)
    parser.add_argument("--min-confidence", type=float)
    parser.add_argument("--out", type=Path, help="rule card document (default: <report_dir>/rules.md)")
    parser.set_defaults(handler=run, overrides=overrides)


def overrides(args) -> dict:
    return {
        "dataset_path": args.dataset,
        "min_support": args.min_support,
        "max_antecedents": args.max_antecedents,
        "min_confidence": args.min_confidence,
    }


def run(args, config: PipelineConfig) -> None:
    dataset = read_csv(config.dataset_path)
    columns = None
    if args.selection:
        columns = preselect_columns(dataset, [load_selection(p) for p in args.selection])
    rules = mine_rules(dataset, config.min_support, config.max_antecedents, config.min_confidence,
                       columns, config.threads)

    for rule in rules:
        if rule.confidence == 1.0:
            check = verify_rule(rule, dataset)
            if not check.holds:
                logger.warning(f"Rule {rule.antecedents} -> {rule.consequent} fails at row {check.counterexample_row}")

    provenance = (
        f"dataset {config.dataset_path} vocabulary {dataset.vocabulary.fingerprint()} seed {config.seed}"
    )
    out = args.out or Path(config.report_dir) / "rules.md"
    write_text(render_rule_cards(rules, provenance), out, config.timestamp)
    write_provenance(config.model_dump(mode="json"), config.report_dir, "mine")
    logger.info(f"Wrote {len(rules)} rule cards to {out}")
