# retypelab/services/rule_miner.py - Class association rules over pattern features
import logging
import re
from itertools import combinations
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from retypelab.core.config import settings
from retypelab.core.errors import RuleMiningError, ValidationError
from retypelab.core.parallel import ordered_map
from retypelab.schemas.dataset import Dataset
from retypelab.schemas.rules import AssociationRule, RuleCard, RuleCheck
from retypelab.schemas.selection import SelectionResult

logger = logging.getLogger(__name__)

CARD_HEADER = "# Return-type rules"
RULE_LINE_RE = re.compile(
    r"^RULE (?P<number>\d+): IF (?P<antecedents>.+) THEN (?P<consequent>\S+(?: \S+)*?) "
    r"\(support=(?P<support>[0-9.eE+-]+), confidence=(?P<confidence>[0-9.eE+-]+)\)$"
)
ANTECEDENT_JOINER = " AND "


def _quote(name: str) -> str:
    return f"<{name}>"


def _rows_with_all(X: np.ndarray, columns: Tuple[int, ...]) -> np.ndarray:
    return np.all(X[:, list(columns)] == 1, axis=1)


def frequent_itemsets(X: np.ndarray, min_count: int, max_size: int, threads: int = 1) -> Dict[Tuple[int, ...], int]:
    """
    Apriori over the columns of X: every column set of at most max_size columns
    whose co-occurrence count reaches min_count.
    """
    counts = X.sum(axis=0, dtype=np.int64)
    level = {(c,): int(counts[c]) for c in range(X.shape[1]) if counts[c] >= min_count}
    frequent = dict(level)
    size = 1
    while level and size < max_size:
        size += 1
        previous = sorted(level)
        candidates = []
        for a, b in combinations(previous, 2):
            if a[:-1] != b[:-1]:
                continue
            candidate = a + (b[-1],)
            # every subset must itself be frequent
            if all(sub in level for sub in combinations(candidate, size - 1)):
                candidates.append(candidate)
        supports = ordered_map(lambda c: int(_rows_with_all(X, c).sum()), candidates, threads)
        level = {}
        for candidate, support in zip(candidates, supports):
            if support < min_count:
                continue
            for sub in combinations(candidate, size - 1):
                assert support <= frequent[sub], "support must not grow with the itemset"
            level[candidate] = support
        frequent.update(level)
    return frequent


def mine_rules(
    dataset: Dataset,
    min_support: Optional[float] = None,
    max_antecedents: Optional[int] = None,
    min_confidence: Optional[float] = None,
    columns: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> List[AssociationRule]:
    """
    Rules IF features THEN label. Antecedent sets come from Apriori over the
    feature columns; a rule is kept when its covered rows (antecedents and label)
    reach min_support and its confidence reaches min_confidence.
    """
    min_support = settings.RULE_MIN_SUPPORT if min_support is None else min_support
    max_antecedents = settings.RULE_MAX_ANTECEDENTS if max_antecedents is None else max_antecedents
    min_confidence = settings.RULE_MIN_CONFIDENCE if min_confidence is None else min_confidence
    if not 0.0 < min_support <= 1.0:
        raise RuleMiningError(f"min_support must lie in (0, 1], got {min_support}")
    if max_antecedents < 1:
        raise RuleMiningError(f"max_antecedents must be at least 1, got {max_antecedents}")
    if dataset.n_rows == 0:
        raise RuleMiningError("Cannot mine rules from an empty dataset")

    columns = list(range(dataset.n_features)) if columns is None else sorted(columns)
    X = dataset.X[:, columns]
    n = dataset.n_rows
    min_count = max(1, int(np.ceil(min_support * n - 1e-9)))
    labels = np.asarray(dataset.labels)

    rules = []
    for itemset, matched in frequent_itemsets(X, min_count, max_antecedents, threads).items():
        hits = _rows_with_all(X, itemset)
        values, counts = np.unique(labels[hits], return_counts=True)
        for label, covered in zip(values.tolist(), counts.tolist()):
            confidence = covered / matched
            if covered < min_count or confidence < min_confidence - 1e-12:
                continue
            rules.append(AssociationRule(
                antecedents=tuple(dataset.vocabulary.names[columns[c]] for c in itemset),
                consequent=label,
                support=covered / n,
                confidence=confidence,
                covered_count=covered,
                match_count=matched,
            ))
    rules.sort(key=AssociationRule.sort_key)
    logger.info(f"Mined {len(rules)} rules from {n} rows and {len(columns)} columns")
    return rules


def preselect_columns(dataset: Dataset, selections: Sequence[SelectionResult]) -> List[int]:
    """Columns every selection kept; the union when they share none."""
    if not selections:
        raise ValidationError("preselect_columns needs at least one selection result")
    sets: List[FrozenSet[str]] = [frozenset(s.feature_names) for s in selections]
    chosen = frozenset.intersection(*sets)
    if not chosen:
        logger.warning("Selected feature sets do not intersect; falling back to their union")
        chosen = frozenset.union(*sets)
    return sorted(dataset.vocabulary.index[name] for name in chosen if name in dataset.vocabulary)


def verify_rule(rule: AssociationRule, dataset: Dataset) -> RuleCheck:
    """Rescan every row matching the antecedents; the first one with another label is the counterexample."""
    unknown = [a for a in rule.antecedents if a not in dataset.vocabulary]
    if unknown:
        raise ValidationError(f"Rule antecedent {unknown[0]!r} is not a dataset feature")
    columns = tuple(dataset.vocabulary.index[a] for a in rule.antecedents)
    matched = np.flatnonzero(_rows_with_all(dataset.X, columns))
    for row in matched:
        if dataset.labels[row] != rule.consequent:
            return RuleCheck(
                holds=False,
                matched_rows=len(matched),
                counterexample_row=int(row),
                counterexample_label=dataset.labels[row],
            )
    return RuleCheck(holds=True, matched_rows=len(matched))


def rule_line(card: RuleCard) -> str:
    rule = card.rule
    antecedents = ANTECEDENT_JOINER.join(_quote(a) for a in rule.antecedents)
    return (
        f"RULE {card.number}: IF {antecedents} THEN {rule.consequent} "
        f"(support={rule.support:.6f}, confidence={rule.confidence:.6f})"
    )


def _prose(card: RuleCard) -> str:
    parts = []
    if card.ret_antecedents:
        parts.append("the return sequence shows " + " and ".join(f"`{a[len('RET: '):]}`" for a in card.ret_antecedents))
    if card.post_antecedents:
        parts.append("the call sites show " + " and ".join(f"`{a[len('POST: '):]}`" for a in card.post_antecedents))
    rule = card.rule
    return (
        f"When {'; '.join(parts)}, the function returns {rule.consequent} "
        f"({rule.covered_count} of {rule.match_count} matching functions, "
        f"{rule.support:.2%} of the dataset)."
    )


def render_rule_cards(rules: Sequence[AssociationRule], provenance: str = "") -> str:
    """One card per rule: the machine line, the antecedents grouped by kind, and a prose line."""
    lines = [CARD_HEADER]
    if provenance:
        lines.append(f"# {provenance}")
    for number, rule in enumerate(rules, start=1):
        card = RuleCard(number=number, rule=rule, provenance=provenance)
        lines.append("")
        lines.append(rule_line(card))
        for title, group in (("RET", card.ret_antecedents), ("POST", card.post_antecedents)):
            for antecedent in group:
                lines.append(f"  {title}  {antecedent}")
        lines.append(f"  {_prose(card)}")
    return "\n".join(lines) + "\n"


def parse_rule_card(block: str) -> RuleCard:
    """Read a card's machine line back into a rule."""
    line = next((l.strip() for l in block.splitlines() if l.strip().startswith("RULE ")), None)
    match = RULE_LINE_RE.match(line or "")
    if match is None:
        raise ValidationError(f"No rule line in card block {block[:60]!r}")
    antecedents = tuple(
        a[1:-1] if a.startswith("<") and a.endswith(">") else a
        for a in match.group("antecedents").split(ANTECEDENT_JOINER)
    )
    support = float(match.group("support"))
    confidence = float(match.group("confidence"))
    return RuleCard(
        number=int(match.group("number")),
        rule=AssociationRule(
            antecedents=antecedents,
            consequent=match.group("consequent"),
            support=support,
            confidence=confidence,
            covered_count=0,
            match_count=0,
        ),
    )


def parse_rule_cards(document: str) -> List[RuleCard]:
    blocks = [b for b in document.split("\n\n") if "RULE " in b]
    return [parse_rule_card(b) for b in blocks]
