# tests/test_rule_miner.py - Apriori, class association rule and rule card tests
from itertools import combinations

import numpy as np
import pytest

from retypelab.core.errors import RuleMiningError, ValidationError
from retypelab.schemas.rules import AssociationRule
from retypelab.schemas.selection import SelectionMethod, SelectionResult
from retypelab.services.rule_miner import (
    frequent_itemsets,
    mine_rules,
    parse_rule_card,
    parse_rule_cards,
    preselect_columns,
    render_rule_cards,
    verify_rule,
)

AL = "RET: mov al, <lit> | callee_epilogue"
EAX = "RET: mov eax, <lit> | callee_epilogue"
UNUSED = "POST: dest_class(unused)"
PUSH = "RET: push <reg> | callee_epilogue"


def selection(*names):
    return SelectionResult(
        method=SelectionMethod.parse("rfe"),
        selected=list(range(len(names))),
        cv_accuracy=1.0,
        fold_accuracies=[1.0],
        feature_names=list(names),
    )


def test_frequent_itemsets_match_brute_force():
    """Test Apriori finds exactly the column sets a full enumeration finds."""
    rng = np.random.default_rng(4)
    X = (rng.random((40, 6)) < 0.5).astype(np.uint8)

    expected = {}
    for size in range(1, 4):
        for columns in combinations(range(6), size):
            count = int(np.all(X[:, list(columns)] == 1, axis=1).sum())
            if count >= 5:
                expected[columns] = count

    assert frequent_itemsets(X, min_count=5, max_size=3) == expected


def test_frequent_itemsets_threads_agree():
    rng = np.random.default_rng(5)
    X = (rng.random((30, 8)) < 0.4).astype(np.uint8)

    assert frequent_itemsets(X, 3, 3, threads=1) == frequent_itemsets(X, 3, 3, threads=4)


def test_mine_rules(toy_dataset):
    """Test each indicator column yields an exact rule and the noise column none."""
    rules = mine_rules(toy_dataset, min_support=0.25, max_antecedents=2, min_confidence=1.0)

    assert [(r.antecedents, r.consequent) for r in rules] == [
        ((UNUSED,), "void"),
        ((AL,), "bool"),
        ((EAX,), "int"),
    ]
    assert all(r.support == pytest.approx(1 / 3) and r.confidence == 1.0 for r in rules)
    assert all(r.covered_count == r.match_count == 4 for r in rules)


def test_mine_rules_lower_support_adds_pairs(toy_dataset):
    """Test two-feature rules appear once their covered rows reach the support."""
    rules = mine_rules(toy_dataset, min_support=2 / 12, max_antecedents=2, min_confidence=1.0)

    assert ((AL, PUSH), "bool") in [(r.antecedents, r.consequent) for r in rules]
    assert [len(r.antecedents) for r in rules] == sorted(len(r.antecedents) for r in rules)


def test_mine_rules_confidence(toy_dataset):
    """Test rules below the confidence threshold are dropped."""
    rules = mine_rules(toy_dataset, min_support=1 / 12, max_antecedents=1, min_confidence=0.3)

    assert ((PUSH,), "int") in [(r.antecedents, r.consequent) for r in rules]
    assert all(r.confidence >= 0.3 for r in rules)


def test_mine_rules_on_columns(toy_dataset):
    """Test mining only looks at the given columns."""
    assert mine_rules(toy_dataset, min_support=0.1, columns=[3]) == []


@pytest.mark.parametrize("support", [0.0, -0.1, 1.5])
def test_mine_rules_bad_support(toy_dataset, support):
    with pytest.raises(RuleMiningError):
        mine_rules(toy_dataset, min_support=support)


def test_mined_rules_verify(small_dataset):
    """Test every mined exact rule survives a rescan of the dataset."""
    rules = mine_rules(small_dataset, min_support=0.05, max_antecedents=2, min_confidence=1.0)

    assert rules
    for rule in rules:
        check = verify_rule(rule, small_dataset)
        assert check.holds
        assert check.matched_rows == rule.match_count


@pytest.mark.parametrize("antecedent, label", [
    ("POST: caller_epilogue | cwde", "short"),
    ("POST: fp_width(dword)", "float"),
    ("POST: fp_width(qword)", "double"),
    ("RET: lea_into_eax", "pointer"),
])
def test_planted_rules_recovered(small_dataset, antecedent, label):
    """Test idioms emitted for a single type come back as exact rules."""
    rules = mine_rules(small_dataset, min_support=0.01, max_antecedents=1, min_confidence=1.0)
    found = [r for r in rules if r.antecedents == (antecedent,)]

    assert [r.consequent for r in found] == [label]
    assert found[0].confidence == 1.0
    assert found[0].support > 0
    assert verify_rule(found[0], small_dataset).counterexample_row is None


def test_verify_rule_counterexample(toy_dataset):
    """Test a false rule reports the first matching row with another label."""
    rule = AssociationRule(
        antecedents=(AL,), consequent="int", support=0.3, confidence=1.0, covered_count=4, match_count=4,
    )
    check = verify_rule(rule, toy_dataset)

    assert not check.holds
    assert check.counterexample_row == 0
    assert check.counterexample_label == "bool"


def test_verify_rule_unknown_feature(toy_dataset):
    rule = AssociationRule(
        antecedents=("RET: nowhere",), consequent="int", support=0.1, confidence=1.0, covered_count=1, match_count=1,
    )

    with pytest.raises(ValidationError):
        verify_rule(rule, toy_dataset)


def test_preselect_intersection(toy_dataset):
    assert preselect_columns(toy_dataset, [selection(AL, EAX, UNUSED), selection(EAX, AL)]) == [0, 1]


def test_preselect_union_fallback(toy_dataset):
    """Test disjoint selections fall back to their union."""
    assert preselect_columns(toy_dataset, [selection(UNUSED), selection(AL)]) == [0, 2]


def test_rule_cards_round_trip(toy_dataset):
    """Test rule lines parse back to the same antecedents, consequent and scores."""
    rules = mine_rules(toy_dataset, min_support=2 / 12, max_antecedents=2, min_confidence=1.0)
    cards = parse_rule_cards(render_rule_cards(rules, provenance="toy"))

    assert [c.number for c in cards] == list(range(1, len(rules) + 1))
    for card, rule in zip(cards, rules):
        assert card.rule.antecedents == rule.antecedents
        assert card.rule.consequent == rule.consequent
        assert card.rule.support == pytest.approx(rule.support, abs=1e-6)


def test_rule_card_layout():
    """Test a card groups antecedents by kind and explains the rule."""
    rule = AssociationRule(
        antecedents=(UNUSED, "RET: fp_width(qword)"),
        consequent="long long",
        support=0.25,
        confidence=1.0,
        covered_count=5,
        match_count=5,
    )
    document = render_rule_cards([rule])

    assert "RULE 1: IF <POST: dest_class(unused)> AND <RET: fp_width(qword)> THEN long long " \
        "(support=0.250000, confidence=1.000000)" in document
    assert "  RET  RET: fp_width(qword)" in document
    assert "  POST  POST: dest_class(unused)" in document
    assert "the function returns long long" in document
    assert parse_rule_card(document).rule.consequent == "long long"


def test_parse_card_without_rule_line():
    with pytest.raises(ValidationError):
        parse_rule_card("just prose")
