# tests/test_model_selection.py - Stratified splits, feature selection and grid search tests
import logging
from collections import Counter

import numpy as np
import pytest

from retypelab.core.errors import ClassTooSmallError, GridCapExceededError, ValidationError
from retypelab.schemas.model import Algorithm, ModelSpec
from retypelab.schemas.selection import GridSpec, SelectionMethod, SelectionResult, default_selection_menu
from retypelab.services.model_selection import (
    apply_selection,
    cross_validate,
    grid_search,
    load_selection,
    save_selection,
    select_features,
    stratified_kfold,
    stratified_shuffle_split,
)

TREE = ModelSpec(algorithm=Algorithm.DECISION_TREE, rng_seed=0)


def test_kfold_partitions_rows():
    """Test folds are disjoint, cover every row, and train on the complement."""
    labels = ["a"] * 4 + ["b"] * 4
    splits = stratified_kfold(labels, 3, seed=1)

    assert [len(test) for _, test in splits] == [3, 3, 2]
    assert sorted(np.concatenate([test for _, test in splits]).tolist()) == list(range(8))
    for train_rows, test in splits:
        assert set(train_rows) | set(test) == set(range(8))
        assert not set(train_rows) & set(test)


def test_kfold_is_stratified():
    """Test per-class fold counts differ by at most one."""
    labels = ["a"] * 10 + ["b"] * 7 + ["c"] * 5
    splits = stratified_kfold(labels, 4, seed=3)

    for label in "abc":
        counts = [sum(labels[i] == label for i in test) for _, test in splits]
        assert max(counts) - min(counts) <= 1


def test_kfold_depends_only_on_seed():
    labels = ["a"] * 6 + ["b"] * 6

    first = stratified_kfold(labels, 3, seed=5)
    second = stratified_kfold(labels, 3, seed=5)

    assert all(np.array_equal(a[1], b[1]) for a, b in zip(first, second))


def test_kfold_needs_two_folds():
    with pytest.raises(ValidationError):
        stratified_kfold(["a", "b"], 1, seed=0)


def test_kfold_class_too_small():
    with pytest.raises(ClassTooSmallError):
        stratified_kfold(["a"] * 5 + ["b"] * 2, 3, seed=0)


def test_shuffle_split():
    """Test a stratified holdout keeps the class proportions."""
    labels = ["a"] * 10 + ["b"] * 10
    train_rows, test_rows = stratified_shuffle_split(labels, 0.3, seed=2)

    assert Counter(labels[i] for i in test_rows) == {"a": 3, "b": 3}
    assert len(train_rows) == 14
    assert not set(train_rows) & set(test_rows)


@pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
def test_shuffle_split_bad_fraction(fraction):
    with pytest.raises(ValidationError):
        stratified_shuffle_split(["a", "a", "b", "b"], fraction, seed=0)


def test_cross_validate(toy_dataset):
    """Test one accuracy per fold, perfect on separable data."""
    assert cross_validate(toy_dataset, TREE, k=3, seed=0) == [1.0, 1.0, 1.0]


def test_cross_validate_on_noise_column(toy_dataset):
    """Test a column subset restricts what the classifier sees."""
    scores = cross_validate(toy_dataset, TREE, k=3, seed=0, columns=[3])

    assert np.mean(scores) < 1.0


def test_recursive_elimination_keeps_smallest_perfect_set(toy_dataset):
    """Test elimination drops the noise column, then keeps two indicator columns."""
    result = select_features(toy_dataset, TREE, [SelectionMethod.parse("rfe:0.25")], seed=0)

    assert result.n_features == 2
    assert 3 not in result.selected
    assert result.cv_accuracy == 1.0
    assert result.feature_names == [toy_dataset.vocabulary.names[c] for c in result.selected]


def test_select_from_model_drops_noise(toy_dataset):
    result = select_features(toy_dataset, TREE, [SelectionMethod.parse("sfm:random_forest:mean")], seed=0)

    assert 3 not in result.selected
    assert result.cv_accuracy == 1.0


def test_select_features_compares_methods(toy_dataset):
    """Test every method is reported and ties go to the smaller set."""
    methods = [SelectionMethod.parse("sfm:extra_trees:median"), SelectionMethod.parse("rfe:0.25")]
    result = select_features(toy_dataset, TREE, methods, seed=0, tie_tolerance=0.01)

    assert len(result.evaluated) == 2
    assert result.n_features == min(e.n_features for e in result.evaluated)
    assert result.cv_accuracy == 1.0


def test_select_features_needs_methods(toy_dataset):
    with pytest.raises(ValidationError):
        select_features(toy_dataset, TREE, [])


@pytest.mark.parametrize("token, name", [
    ("rfe", "rfe:0.1"),
    ("rfe:0.5", "rfe:0.5"),
    ("sfm:extra_trees:median", "sfm:extra_trees:median"),
])
def test_parse_selection_method(token, name):
    assert SelectionMethod.parse(token).name == name


@pytest.mark.parametrize("token", ["sfm:random_forest", "rfe:0", "boruta", "sfm:svm:mean"])
def test_parse_bad_selection_method(token):
    with pytest.raises(ValueError):
        SelectionMethod.parse(token)


def test_default_menu():
    assert [m.name for m in default_selection_menu()] == [
        "rfe:0.1",
        "sfm:random_forest:mean",
        "sfm:random_forest:median",
        "sfm:extra_trees:mean",
        "sfm:extra_trees:median",
    ]


def test_apply_selection_by_name(toy_dataset):
    """Test selections locate columns by feature name."""
    names = toy_dataset.vocabulary.names
    selection = SelectionResult(
        method=SelectionMethod.parse("rfe"),
        selected=[0, 2],
        cv_accuracy=1.0,
        fold_accuracies=[1.0],
        feature_names=[names[2], names[0]],
    )
    reduced = apply_selection(toy_dataset, selection)

    assert reduced.vocabulary.names == (names[0], names[2])
    assert reduced.X.tolist() == toy_dataset.X[:, [0, 2]].tolist()


def test_apply_selection_unknown_feature(toy_dataset):
    selection = SelectionResult(
        method=SelectionMethod.parse("rfe"),
        selected=[0],
        cv_accuracy=1.0,
        fold_accuracies=[1.0],
        feature_names=["RET: nowhere"],
    )

    with pytest.raises(ValidationError):
        apply_selection(toy_dataset, selection)


def test_selection_file_round_trip(tmp_path, toy_dataset):
    result = select_features(toy_dataset, TREE, [SelectionMethod.parse("rfe:0.25")], seed=0)
    path = tmp_path / "selection.json"
    save_selection(result, path)

    assert load_selection(path) == result


def test_missing_selection_file(tmp_path):
    with pytest.raises(ValidationError):
        load_selection(tmp_path / "absent.json")


def test_grid_search(toy_dataset):
    """Test every grid point is scored and the best one reported."""
    grid = GridSpec(grids={Algorithm.KNN: {"k": [1, 3]}})
    result = grid_search(toy_dataset, Algorithm.KNN, grid, seed=0)

    assert [p.params for p in result.table] == [{"k": 1}, {"k": 3}]
    assert all(len(p.fold_accuracies) == 3 for p in result.table)
    assert result.best_params == {"k": 1}
    assert result.best_accuracy == 1.0


def test_grid_without_entries_is_defaults(toy_dataset, caplog):
    """Test an algorithm missing from the grid is scored at its defaults with a warning."""
    caplog.set_level(logging.WARNING, logger="retypelab.services.model_selection")
    result = grid_search(toy_dataset, Algorithm.DECISION_TREE, GridSpec(grids={}), seed=0)

    assert [p.params for p in result.table] == [{}]
    assert "no entry for decision_tree" in caplog.text


def test_grid_with_entry_does_not_warn(toy_dataset, caplog):
    caplog.set_level(logging.WARNING, logger="retypelab.services.model_selection")
    grid_search(toy_dataset, Algorithm.KNN, GridSpec(grids={Algorithm.KNN: {"k": [1]}}), seed=0)

    assert "no entry" not in caplog.text


def test_grid_cap(toy_dataset):
    grid = GridSpec(grids={Algorithm.KNN: {"k": [1, 3, 5]}}, cap=2)

    with pytest.raises(GridCapExceededError):
        grid_search(toy_dataset, Algorithm.KNN, grid)


def test_grid_with_values():
    """Test overriding one grid axis from a comma-separated string."""
    grid = GridSpec(grids={}).with_values(Algorithm.DECISION_TREE, "max_depth", "4,none")

    assert grid.points(Algorithm.DECISION_TREE) == [{"max_depth": 4}, {"max_depth": None}]


def test_grid_unknown_hyperparameter():
    with pytest.raises(ValueError):
        GridSpec(grids={Algorithm.KNN: {"depth": [1]}})
