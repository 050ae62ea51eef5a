# retypelab/services/model_selection.py - Stratified splits, wrapper feature selection and grid search
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from retypelab.core.config import settings
from retypelab.core.errors import (
    ClassTooSmallError,
    FeatureSelectionError,
    GridCapExceededError,
    ModelFileError,
    ValidationError,
)
from retypelab.core.parallel import ordered_map
from retypelab.schemas.dataset import Dataset
from retypelab.schemas.model import TREE_ALGORITHMS, Algorithm, ModelSpec
from retypelab.schemas.selection import (
    GridPoint,
    GridSearchResult,
    GridSpec,
    ImportanceSource,
    MethodEvaluation,
    SelectionKind,
    SelectionMethod,
    SelectionResult,
    Threshold,
)
from retypelab.services.classifiers import feature_importances, train

logger = logging.getLogger(__name__)

Split = Tuple[np.ndarray, np.ndarray]


def _class_groups(labels: Sequence[str]) -> Dict[str, np.ndarray]:
    labels = np.asarray(labels)
    return {c: np.flatnonzero(labels == c) for c in sorted(set(labels.tolist()))}


def stratified_kfold(labels: Sequence[str], k: int, seed: int) -> List[Split]:
    """
    k (train, test) partitions. Rows of each class are shuffled, laid out class
    after class and dealt to folds round-robin, so per-class fold counts differ by
    at most one.
    """
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}")
    groups = _class_groups(labels)
    for label, rows in groups.items():
        if len(rows) < k:
            raise ClassTooSmallError(f"Class {label!r} has {len(rows)} rows, fewer than {k} folds")

    rng = np.random.default_rng(seed)
    ordered = np.concatenate([rng.permutation(rows) for rows in groups.values()]) if groups else np.array([], dtype=np.int64)
    fold_of = np.empty(len(ordered), dtype=np.int64)
    fold_of[ordered] = np.arange(len(ordered)) % k

    splits = []
    for fold in range(k):
        test = np.flatnonzero(fold_of == fold)
        train_rows = np.flatnonzero(fold_of != fold)
        splits.append((train_rows, test))
    return splits


def stratified_shuffle_split(labels: Sequence[str], test_fraction: float, seed: int) -> Split:
    """One stratified train/test split; every class keeps at least one row on each side."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_rows, test_rows = [], []
    for label, rows in _class_groups(labels).items():
        if len(rows) < 2:
            raise ClassTooSmallError(f"Class {label!r} has {len(rows)} row, too few to stratify")
        shuffled = rng.permutation(rows)
        n_test = min(len(rows) - 1, max(1, int(round(len(rows) * test_fraction))))
        test_rows.append(shuffled[:n_test])
        train_rows.append(shuffled[n_test:])
    return np.sort(np.concatenate(train_rows)), np.sort(np.concatenate(test_rows))


def accuracy_on(spec: ModelSpec, train_set: Dataset, test_set: Dataset) -> float:
    model = train(spec, train_set)
    predicted = model.predict(test_set.X)
    return float(np.mean([p == t for p, t in zip(predicted, test_set.labels)]))


def cross_validate(
    dataset: Dataset,
    spec: ModelSpec,
    k: int = 3,
    seed: int = 0,
    columns: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> List[float]:
    """Per-fold accuracies of spec under stratified k-fold CV, optionally on a column subset."""
    data = dataset.take_columns(columns) if columns is not None else dataset
    folds = stratified_kfold(data.labels, k, seed)
    return ordered_map(
        lambda split: accuracy_on(spec, data.take_rows(split[0]), data.take_rows(split[1])),
        folds,
        threads,
    )


def _importance_spec(source: ImportanceSource, seed: int) -> ModelSpec:
    algorithm = Algorithm.RANDOM_FOREST if source == ImportanceSource.RANDOM_FOREST else Algorithm.EXTRA_TREES
    return ModelSpec(
        algorithm=algorithm,
        hyperparameters={"n_trees": settings.SELECTION_IMPORTANCE_TREES},
        rng_seed=seed,
    )


def _select_from_model(dataset: Dataset, method: SelectionMethod, seed: int, threads: int) -> List[int]:
    importances = feature_importances(train(_importance_spec(method.importance_source, seed), dataset, threads))
    cut = importances.mean() if method.threshold == Threshold.MEAN else float(np.median(importances))
    return np.flatnonzero(importances >= cut).tolist()


def _recursive_elimination(
    dataset: Dataset,
    spec: ModelSpec,
    method: SelectionMethod,
    k: int,
    seed: int,
    threads: int,
) -> Tuple[List[int], List[float]]:
    """Drop the least important fraction per round; keep the set with the best CV accuracy."""
    if spec.algorithm in TREE_ALGORITHMS:
        ranker = spec
    else:
        ranker = _importance_spec(ImportanceSource.RANDOM_FOREST, seed)
        logger.debug(f"{spec.algorithm.value} has no importances; ranking features with random_forest")

    current = np.arange(dataset.n_features)
    best: Tuple[float, List[int], List[float]] = (-1.0, [], [])
    while len(current):
        folds = cross_validate(dataset, spec, k, seed, current, threads)
        score = float(np.mean(folds))
        # ties favour the later, smaller set
        if score >= best[0]:
            best = (score, current.tolist(), folds)
        if len(current) == 1:
            break
        importances = feature_importances(train(ranker, dataset.take_columns(current), threads))
        drop = max(1, int(method.elimination_step_fraction * len(current)))
        order = np.argsort(importances, kind="stable")
        current = np.sort(current[order[drop:]])
    return best[1], best[2]


def evaluate_method(
    dataset: Dataset,
    spec: ModelSpec,
    method: SelectionMethod,
    k: int = 3,
    seed: int = 0,
    threads: int = 1,
) -> Optional[Tuple[List[int], List[float]]]:
    """Selected columns and fold accuracies, or None when the method selects nothing."""
    if method.kind == SelectionKind.SELECT_FROM_MODEL:
        selected = _select_from_model(dataset, method, seed, threads)
        if not selected:
            return None
        return selected, cross_validate(dataset, spec, k, seed, selected, threads)
    selected, folds = _recursive_elimination(dataset, spec, method, k, seed, threads)
    return (selected, folds) if selected else None


def select_features(
    dataset: Dataset,
    spec: ModelSpec,
    methods: Sequence[SelectionMethod],
    seed: int = 0,
    k: int = 3,
    tie_tolerance: Optional[float] = None,
    threads: int = 1,
) -> SelectionResult:
    """
    Run every selection method wrapped around spec and keep the best one.

    Methods whose mean CV accuracy is within tie_tolerance of the best compete on
    feature count; the smaller set wins, then the earlier method.
    """
    if not methods:
        raise ValidationError("select_features needs at least one selection method")
    if dataset.n_features == 0:
        raise FeatureSelectionError("Cannot select features from an empty vocabulary")
    tolerance = settings.SELECTION_TIE_TOLERANCE if tie_tolerance is None else tie_tolerance

    evaluated: List[Tuple[SelectionMethod, List[int], List[float]]] = []
    for method in methods:
        outcome = evaluate_method(dataset, spec, method, k, seed, threads)
        if outcome is None:
            logger.warning(f"Selection method {method.name} selected no features")
            continue
        selected, folds = outcome
        logger.info(f"{method.name}: {len(selected)} features, CV accuracy {np.mean(folds):.4f}")
        evaluated.append((method, selected, folds))
    if not evaluated:
        raise FeatureSelectionError("Every selection method produced an empty feature set")

    if len(evaluated) == 1:
        winner = evaluated[0]
    else:
        best = max(float(np.mean(folds)) for _, _, folds in evaluated)
        contenders = [e for e in evaluated if best - float(np.mean(e[2])) < tolerance]
        winner = min(contenders, key=lambda e: (len(e[1]), -float(np.mean(e[2]))))

    method, selected, folds = winner
    return SelectionResult(
        method=method,
        selected=selected,
        cv_accuracy=float(np.mean(folds)),
        fold_accuracies=folds,
        evaluated=[
            MethodEvaluation(method=m, n_features=len(s), fold_accuracies=f, cv_accuracy=float(np.mean(f)))
            for m, s, f in evaluated
        ],
        feature_names=[dataset.vocabulary.names[c] for c in selected],
    )


def apply_selection(dataset: Dataset, selection: SelectionResult) -> Dataset:
    """Keep the selected columns, located by name so the selection survives reordering."""
    missing = [n for n in selection.feature_names if n not in dataset.vocabulary]
    if missing:
        raise ValidationError(f"Selected feature {missing[0]!r} is not in the dataset vocabulary")
    return dataset.take_columns(sorted(dataset.vocabulary.index[n] for n in selection.feature_names))


def grid_search(
    dataset: Dataset,
    algorithm: Algorithm,
    grid: GridSpec,
    seed: int = 0,
    k: int = 3,
    threads: int = 1,
) -> GridSearchResult:
    """Exhaustive CV over the grid's cartesian product; ties go to the first listed point."""
    size = grid.size(algorithm)
    if size > grid.cap:
        raise GridCapExceededError(f"Grid for {algorithm.value} has {size} points, cap is {grid.cap}")
    if algorithm not in grid.grids:
        logger.warning(f"Grid has no entry for {algorithm.value}; scoring its default hyperparameters only")
    points = grid.points(algorithm)
    folds = stratified_kfold(dataset.labels, k, seed)

    def run(item):
        params, (train_rows, test_rows) = item
        spec = ModelSpec(algorithm=algorithm, hyperparameters=params, rng_seed=seed)
        return accuracy_on(spec, dataset.take_rows(train_rows), dataset.take_rows(test_rows))

    jobs = [(params, split) for params in points for split in folds]
    scores = ordered_map(run, jobs, threads)

    table = []
    for p, params in enumerate(points):
        fold_scores = scores[p * k:(p + 1) * k]
        table.append(GridPoint(params=params, fold_accuracies=fold_scores, mean_accuracy=float(np.mean(fold_scores))))

    best = table[0]
    for point in table[1:]:
        if point.mean_accuracy > best.mean_accuracy:
            best = point
    logger.info(f"Grid search over {len(points)} {algorithm.value} points: best {best.params} at {best.mean_accuracy:.4f}")
    return GridSearchResult(
        algorithm=algorithm,
        best_params=best.params,
        best_accuracy=best.mean_accuracy,
        table=table,
    )


def save_selection(selection: SelectionResult, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(selection.model_dump_json(indent=2), encoding="utf-8")


def load_selection(path: Path) -> SelectionResult:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"Selection file {path} not found")
    try:
        return SelectionResult(**json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise ModelFileError(f"Selection file {path} is malformed: {e}")
