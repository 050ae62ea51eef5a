# retypelab/schemas/selection.py - Feature selection methods and grid search specs
import itertools
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from retypelab.schemas.model import Algorithm, HYPERPARAMETER_DEFAULTS, coerce_hyperparameter


class SelectionKind(str, Enum):
    SELECT_FROM_MODEL = "select_from_model"
    RECURSIVE_ELIMINATION = "recursive_elimination"


class ImportanceSource(str, Enum):
    RANDOM_FOREST = "random_forest"
    EXTRA_TREES = "extra_trees"


class Threshold(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"


class SelectionMethod(BaseModel):
    kind: SelectionKind
    importance_source: Optional[ImportanceSource] = None
    threshold: Optional[Threshold] = None
    elimination_step_fraction: Optional[float] = None

    @model_validator(mode="after")
    def validate_consistency(self):
        if self.kind == SelectionKind.SELECT_FROM_MODEL:
            if self.importance_source is None or self.threshold is None:
                raise ValueError("select_from_model needs an importance_source and a threshold")
            if self.elimination_step_fraction is not None:
                raise ValueError("select_from_model takes no elimination_step_fraction")
        else:
            if self.threshold is not None:
                raise ValueError("recursive_elimination takes no threshold")
            step = self.elimination_step_fraction
            if step is None or not 0.0 < step <= 1.0:
                raise ValueError("recursive_elimination needs elimination_step_fraction in (0, 1]")
        return self

    @property
    def name(self) -> str:
        if self.kind == SelectionKind.SELECT_FROM_MODEL:
            return f"sfm:{self.importance_source.value}:{self.threshold.value}"
        return f"rfe:{self.elimination_step_fraction:g}"

    @classmethod
    def parse(cls, token: str) -> "SelectionMethod":
        """``rfe``, ``rfe:0.1`` or ``sfm:<random_forest|extra_trees>:<mean|median>``."""
        parts = token.strip().split(":")
        if parts[0] == "rfe":
            step = float(parts[1]) if len(parts) > 1 else 0.1
            return cls(kind=SelectionKind.RECURSIVE_ELIMINATION, elimination_step_fraction=step)
        if parts[0] == "sfm" and len(parts) == 3:
            return cls(
                kind=SelectionKind.SELECT_FROM_MODEL,
                importance_source=ImportanceSource(parts[1]),
                threshold=Threshold(parts[2]),
            )
        raise ValueError(f"Unknown selection method {token!r}")


def default_selection_menu() -> List[SelectionMethod]:
    """Recursive elimination plus select-from-model over both forests and both thresholds."""
    menu = [SelectionMethod(kind=SelectionKind.RECURSIVE_ELIMINATION, elimination_step_fraction=0.1)]
    for source in ImportanceSource:
        for threshold in Threshold:
            menu.append(SelectionMethod(
                kind=SelectionKind.SELECT_FROM_MODEL,
                importance_source=source,
                threshold=threshold,
            ))
    return menu


class MethodEvaluation(BaseModel):
    method: SelectionMethod
    n_features: int
    fold_accuracies: List[float]
    cv_accuracy: float


class SelectionResult(BaseModel):
    method: SelectionMethod
    selected: List[int]
    cv_accuracy: float
    fold_accuracies: List[float]
    evaluated: List[MethodEvaluation] = []
    feature_names: List[str] = []

    @field_validator("selected")
    @classmethod
    def validate_selected(cls, v):
        if not v:
            raise ValueError("selected feature set must not be empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("selected indices must be sorted and unique")
        return v

    @property
    def n_features(self) -> int:
        return len(self.selected)


class GridSpec(BaseModel):
    """Candidate values per algorithm and hyperparameter; points are the cartesian product."""
    grids: Dict[Algorithm, Dict[str, List[Any]]]
    cap: int = Field(default=64, ge=1)

    @model_validator(mode="after")
    def validate_grids(self):
        for algorithm, grid in self.grids.items():
            allowed = HYPERPARAMETER_DEFAULTS[algorithm]
            for name, candidates in grid.items():
                if name not in allowed:
                    raise ValueError(f"{algorithm.value} has no hyperparameter {name!r}")
                if not candidates:
                    raise ValueError(f"Grid for {algorithm.value}.{name} is empty")
        return self

    def size(self, algorithm: Algorithm) -> int:
        size = 1
        for candidates in self.grids.get(algorithm, {}).values():
            size *= len(candidates)
        return size

    def points(self, algorithm: Algorithm) -> List[Dict[str, Any]]:
        grid = self.grids.get(algorithm, {})
        names = list(grid)
        return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]

    def with_values(self, algorithm: Algorithm, name: str, raw: str) -> "GridSpec":
        grids = {a: dict(g) for a, g in self.grids.items()}
        grids.setdefault(algorithm, {})[name] = [coerce_hyperparameter(name, t) for t in raw.split(",")]
        return GridSpec(grids=grids, cap=self.cap)


def default_grid(cap: int = 64) -> GridSpec:
    return GridSpec(
        grids={
            Algorithm.DECISION_TREE: {"max_depth": [8, 12, None]},
            Algorithm.RANDOM_FOREST: {"n_trees": [50, 100]},
            Algorithm.EXTRA_TREES: {"n_trees": [50, 100]},
            Algorithm.GRADIENT_BOOSTING: {"rounds": [100, 200], "shrinkage": [0.1, 0.3]},
            Algorithm.BERNOULLI_NB: {"alpha": [0.5, 1.0]},
            Algorithm.KNN: {"k": [1, 5, 11]},
            Algorithm.LOGISTIC_REGRESSION: {"l2": [1e-4, 1e-2]},
            Algorithm.PERCEPTRON: {"epochs": [20, 50]},
        },
        cap=cap,
    )


class GridPoint(BaseModel):
    params: Dict[str, Any]
    fold_accuracies: List[float]
    mean_accuracy: float


class GridSearchResult(BaseModel):
    algorithm: Algorithm
    best_params: Dict[str, Any]
    best_accuracy: float
    table: List[GridPoint]
