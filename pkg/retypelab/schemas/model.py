# retypelab/schemas/model.py - Classifier specifications and hyperparameter ranges
import math
from enum import Enum
from typing import Any, Callable, Dict, Optional

from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class Algorithm(str, Enum):
    DECISION_TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"
    EXTRA_TREES = "extra_trees"
    GRADIENT_BOOSTING = "gradient_boosting"
    BERNOULLI_NB = "bernoulli_nb"
    KNN = "knn"
    LOGISTIC_REGRESSION = "logistic_regression"
    PERCEPTRON = "perceptron"


TREE_ALGORITHMS = frozenset({
    Algorithm.DECISION_TREE,
    Algorithm.RANDOM_FOREST,
    Algorithm.EXTRA_TREES,
    Algorithm.GRADIENT_BOOSTING,
})

HYPERPARAMETER_DEFAULTS: Dict[Algorithm, Dict[str, Any]] = {
    Algorithm.DECISION_TREE: {"max_depth": None, "min_samples_split": 2, "feature_subsample": "all"},
    Algorithm.RANDOM_FOREST: {
        "n_trees": 100, "max_depth": 12, "min_samples_split": 2,
        "feature_subsample": "sqrt", "bootstrap": True,
    },
    Algorithm.EXTRA_TREES: {
        "n_trees": 100, "max_depth": 12, "min_samples_split": 2,
        "feature_subsample": "sqrt", "bootstrap": False,
    },
    Algorithm.GRADIENT_BOOSTING: {"rounds": 100, "shrinkage": 0.1, "max_depth": 12, "min_samples_split": 2},
    Algorithm.BERNOULLI_NB: {"alpha": 1.0},
    Algorithm.KNN: {"k": 5},
    Algorithm.LOGISTIC_REGRESSION: {"l2": 1e-4, "learning_rate": 0.1, "epochs": 500, "tol": 1e-6},
    Algorithm.PERCEPTRON: {"epochs": 50, "learning_rate": 1.0},
}


def _positive_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def _depth(v):
    return v is None or _positive_int(v)


def _subsample(v):
    if v in ("sqrt", "log2", "all"):
        return True
    if isinstance(v, bool):
        return False
    if isinstance(v, int):
        return v >= 1
    return isinstance(v, float) and 0.0 < v <= 1.0


def _number(low: float, high: float = math.inf, low_open: bool = False) -> Callable[[Any], bool]:
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False
        return (v > low if low_open else v >= low) and v <= high
    return check


HYPERPARAMETER_RANGES: Dict[str, Callable[[Any], bool]] = {
    "max_depth": _depth,
    "min_samples_split": lambda v: _positive_int(v) and v >= 2,
    "feature_subsample": _subsample,
    "n_trees": _positive_int,
    "bootstrap": lambda v: isinstance(v, bool),
    "rounds": lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
    "shrinkage": _number(0.0, 1.0, low_open=True),
    "alpha": _number(0.0, low_open=True),
    "k": _positive_int,
    "l2": _number(0.0),
    "learning_rate": _number(0.0, low_open=True),
    "epochs": _positive_int,
    "tol": _number(0.0),
}


def coerce_hyperparameter(name: str, text: Any) -> Any:
    """Convert a config-file string into the typed hyperparameter value."""
    if not isinstance(text, str):
        return text
    value = text.strip()
    lowered = value.lower()
    if lowered in ("none", "inf", "unbounded"):
        return None
    if lowered in ("true", "on", "yes"):
        return True
    if lowered in ("false", "off", "no"):
        return False
    if name == "feature_subsample" and lowered in ("sqrt", "log2", "all"):
        return lowered
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"Hyperparameter {name} has unreadable value {text!r}")


class ModelSpec(BaseModel):
    """Which algorithm to train, with which hyperparameters and seed."""
    model_config = ConfigDict(frozen=True)

    algorithm: Algorithm
    hyperparameters: Dict[str, Any] = {}
    rng_seed: int = 0

    @field_validator("rng_seed")
    @classmethod
    def validate_seed(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")
        return v

    @model_validator(mode="after")
    def validate_hyperparameters(self):
        allowed = HYPERPARAMETER_DEFAULTS[self.algorithm]
        for name, value in self.hyperparameters.items():
            if name not in allowed:
                raise ValueError(f"{self.algorithm.value} has no hyperparameter {name!r}")
            if not HYPERPARAMETER_RANGES[name](value):
                raise ValueError(f"Hyperparameter {name}={value!r} out of range for {self.algorithm.value}")
        return self

    def resolved(self) -> Dict[str, Any]:
        params = dict(HYPERPARAMETER_DEFAULTS[self.algorithm])
        params.update(self.hyperparameters)
        return params

    def with_params(self, **params) -> "ModelSpec":
        merged = dict(self.hyperparameters)
        merged.update(params)
        return ModelSpec(algorithm=self.algorithm, hyperparameters=merged, rng_seed=self.rng_seed)

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(algorithm=self.algorithm, hyperparameters=self.hyperparameters, rng_seed=seed)


class VocabularyFingerprint(BaseModel):
    """64-bit hash over the ordered feature names, plus the vocabulary size."""
    model_config = ConfigDict(frozen=True)

    digest: str
    size: int

    def __str__(self) -> str:
        return f"{self.digest}/{self.size}"


def default_spec(algorithm: Optional[Algorithm] = None, seed: int = 0) -> ModelSpec:
    return ModelSpec(algorithm=algorithm or Algorithm.DECISION_TREE, rng_seed=seed)
