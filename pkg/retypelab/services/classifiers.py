# retypelab/services/classifiers.py - From-scratch classifiers over binary feature vectors
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from scipy.special import logsumexp, softmax

from retypelab.core.errors import (
    FingerprintMismatchError,
    ModelFileError,
    UnsupportedOperationError,
    ValidationError,
)
from retypelab.core.integrity import generate_checksum, verify_checksum, vocabulary_fingerprint
from retypelab.core.parallel import ordered_map
from retypelab.schemas.asm import LabelScheme
from retypelab.schemas.dataset import Dataset, FeatureVocabulary
from retypelab.schemas.model import TREE_ALGORITHMS, Algorithm, ModelSpec, VocabularyFingerprint
from retypelab.schemas.patterns import ExtractionOptions
from retypelab.services.trees import GiniCriterion, SquaredErrorCriterion, Tree, grow_tree, resolve_subsample

logger = logging.getLogger(__name__)

MODEL_FORMAT = "retypelab-model"
MODEL_VERSION = 1


def _one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((len(y), n_classes), dtype=np.float64)
    Y[np.arange(len(y)), y] = 1.0
    return Y


def member_rng(seed: int, member: int) -> np.random.Generator:
    return np.random.default_rng([seed, member])


class Estimator:
    """Fit on (X, y) with y holding indices into the model's class list."""

    supports_proba = True

    def __init__(self, params: Dict[str, Any], seed: int, threads: int = 1):
        self.params = params
        self.seed = seed
        self.threads = threads
        self.n_classes = 0

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "Estimator":
        raise NotImplementedError

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.decision_scores(X)

    def feature_importances(self) -> np.ndarray:
        raise UnsupportedOperationError(f"{type(self).__name__} has no feature importances")

    def get_state(self) -> Dict[str, Any]:
        raise NotImplementedError

    def set_state(self, state: Dict[str, Any]) -> None:
        raise NotImplementedError


def _normalized(importances: np.ndarray) -> np.ndarray:
    total = importances.sum()
    if total <= 0:
        return np.full(len(importances), 1.0 / len(importances)) if len(importances) else importances
    return importances / total


class ForestEstimator(Estimator):
    """Decision tree, random forest and extra trees: averaged Gini trees."""

    def __init__(self, params, seed, threads=1):
        super().__init__(params, seed, threads)
        self.trees: List[Tree] = []
        self.importances: Optional[np.ndarray] = None

    def _fit_member(self, member: int, X: np.ndarray, Y: np.ndarray) -> tuple:
        rng = member_rng(self.seed, member)
        n = X.shape[0]
        rows = rng.integers(0, n, size=n) if self.params.get("bootstrap", False) else np.arange(n)
        return grow_tree(
            X,
            np.sort(rows),
            GiniCriterion(Y),
            max_depth=self.params["max_depth"],
            min_samples_split=self.params["min_samples_split"],
            n_candidates=resolve_subsample(self.params["feature_subsample"], X.shape[1]),
            rng=rng,
        )

    def fit(self, X, y, n_classes):
        self.n_classes = n_classes
        Y = _one_hot(y, n_classes)
        n_trees = self.params.get("n_trees", 1)
        grown = ordered_map(lambda m: self._fit_member(m, X, Y), range(n_trees), self.threads)
        self.trees = [tree for tree, _ in grown]
        self.importances = np.mean([_normalized(imp) for _, imp in grown], axis=0)
        return self

    def decision_scores(self, X):
        return np.mean([tree.predict_value(X) for tree in self.trees], axis=0)

    def feature_importances(self):
        return _normalized(self.importances)

    def get_state(self):
        return {"trees": [t.to_dict() for t in self.trees], "importances": self.importances.tolist()}

    def set_state(self, state):
        self.trees = [Tree.from_dict(t) for t in state["trees"]]
        self.importances = np.asarray(state["importances"], dtype=np.float64)


class GradientBoostingEstimator(Estimator):
    """Multiclass boosting of per-class regression trees on softmax residuals with Newton leaves."""

    def __init__(self, params, seed, threads=1):
        super().__init__(params, seed, threads)
        self.init_scores: Optional[np.ndarray] = None
        self.rounds: List[List[Tree]] = []
        self.importances: Optional[np.ndarray] = None

    def fit(self, X, y, n_classes):
        self.n_classes = K = n_classes
        Y = _one_hot(y, K)
        prior = Y.mean(axis=0)
        self.init_scores = np.log(np.clip(prior, 1e-12, None))
        F = np.tile(self.init_scores, (X.shape[0], 1))
        shrinkage = self.params["shrinkage"]
        rows = np.arange(X.shape[0])
        importances = np.zeros(X.shape[1], dtype=np.float64)
        self.rounds = []

        for _ in range(self.params["rounds"]):
            P = softmax(F, axis=1)
            round_trees = []
            for k in range(K):
                residual = Y[:, k] - P[:, k]

                def newton_leaf(leaf_rows, r=residual):
                    numerator = r[leaf_rows].sum()
                    denominator = (np.abs(r[leaf_rows]) * (1.0 - np.abs(r[leaf_rows]))).sum()
                    if denominator <= 1e-12:
                        return 0.0
                    return float((K - 1) / K * numerator / denominator)

                tree, imp = grow_tree(
                    X,
                    rows,
                    SquaredErrorCriterion(residual, newton_leaf),
                    max_depth=self.params["max_depth"],
                    min_samples_split=self.params["min_samples_split"],
                )
                importances += imp
                round_trees.append(tree)
            for k, tree in enumerate(round_trees):
                F[:, k] += shrinkage * tree.predict_value(X)
            self.rounds.append(round_trees)

        self.importances = importances
        return self

    def decision_scores(self, X):
        F = np.tile(self.init_scores, (X.shape[0], 1))
        shrinkage = self.params["shrinkage"]
        for round_trees in self.rounds:
            for k, tree in enumerate(round_trees):
                F[:, k] += shrinkage * tree.predict_value(X)
        return F

    def predict_proba(self, X):
        return softmax(self.decision_scores(X), axis=1)

    def feature_importances(self):
        return _normalized(self.importances)

    def get_state(self):
        return {
            "init_scores": self.init_scores.tolist(),
            "rounds": [[t.to_dict() for t in trees] for trees in self.rounds],
            "importances": self.importances.tolist(),
        }

    def set_state(self, state):
        self.init_scores = np.asarray(state["init_scores"], dtype=np.float64)
        self.rounds = [[Tree.from_dict(t) for t in trees] for trees in state["rounds"]]
        self.importances = np.asarray(state["importances"], dtype=np.float64)


class BernoulliNBEstimator(Estimator):
    def fit(self, X, y, n_classes):
        self.n_classes = n_classes
        alpha = self.params["alpha"]
        Y = _one_hot(y, n_classes)
        class_counts = Y.sum(axis=0)
        feature_counts = Y.T @ X.astype(np.float64)
        self.class_log_prior = np.log(class_counts / class_counts.sum())
        p = (feature_counts + alpha) / (class_counts[:, None] + 2.0 * alpha)
        self.feature_log_prob = np.log(p)
        self.feature_log_neg = np.log1p(-p)
        return self

    def decision_scores(self, X):
        """Joint log-likelihood per class."""
        Xf = X.astype(np.float64)
        return Xf @ self.feature_log_prob.T + (1.0 - Xf) @ self.feature_log_neg.T + self.class_log_prior

    def predict_proba(self, X):
        jll = self.decision_scores(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def get_state(self):
        return {
            "class_log_prior": self.class_log_prior.tolist(),
            "feature_log_prob": self.feature_log_prob.tolist(),
            "feature_log_neg": self.feature_log_neg.tolist(),
        }

    def set_state(self, state):
        self.class_log_prior = np.asarray(state["class_log_prior"], dtype=np.float64)
        self.feature_log_prob = np.asarray(state["feature_log_prob"], dtype=np.float64).reshape(len(self.class_log_prior), -1)
        self.feature_log_neg = np.asarray(state["feature_log_neg"], dtype=np.float64).reshape(len(self.class_log_prior), -1)


class KNNEstimator(Estimator):
    """Hamming-distance neighbors; every row tied with the k-th distance votes."""

    def fit(self, X, y, n_classes):
        self.n_classes = n_classes
        self.X = X.astype(np.uint8)
        self.y = y.astype(np.int64)
        return self

    def distances(self, X: np.ndarray) -> np.ndarray:
        Q = X.astype(np.int64)
        T = self.X.astype(np.int64)
        return Q @ (1 - T).T + (1 - Q) @ T.T

    def decision_scores(self, X):
        """Neighbor vote counts per class."""
        D = self.distances(X)
        k = min(self.params["k"], self.X.shape[0])
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.float64)
        for i, row in enumerate(D):
            kth = np.partition(row, k - 1)[k - 1]
            neighbors = self.y[row <= kth]
            votes[i] = np.bincount(neighbors, minlength=self.n_classes)
        return votes

    def predict_proba(self, X):
        votes = self.decision_scores(X)
        return votes / votes.sum(axis=1, keepdims=True)

    def get_state(self):
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    def set_state(self, state):
        self.y = np.asarray(state["y"], dtype=np.int64)
        self.X = np.asarray(state["X"], dtype=np.uint8).reshape(len(self.y), -1)


class LogisticRegressionEstimator(Estimator):
    """Multinomial logistic regression, L2-penalized, full-batch gradient descent from zero."""

    @staticmethod
    def _loss_and_gradient(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
        n = X.shape[0]
        logits = X @ W + b
        log_p = logits - logsumexp(logits, axis=1, keepdims=True)
        loss = -float((Y * log_p).sum()) / n + 0.5 * l2 * float((W ** 2).sum())
        diff = np.exp(log_p) - Y
        grad_W = X.T @ diff / n + l2 * W
        grad_b = diff.mean(axis=0)
        return loss, grad_W, grad_b

    def fit(self, X, y, n_classes):
        self.n_classes = n_classes
        Xf = X.astype(np.float64)
        Y = _one_hot(y, n_classes)
        W = np.zeros((X.shape[1], n_classes))
        b = np.zeros(n_classes)
        lr, l2, tol = self.params["learning_rate"], self.params["l2"], self.params["tol"]
        self.epochs_run = 0
        for epoch in range(self.params["epochs"]):
            _, grad_W, grad_b = self._loss_and_gradient(W, b, Xf, Y, l2)
            norm = np.sqrt((grad_W ** 2).sum() + (grad_b ** 2).sum())
            if norm < tol:
                break
            W -= lr * grad_W
            b -= lr * grad_b
            self.epochs_run = epoch + 1
        self.W, self.b = W, b
        return self

    def decision_scores(self, X):
        return X.astype(np.float64) @ self.W + self.b

    def predict_proba(self, X):
        return softmax(self.decision_scores(X), axis=1)

    def get_state(self):
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    def set_state(self, state):
        self.b = np.asarray(state["b"], dtype=np.float64)
        self.W = np.asarray(state["W"], dtype=np.float64).reshape(-1, len(self.b))


class PerceptronEstimator(Estimator):
    """One-vs-rest perceptrons trained on seeded sample orders."""

    supports_proba = False

    def fit(self, X, y, n_classes):
        self.n_classes = n_classes
        Xf = X.astype(np.float64)
        lr = self.params["learning_rate"]
        W = np.zeros((X.shape[1], n_classes))
        b = np.zeros(n_classes)
        rng = member_rng(self.seed, 0)
        classes = np.arange(n_classes)
        for _ in range(self.params["epochs"]):
            mistakes = 0
            for i in rng.permutation(X.shape[0]):
                targets = np.where(classes == y[i], 1.0, -1.0)
                wrong = targets * (Xf[i] @ W + b) <= 0
                if wrong.any():
                    mistakes += 1
                    W[:, wrong] += lr * np.outer(Xf[i], targets[wrong])
                    b[wrong] += lr * targets[wrong]
            if mistakes == 0:
                break
        self.W, self.b = W, b
        return self

    def decision_scores(self, X):
        return X.astype(np.float64) @ self.W + self.b

    def predict_proba(self, X):
        raise UnsupportedOperationError("perceptron does not produce probabilities; use decision_scores")

    def get_state(self):
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    def set_state(self, state):
        self.b = np.asarray(state["b"], dtype=np.float64)
        self.W = np.asarray(state["W"], dtype=np.float64).reshape(-1, len(self.b))


ESTIMATORS = {
    Algorithm.DECISION_TREE: ForestEstimator,
    Algorithm.RANDOM_FOREST: ForestEstimator,
    Algorithm.EXTRA_TREES: ForestEstimator,
    Algorithm.GRADIENT_BOOSTING: GradientBoostingEstimator,
    Algorithm.BERNOULLI_NB: BernoulliNBEstimator,
    Algorithm.KNN: KNNEstimator,
    Algorithm.LOGISTIC_REGRESSION: LogisticRegressionEstimator,
    Algorithm.PERCEPTRON: PerceptronEstimator,
}


class TrainedModel:
    """A fitted estimator bound to its class list and training vocabulary."""

    def __init__(
        self,
        spec: ModelSpec,
        classes: List[str],
        scheme: LabelScheme,
        vocabulary: FeatureVocabulary,
        estimator: Estimator,
        options: Optional[ExtractionOptions] = None,
    ):
        self.spec = spec
        self.classes = classes
        self.scheme = scheme
        self.vocabulary = vocabulary
        self.fingerprint: VocabularyFingerprint = vocabulary_fingerprint(vocabulary.names)
        self.estimator = estimator
        # extraction options of the training rows; predict re-extracts with them
        self.options = options

    @property
    def n_features(self) -> int:
        return len(self.vocabulary)

    def _check_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise FingerprintMismatchError(
                f"Input has {X.shape[1]} features, model expects {self.n_features} (vocabulary {self.fingerprint})"
            )
        return X.astype(np.uint8, copy=False)

    def check_vocabulary(self, vocabulary: FeatureVocabulary) -> None:
        other = vocabulary_fingerprint(vocabulary.names)
        if other != self.fingerprint:
            raise FingerprintMismatchError(
                f"Dataset vocabulary {other} does not match model vocabulary {self.fingerprint}"
            )

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return self.estimator.decision_scores(self._check_matrix(X))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.estimator.predict_proba(self._check_matrix(X))

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, which is the canonical class order
        return np.argmax(self.decision_scores(X), axis=1)

    def predict(self, X: np.ndarray) -> List[str]:
        return [self.classes[i] for i in self.predict_indices(X)]


def train(spec: ModelSpec, dataset: Dataset, threads: int = 1) -> TrainedModel:
    """Fit the algorithm named by spec on every row of the dataset."""
    if dataset.n_rows == 0:
        raise ValidationError("Cannot train on an empty dataset")
    if dataset.n_features == 0:
        raise ValidationError("Cannot train on an empty feature vocabulary")
    classes = [c for c, count in dataset.class_counts().items() if count > 0]
    if len(classes) < 2:
        raise ValidationError(f"Training needs at least 2 classes, dataset has {classes}")

    lookup = {c: i for i, c in enumerate(classes)}
    y = np.array([lookup[label] for label in dataset.labels], dtype=np.int64)
    estimator = ESTIMATORS[spec.algorithm](spec.resolved(), spec.rng_seed, threads)
    estimator.fit(dataset.X, y, len(classes))
    logger.debug(f"Trained {spec.algorithm.value} on {dataset.n_rows}x{dataset.n_features}")
    return TrainedModel(spec, classes, dataset.scheme, dataset.vocabulary, estimator, dataset.options)


def predict(model: TrainedModel, data: Union[Dataset, np.ndarray]) -> List[str]:
    if isinstance(data, Dataset):
        model.check_vocabulary(data.vocabulary)
        return model.predict(data.X)
    return model.predict(data)


def predict_proba(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return model.predict_proba(X)


def decision_scores(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return model.decision_scores(X)


def feature_importances(model: TrainedModel) -> np.ndarray:
    """Normalized impurity-decrease importances over the model vocabulary."""
    if model.spec.algorithm not in TREE_ALGORITHMS:
        raise UnsupportedOperationError(f"{model.spec.algorithm.value} has no feature importances")
    return model.estimator.feature_importances()


def _payload(model: TrainedModel) -> Dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": model.spec.model_dump(mode="json"),
        "classes": list(model.classes),
        "scheme": model.scheme.value,
        "vocabulary": {
            "names": list(model.vocabulary.names),
            "fingerprint": model.fingerprint.model_dump(),
        },
        "options": model.options.model_dump(mode="json") if model.options is not None else None,
        "state": model.estimator.get_state(),
    }


def save_model(model: TrainedModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _payload(model)
    payload["checksum"] = generate_checksum(payload)
    path.write_text(json.dumps(payload), encoding="utf-8")
    logger.info(f"Saved {model.spec.algorithm.value} model to {path}")


def load_model(path: Path) -> TrainedModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ModelFileError(f"Model file {path} not found")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFileError(f"Model file {path} is not valid JSON: {e}")
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"{path} is not a {MODEL_FORMAT} document")
    if payload.get("version") != MODEL_VERSION:
        raise ModelFileError(f"Model file version {payload.get('version')} is not supported (expected {MODEL_VERSION})")

    checksum = payload.pop("checksum", None)
    if not verify_checksum(payload, checksum):
        raise ModelFileError(f"Model file {path} failed its checksum")

    try:
        spec = ModelSpec(**payload["spec"])
        vocabulary = FeatureVocabulary(names=tuple(payload["vocabulary"]["names"]))
        stored = VocabularyFingerprint(**payload["vocabulary"]["fingerprint"])
        estimator = ESTIMATORS[spec.algorithm](spec.resolved(), spec.rng_seed)
        estimator.n_classes = len(payload["classes"])
        estimator.set_state(payload["state"])
        options = ExtractionOptions(**payload["options"]) if payload.get("options") is not None else None
        model = TrainedModel(
            spec, list(payload["classes"]), LabelScheme(payload["scheme"]), vocabulary, estimator, options,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f"Model file {path} is malformed: {e}")
    if model.fingerprint != stored:
        raise FingerprintMismatchError(f"Stored fingerprint {stored} does not match vocabulary {model.fingerprint}")
    return model
