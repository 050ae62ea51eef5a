# retypelab/services/trees.py - Binary-split trees over 0/1 feature matrices
import math
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

LEAF = -1
# gains closer than this count as a tie; the lowest column wins
GAIN_TIE_EPSILON = 1e-12


class Tree:
    """
    Array-encoded binary tree. An internal node sends rows whose feature is 1 to
    the right child and the rest to the left one.
    """

    def __init__(self, feature: List[int], left: List[int], right: List[int], value: List[Any]):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[nodes] != LEAF)
        while len(active):
            current = nodes[active]
            goes_right = X[active, self.feature[current]] == 1
            nodes[active] = np.where(goes_right, self.right[current], self.left[current])
            active = active[self.feature[nodes[active]] != LEAF]
        return nodes

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> Dict[str, list]:
        return {
            "feature": self.feature.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "Tree":
        return cls(data["feature"], data["left"], data["right"], data["value"])


class GiniCriterion:
    """Classification splits on Gini impurity; leaves hold class frequencies."""

    def __init__(self, Y: np.ndarray):
        self.Y = Y.astype(np.float64)

    def impurity(self, rows: np.ndarray) -> float:
        counts = self.Y[rows].sum(axis=0)
        n = len(rows)
        return 1.0 - float((counts ** 2).sum()) / (n * n)

    def gains(self, rows: np.ndarray, Xs: np.ndarray) -> np.ndarray:
        """Weighted impurity decrease of splitting on each candidate column."""
        Y = self.Y[rows]
        n = len(rows)
        total = Y.sum(axis=0)
        right = Xs.T.astype(np.float64) @ Y
        left = total - right
        n_right = right.sum(axis=1)
        n_left = n - n_right
        with np.errstate(divide="ignore", invalid="ignore"):
            children = (n_left - (left ** 2).sum(axis=1) / n_left) + (n_right - (right ** 2).sum(axis=1) / n_right)
        gains = self.impurity(rows) - children / n
        gains[(n_left == 0) | (n_right == 0)] = -np.inf
        return gains

    def leaf_value(self, rows: np.ndarray) -> np.ndarray:
        return self.Y[rows].sum(axis=0) / len(rows)


class SquaredErrorCriterion:
    """Regression splits on squared error; leaf values come from a callback."""

    def __init__(self, target: np.ndarray, leaf_fn: Optional[Callable[[np.ndarray], float]] = None):
        self.target = target.astype(np.float64)
        self.leaf_fn = leaf_fn

    def impurity(self, rows: np.ndarray) -> float:
        return float(np.var(self.target[rows]))

    def gains(self, rows: np.ndarray, Xs: np.ndarray) -> np.ndarray:
        r = self.target[rows]
        n = len(rows)
        total = r.sum()
        n_right = Xs.sum(axis=0, dtype=np.float64)
        n_left = n - n_right
        sum_right = Xs.T.astype(np.float64) @ r
        sum_left = total - sum_right
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = (sum_left ** 2 / n_left + sum_right ** 2 / n_right - total ** 2 / n) / n
        gains[(n_left == 0) | (n_right == 0)] = -np.inf
        return gains

    def leaf_value(self, rows: np.ndarray) -> float:
        if self.leaf_fn is not None:
            return self.leaf_fn(rows)
        return float(self.target[rows].mean())


Criterion = Union[GiniCriterion, SquaredErrorCriterion]


def resolve_subsample(feature_subsample: Union[str, int, float], n_features: int) -> int:
    """Number of candidate columns examined at each node."""
    if feature_subsample == "all":
        return n_features
    if feature_subsample == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if feature_subsample == "log2":
        return max(1, int(math.log2(n_features))) if n_features > 1 else 1
    if isinstance(feature_subsample, float):
        return max(1, int(feature_subsample * n_features))
    return max(1, min(int(feature_subsample), n_features))


def grow_tree(
    X: np.ndarray,
    rows: np.ndarray,
    criterion: Criterion,
    max_depth: Optional[int] = None,
    min_samples_split: int = 2,
    n_candidates: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tree, np.ndarray]:
    """
    Grow a tree depth-first over the given rows.

    Returns the tree and the per-feature impurity decrease it realized, weighted
    by the share of rows reaching each split.
    """
    n_features = X.shape[1]
    n_candidates = n_features if n_candidates is None else n_candidates
    subsample = n_candidates < n_features
    if subsample and rng is None:
        raise ValueError("feature subsampling needs an RNG")

    total_rows = len(rows)
    importances = np.zeros(n_features, dtype=np.float64)
    feature: List[int] = []
    left: List[int] = []
    right: List[int] = []
    value: List[Any] = []

    def new_node(node_rows: np.ndarray) -> int:
        feature.append(LEAF)
        left.append(LEAF)
        right.append(LEAF)
        value.append(criterion.leaf_value(node_rows))
        return len(feature) - 1

    root = new_node(rows)
    stack = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        n = len(node_rows)
        if n < min_samples_split or (max_depth is not None and depth >= max_depth):
            continue
        if criterion.impurity(node_rows) <= 0.0 or n_features == 0:
            continue

        if subsample:
            candidates = np.sort(rng.choice(n_features, size=n_candidates, replace=False))
        else:
            candidates = np.arange(n_features)
        Xs = X[np.ix_(node_rows, candidates)]
        gains = criterion.gains(node_rows, Xs)
        best_gain = gains.max()
        if not np.isfinite(best_gain) or best_gain <= GAIN_TIE_EPSILON:
            continue
        best = int(np.flatnonzero(gains >= best_gain - GAIN_TIE_EPSILON)[0])
        column = int(candidates[best])

        goes_right = Xs[:, best] == 1
        right_rows = node_rows[goes_right]
        left_rows = node_rows[~goes_right]
        importances[column] += best_gain * n / total_rows

        feature[node] = column
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        # right first so the left subtree is numbered before it
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))

    return Tree(feature, left, right, value), importances
