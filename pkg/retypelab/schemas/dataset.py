# retypelab/schemas/dataset.py - Feature vocabulary and binary occurrence dataset
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from retypelab.core.integrity import vocabulary_fingerprint
from retypelab.schemas.asm import LabelScheme
from retypelab.schemas.model import VocabularyFingerprint
from retypelab.schemas.patterns import ExtractionOptions


class FeatureVocabulary(BaseModel):
    """Ordered canonical feature names; the order is the column order."""
    model_config = ConfigDict(frozen=True)

    names: Tuple[str, ...] = ()
    _index: Dict[str, int] = PrivateAttr(default_factory=dict)

    @field_validator("names")
    @classmethod
    def validate_unique(cls, v):
        if len(set(v)) != len(v):
            seen = set()
            duplicate = next(n for n in v if n in seen or seen.add(n))
            raise ValueError(f"duplicate feature name {duplicate!r}")
        return v

    def model_post_init(self, __context) -> None:
        self._index = {name: i for i, name in enumerate(self.names)}

    @property
    def index(self) -> Dict[str, int]:
        return self._index

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def fingerprint(self) -> VocabularyFingerprint:
        return vocabulary_fingerprint(self.names)

    def union(self, other: "FeatureVocabulary") -> "FeatureVocabulary":
        """This vocabulary's order, then other's new names in their order."""
        extra = tuple(n for n in other.names if n not in self.index)
        return FeatureVocabulary(names=self.names + extra)

    def subset(self, columns: Sequence[int]) -> "FeatureVocabulary":
        return FeatureVocabulary(names=tuple(self.names[c] for c in columns))


class DatasetDiagnostics(BaseModel):
    unlabeled: List[str] = []
    no_return: List[str] = []
    truncated_chunks: int = 0
    pruned_features: int = 0


class Dataset(BaseModel):
    """Rows are labeled functions, columns are features, cells are occurrence bits."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vocabulary: FeatureVocabulary
    X: np.ndarray
    labels: Tuple[str, ...]
    functions: Tuple[str, ...]
    scheme: LabelScheme = LabelScheme.HIGH_LEVEL
    options: Optional[ExtractionOptions] = None
    diagnostics: DatasetDiagnostics = Field(default_factory=DatasetDiagnostics)

    @field_validator("X")
    @classmethod
    def validate_matrix(cls, v):
        v = np.asarray(v)
        if v.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {v.shape}")
        if v.size and not np.isin(v, (0, 1)).all():
            raise ValueError("feature cells must be 0 or 1")
        return v.astype(np.uint8, copy=False)

    @model_validator(mode="after")
    def validate_shape(self):
        rows, cols = self.X.shape
        if cols != len(self.vocabulary):
            raise ValueError(f"matrix has {cols} columns but the vocabulary has {len(self.vocabulary)} names")
        if rows != len(self.labels) or rows != len(self.functions):
            raise ValueError(f"matrix has {rows} rows, {len(self.labels)} labels, {len(self.functions)} functions")
        allowed = set(self.scheme.classes())
        for i, label in enumerate(self.labels):
            if label not in allowed:
                raise ValueError(f"row {i}: label {label!r} is not a {self.scheme.value} class")
        return self

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> List[str]:
        return self.scheme.classes()

    def y(self) -> np.ndarray:
        """Labels as indices into the scheme's canonical class order."""
        lookup = {c: i for i, c in enumerate(self.classes)}
        return np.array([lookup[label] for label in self.labels], dtype=np.int64)

    def class_counts(self) -> Dict[str, int]:
        counts = {c: 0 for c in self.classes}
        for label in self.labels:
            counts[label] += 1
        return counts

    def support(self) -> np.ndarray:
        """Number of rows in which each feature occurs."""
        return self.X.sum(axis=0, dtype=np.int64)

    def take_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = list(rows)
        return self.model_copy(update={
            "X": self.X[rows],
            "labels": tuple(self.labels[r] for r in rows),
            "functions": tuple(self.functions[r] for r in rows),
        })

    def take_columns(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        return self.model_copy(update={
            "X": self.X[:, columns],
            "vocabulary": self.vocabulary.subset(columns),
        })
