# retypelab/schemas/evaluation.py - Metrics, repeated evaluations and convergence traces
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from retypelab.schemas.asm import LabelScheme


class ClassMetrics(BaseModel):
    precision: float
    recall: float
    f1: float
    support: int


class Metrics(BaseModel):
    """Accuracy, per-class and macro scores, and the confusion matrix (rows actual, columns predicted)."""
    classes: List[str]
    accuracy: float
    per_class: Dict[str, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: List[List[int]]

    @model_validator(mode="after")
    def validate_confusion(self):
        size = len(self.classes)
        if len(self.confusion) != size or any(len(row) != size for row in self.confusion):
            raise ValueError(f"confusion matrix must be {size}x{size}")
        return self

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.confusion)


class MetricSummary(BaseModel):
    """Mean, sample standard deviation and 95% Student-t interval of one statistic."""
    values: List[float]
    mean: float
    sd: float
    ci95: Tuple[float, float]

    @property
    def half_width(self) -> float:
        return (self.ci95[1] - self.ci95[0]) / 2.0


class RepeatedEval(BaseModel):
    accuracies: List[float]
    mean: float
    sd: float = Field(ge=0.0)
    ci95: Tuple[float, float]
    macro_precision: Optional[MetricSummary] = None
    macro_recall: Optional[MetricSummary] = None
    macro_f1: Optional[MetricSummary] = None
    classes: List[str] = []
    confusion: List[List[int]] = []

    @model_validator(mode="after")
    def validate_interval(self):
        lo, hi = self.ci95
        if not lo - 1e-12 <= self.mean <= hi + 1e-12:
            raise ValueError(f"mean {self.mean} lies outside its interval ({lo}, {hi})")
        return self

    @property
    def repetitions(self) -> int:
        return len(self.accuracies)


class ConvergenceTrace(BaseModel):
    """Accuracy and trailing-window CoV per x; stop_x is None until the window is full."""
    xs: List[float]
    accuracies: List[float]
    covs: List[Optional[float]]
    window: int
    threshold: float
    stop_index: Optional[int] = None
    converged: bool = False
    recommended_x: Optional[float] = None

    @property
    def stop_x(self) -> Optional[float]:
        return self.xs[self.stop_index] if self.stop_index is not None else None


class Comparison(str, Enum):
    A_BETTER = "a_better"
    B_BETTER = "b_better"
    NOT_SIGNIFICANT = "not_significant"


class Method2Result(BaseModel):
    trace: ConvergenceTrace
    at_stop: RepeatedEval
    holdout_size: int
    holdout_note: str = "fixed real holdout reserved before the loop; training fractions never include it"


class ProgramEvaluation(BaseModel):
    program: str
    n_train: int
    n_test: int
    metrics: Metrics


class Method3Result(BaseModel):
    programs: List[ProgramEvaluation]

    @property
    def mean_accuracy(self) -> float:
        return sum(p.metrics.accuracy for p in self.programs) / len(self.programs)

    @property
    def mean_macro_f1(self) -> float:
        return sum(p.metrics.macro_f1 for p in self.programs) / len(self.programs)


class Baseline(BaseModel):
    """Published decompiler scores, for report context only."""
    tool: str
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


DECOMPILER_BASELINES: Dict[LabelScheme, List[Baseline]] = {
    LabelScheme.HIGH_LEVEL: [
        Baseline(tool="IDA", accuracy=0.40, macro_precision=0.33, macro_recall=0.34, macro_f1=0.30),
        Baseline(tool="RetDec", accuracy=0.15, macro_precision=0.06, macro_recall=0.10, macro_f1=0.06),
        Baseline(tool="Snowman", accuracy=0.29, macro_precision=0.22, macro_recall=0.26, macro_f1=0.21),
        Baseline(tool="Hopper", accuracy=0.14, macro_precision=0.08, macro_recall=0.09, macro_f1=0.03),
    ],
    LabelScheme.SIZE_REP: [
        Baseline(tool="IDA", accuracy=0.583, macro_precision=0.495, macro_recall=0.413, macro_f1=0.415),
        Baseline(tool="RetDec", accuracy=0.290, macro_precision=0.111, macro_recall=0.133, macro_f1=0.110),
        Baseline(tool="Snowman", accuracy=0.544, macro_precision=0.365, macro_recall=0.328, macro_f1=0.322),
        Baseline(tool="Hopper", accuracy=0.333, macro_precision=0.132, macro_recall=0.132, macro_f1=0.079),
    ],
}
