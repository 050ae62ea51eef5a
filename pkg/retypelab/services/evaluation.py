# retypelab/services/evaluation.py - Metrics, repeated evaluation, convergence loops and model comparison
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from retypelab.core.config import settings
from retypelab.core.errors import ClassTooSmallError, ConvergenceError, PipelineRuntimeError, ValidationError
from retypelab.core.parallel import ordered_map
from retypelab.schemas.asm import LabelScheme
from retypelab.schemas.dataset import Dataset
from retypelab.schemas.evaluation import (
    ClassMetrics,
    Comparison,
    ConvergenceTrace,
    Method2Result,
    Method3Result,
    Metrics,
    MetricSummary,
    ProgramEvaluation,
    RepeatedEval,
)
from retypelab.schemas.model import ModelSpec
from retypelab.schemas.patterns import ExtractionOptions
from retypelab.schemas.synth import SynthConfig
from retypelab.services.classifiers import train
from retypelab.services.corpus_synth import synthesize_corpus
from retypelab.services.dataset_builder import build_from_functions, merge_datasets, project_onto
from retypelab.services.model_selection import stratified_shuffle_split

logger = logging.getLogger(__name__)


def _ratio(numerator: float, denominator: float) -> float:
    return float(numerator / denominator) if denominator else 0.0


def metrics_from_confusion(confusion: Sequence[Sequence[int]], classes: Sequence[str]) -> Metrics:
    """Scores of a confusion matrix whose rows are actual and columns predicted classes."""
    C = np.asarray(confusion, dtype=np.int64)
    if C.sum() == 0:
        raise ValidationError("Cannot score an empty confusion matrix")
    tp = np.diag(C)
    predicted = C.sum(axis=0)
    support = C.sum(axis=1)

    per_class = {}
    for i, label in enumerate(classes):
        precision = _ratio(tp[i], predicted[i])
        recall = _ratio(tp[i], support[i])
        f1 = _ratio(2 * precision * recall, precision + recall)
        per_class[label] = ClassMetrics(precision=precision, recall=recall, f1=f1, support=int(support[i]))

    scores = list(per_class.values())
    return Metrics(
        classes=list(classes),
        accuracy=float(tp.sum() / C.sum()),
        per_class=per_class,
        macro_precision=float(np.mean([s.precision for s in scores])),
        macro_recall=float(np.mean([s.recall for s in scores])),
        macro_f1=float(np.mean([s.f1 for s in scores])),
        confusion=C.tolist(),
    )


def compute_metrics(
    predictions: Sequence[str],
    truths: Sequence[str],
    classes: Optional[Sequence[str]] = None,
) -> Metrics:
    """
    Per-class and macro scores. Without explicit classes, the classes are those
    occurring in truths or predictions, sorted.
    """
    if len(predictions) != len(truths):
        raise ValidationError(f"{len(predictions)} predictions for {len(truths)} truths")
    if not truths:
        raise ValidationError("Cannot compute metrics on empty input")
    classes = list(classes) if classes is not None else sorted(set(truths) | set(predictions))
    index = {c: i for i, c in enumerate(classes)}
    unknown = (set(truths) | set(predictions)) - set(index)
    if unknown:
        raise ValidationError(f"Labels {sorted(unknown)} are not among the metric classes")

    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(confusion, ([index[t] for t in truths], [index[p] for p in predictions]), 1)
    return metrics_from_confusion(confusion, classes)


def pairwise_confusion_rate(metrics: Metrics, classes: Sequence[str]) -> float:
    """Share of the given classes' rows predicted as another class of the group."""
    idx = [metrics.classes.index(c) for c in classes]
    block = np.asarray(metrics.confusion)[np.ix_(idx, idx)]
    rows = np.asarray(metrics.confusion)[idx].sum()
    return _ratio(block.sum() - np.trace(block), rows)


def relative_change(before: float, after: float) -> float:
    if before == 0:
        raise ValidationError("relative change from zero is undefined")
    return (after - before) / before


def summarize(values: Sequence[float]) -> MetricSummary:
    """Mean, sample sd and mean ± t(0.975, n-1)·sd/√n."""
    values = [float(v) for v in values]
    n = len(values)
    if n < 2:
        raise ValidationError("A confidence interval needs at least 2 values")
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1))
    half = float(stats.t.ppf(0.975, n - 1)) * sd / np.sqrt(n)
    return MetricSummary(values=values, mean=mean, sd=sd, ci95=(mean - half, mean + half))


def aggregate(runs: Sequence[Metrics]) -> RepeatedEval:
    accuracy = summarize([m.accuracy for m in runs])
    classes = runs[0].classes
    confusion = np.sum([np.asarray(m.confusion) for m in runs], axis=0)
    return RepeatedEval(
        accuracies=accuracy.values,
        mean=accuracy.mean,
        sd=accuracy.sd,
        ci95=accuracy.ci95,
        macro_precision=summarize([m.macro_precision for m in runs]),
        macro_recall=summarize([m.macro_recall for m in runs]),
        macro_f1=summarize([m.macro_f1 for m in runs]),
        classes=list(classes),
        confusion=confusion.tolist(),
    )


def present_classes(dataset: Dataset) -> List[str]:
    return [c for c, n in dataset.class_counts().items() if n > 0]


def fit_and_score(spec: ModelSpec, train_set: Dataset, test_set: Dataset, classes: Sequence[str]) -> Metrics:
    model = train(spec, train_set)
    return compute_metrics(model.predict(test_set.X), list(test_set.labels), classes)


def repeated_evaluation(
    dataset: Dataset,
    spec: ModelSpec,
    seed: int,
    repetitions: Optional[int] = None,
    test_fraction: float = 0.2,
    threads: int = 1,
) -> RepeatedEval:
    """Stratified shuffled splits; repetition r splits and trains with seed + r."""
    repetitions = repetitions or settings.EVAL_REPETITIONS
    classes = present_classes(dataset)

    def run(r: int) -> Metrics:
        train_rows, test_rows = stratified_shuffle_split(dataset.labels, test_fraction, seed + r)
        return fit_and_score(spec.with_seed(seed + r), dataset.take_rows(train_rows), dataset.take_rows(test_rows), classes)

    runs = ordered_map(run, range(repetitions), threads)
    result = aggregate(runs)
    logger.info(f"{spec.algorithm.value}: accuracy {result.mean:.4f} ({result.ci95[0]:.4f}, {result.ci95[1]:.4f}) over {repetitions} splits")
    return result


def evaluate_method1(
    real: Optional[Dataset],
    synthetic: Dataset,
    spec: ModelSpec,
    seed: int,
    repetitions: Optional[int] = None,
    test_fraction: float = 0.2,
    threads: int = 1,
) -> RepeatedEval:
    """Mix real and synthetic functions, then evaluate over repeated stratified splits."""
    dataset = synthetic if real is None else merge_datasets(real, synthetic)
    return repeated_evaluation(dataset, spec, seed, repetitions, test_fraction, threads)


def window_cov(values: Sequence[float]) -> float:
    """Coefficient of variation sd/mean (sample sd) of one window."""
    mean = float(np.mean(values))
    if mean <= 0:
        raise ConvergenceError(f"Window mean {mean} is not positive; the coefficient of variation is undefined")
    return float(np.std(values, ddof=1)) / mean


class ConvergenceMonitor:
    """Feeds accuracies one at a time and stops at the first full window whose CoV is under threshold."""

    def __init__(self, window: int, threshold: float):
        if window < 2:
            raise ValidationError(f"window must be at least 2, got {window}")
        self.window = window
        self.threshold = threshold
        self.xs: List[float] = []
        self.accuracies: List[float] = []
        self.covs: List[Optional[float]] = []
        self.stop_index: Optional[int] = None

    def add(self, x: float, accuracy: float) -> bool:
        self.xs.append(float(x))
        self.accuracies.append(float(accuracy))
        if len(self.accuracies) < self.window:
            self.covs.append(None)
            return False
        values = self.accuracies[-self.window:]
        if float(np.mean(values)) <= 0:
            # undefined CoV never counts as converged
            logger.debug(f"Window ending at x={x} has zero mean accuracy; CoV undefined")
            self.covs.append(None)
            return self.stop_index is not None
        cov = window_cov(values)
        self.covs.append(cov)
        if cov < self.threshold and self.stop_index is None:
            self.stop_index = len(self.xs) - 1
        return self.stop_index is not None

    def trace(self, step: Optional[float] = None) -> ConvergenceTrace:
        converged = self.stop_index is not None
        stop_index = self.stop_index if converged else (len(self.xs) - 1 if self.xs else None)
        recommended = None
        if converged:
            step = step if step is not None else (self.xs[1] - self.xs[0] if len(self.xs) > 1 else 0.0)
            recommended = self.xs[stop_index] - self.window * step
        return ConvergenceTrace(
            xs=self.xs,
            accuracies=self.accuracies,
            covs=self.covs,
            window=self.window,
            threshold=self.threshold,
            stop_index=stop_index,
            converged=converged,
            recommended_x=recommended,
        )


def find_convergence(
    xs: Sequence[float],
    accuracies: Sequence[float],
    window: Optional[int] = None,
    threshold: Optional[float] = None,
) -> ConvergenceTrace:
    """Replay an accuracy trace through the CoV stopping rule."""
    if len(xs) != len(accuracies):
        raise ValidationError(f"{len(xs)} x values for {len(accuracies)} accuracies")
    monitor = ConvergenceMonitor(window or settings.COV_WINDOW, settings.SIZE_THRESHOLD if threshold is None else threshold)
    for x, accuracy in zip(xs, accuracies):
        if monitor.add(x, accuracy):
            break
    trace = monitor.trace()
    if not trace.converged:
        logger.warning(f"Accuracy trace did not converge below CoV {monitor.threshold} within {len(xs)} points")
    return trace


def converge_dataset_size(
    cfg: SynthConfig,
    spec: ModelSpec,
    start: int = 100,
    step: int = 1000,
    window: Optional[int] = None,
    threshold: Optional[float] = None,
    max_steps: int = 40,
    scheme: LabelScheme = LabelScheme.HIGH_LEVEL,
    options: Optional[ExtractionOptions] = None,
    test_fraction: float = 0.2,
    threads: int = 1,
    accuracy_fn: Optional[Callable[[int], float]] = None,
) -> ConvergenceTrace:
    """
    Grow the synthetic corpus by step functions per type until the trailing-window
    CoV of accuracy drops under threshold. The recommended size is the stop size
    minus one window of steps.
    """
    if step < 1:
        raise ValidationError(f"step must be at least 1, got {step}")
    monitor = ConvergenceMonitor(window or settings.COV_WINDOW, settings.SIZE_THRESHOLD if threshold is None else threshold)

    def measure(per_type: int) -> float:
        if accuracy_fn is not None:
            return accuracy_fn(per_type)
        corpus = synthesize_corpus(cfg.model_copy(update={"counts": {label: per_type for label in cfg.counts}}), threads)
        dataset = build_from_functions(corpus.functions, scheme, options, threads)
        train_rows, test_rows = stratified_shuffle_split(dataset.labels, test_fraction, spec.rng_seed)
        return fit_and_score(spec, dataset.take_rows(train_rows), dataset.take_rows(test_rows), present_classes(dataset)).accuracy

    for i in range(max_steps):
        per_type = start + i * step
        accuracy = measure(per_type)
        logger.info(f"Dataset size {per_type} per type: accuracy {accuracy:.4f}")
        if monitor.add(per_type, accuracy):
            break
    trace = monitor.trace(step=float(step))
    if not trace.converged:
        logger.warning(f"Dataset size did not converge within {max_steps} steps")
    return trace


def _holdout(real: Dataset, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return stratified_shuffle_split(real.labels, fraction, seed)
    except ClassTooSmallError as e:
        logger.warning(f"Real holdout is not stratified: {e}")
        order = np.random.default_rng(seed).permutation(real.n_rows)
        n_test = max(1, int(round(real.n_rows * fraction)))
        return np.sort(order[n_test:]), np.sort(order[:n_test])


def evaluate_method2(
    real: Dataset,
    synthetic: Dataset,
    spec: ModelSpec,
    seed: int,
    step: float = 0.01,
    window: Optional[int] = None,
    threshold: Optional[float] = None,
    holdout_fraction: Optional[float] = None,
    repetitions: Optional[int] = None,
    threads: int = 1,
) -> Method2Result:
    """
    Train on all synthetic functions plus a growing fraction of the real ones and
    test on a real holdout fixed before the loop. Stops when the CoV of the last
    window accuracies falls under threshold, or at 100% unconverged.
    """
    if real.n_rows == 0:
        raise ValidationError("Method 2 needs a nonempty real dataset")
    if synthetic.scheme != real.scheme:
        raise ValidationError(f"Real ({real.scheme.value}) and synthetic ({synthetic.scheme.value}) schemes differ")
    vocabulary = synthetic.vocabulary.union(real.vocabulary)
    real = project_onto(real, vocabulary)
    synthetic = project_onto(synthetic, vocabulary)

    pool, test_rows = _holdout(real, holdout_fraction or settings.HOLDOUT_FRACTION, seed)
    test_set = real.take_rows(test_rows)
    classes = [c for c in real.classes if c in set(real.labels) | set(synthetic.labels)]
    monitor = ConvergenceMonitor(window or settings.COV_WINDOW, settings.METHOD2_THRESHOLD if threshold is None else threshold)
    steps = int(round(1.0 / step))

    def training_set(permutation: np.ndarray, fraction: float) -> Dataset:
        n = int(round(fraction * len(permutation)))
        return merge_datasets(synthetic, real.take_rows(permutation[:n]))

    def trial(s: int) -> float:
        train_set = training_set(pool_order, s * step)
        return fit_and_score(spec.with_seed(seed), train_set, test_set, classes).accuracy

    pool_order = pool[np.random.default_rng([seed, 1]).permutation(len(pool))]
    batch = max(1, threads)
    s = 0
    done = False
    while s <= steps and not done:
        indices = list(range(s, min(steps, s + batch - 1) + 1))
        for i, accuracy in zip(indices, ordered_map(trial, indices, threads)):
            if monitor.add(100.0 * i * step, accuracy):
                done = True
                break
        s = indices[-1] + 1

    trace = monitor.trace(step=100.0 * step)
    if not trace.converged:
        logger.warning("Method 2 did not converge; reporting at 100% real functions")
    stop_fraction = trace.stop_x / 100.0

    def repetition(r: int) -> Metrics:
        order = pool[np.random.default_rng([seed, 2, r]).permutation(len(pool))]
        return fit_and_score(spec.with_seed(seed + r), training_set(order, stop_fraction), test_set, classes)

    at_stop = aggregate(ordered_map(repetition, range(repetitions or settings.EVAL_REPETITIONS), threads))
    logger.info(f"Method 2 stopped at {trace.stop_x:.0f}% real functions, accuracy {at_stop.mean:.4f}")
    return Method2Result(trace=trace, at_stop=at_stop, holdout_size=len(test_rows))


def evaluate_method3(
    programs: Sequence[Tuple[str, Dataset]],
    spec: ModelSpec,
    seed: int,
    threads: int = 1,
) -> Method3Result:
    """Leave one program out: train on the others, test on every function of the held-out one."""
    if len(programs) < 2:
        raise ValidationError(f"Method 3 needs at least 2 programs, got {len(programs)}")
    names = [name for name, _ in programs]
    if len(set(names)) != len(names):
        raise ValidationError("Program names must be distinct")

    def held_out(p: int) -> ProgramEvaluation:
        name, test_source = programs[p]
        training = [d for q, (_, d) in enumerate(programs) if q != p]
        train_set = training[0]
        for other in training[1:]:
            train_set = merge_datasets(train_set, other)
        leaked = set(train_set.functions) & set(test_source.functions)
        if leaked:
            raise PipelineRuntimeError(f"Program {name} shares function symbols with its training set: {sorted(leaked)[:3]}")
        test_set = project_onto(test_source, train_set.vocabulary)
        model = train(spec.with_seed(seed), train_set)
        predicted = model.predict(test_set.X)
        truths = list(test_set.labels)
        classes = [c for c in test_set.classes if c in set(truths) | set(predicted)]
        metrics = compute_metrics(predicted, truths, classes)
        logger.info(f"Held-out program {name}: accuracy {metrics.accuracy:.4f}, macro F1 {metrics.macro_f1:.4f}")
        return ProgramEvaluation(program=name, n_train=train_set.n_rows, n_test=test_set.n_rows, metrics=metrics)

    return Method3Result(programs=ordered_map(held_out, range(len(programs)), threads))


def compare_models(a: RepeatedEval, b: RepeatedEval) -> Comparison:
    """Non-overlapping 95% intervals decide by mean; overlapping ones are not significant."""
    if a.ci95[0] > b.ci95[1]:
        return Comparison.A_BETTER
    if b.ci95[0] > a.ci95[1]:
        return Comparison.B_BETTER
    return Comparison.NOT_SIGNIFICANT
