# retypelab/services/dataset_builder.py - Occurrence matrix assembly, merging and CSV persistence
import csv
import io
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError as SchemaError

from retypelab.core.errors import DatasetSchemaError
from retypelab.core.parallel import ordered_map
from retypelab.schemas.asm import FunctionListing, LabelScheme
from retypelab.schemas.dataset import Dataset, DatasetDiagnostics, FeatureVocabulary
from retypelab.schemas.patterns import ChunkBundle, ExtractionOptions, PostCallChunk, RetChunk
from retypelab.services.generalize import advanced_features, generalize_chunk
from retypelab.services.pattern_extract import build_chunk_bundle

logger = logging.getLogger(__name__)

TARGET_COLUMN = "return_type"
SCHEME_PRAGMA = "#scheme="
OPTIONS_PRAGMA = "#options="


def chunk_feature_names(chunk: Union[RetChunk, PostCallChunk], options: ExtractionOptions) -> Tuple[List[str], bool]:
    """Canonical names produced by one chunk, and whether the pattern budget cut it."""
    pattern_set = generalize_chunk(chunk, options.pattern_budget)
    names = pattern_set.names
    if options.include_advanced:
        names.extend(p.canonical_name for p in advanced_features(chunk))
    return names, pattern_set.truncated


def _function_features(name: str, bundle: ChunkBundle, options: ExtractionOptions) -> Tuple[List[str], int]:
    names: List[str] = []
    truncated = 0
    chunks: List[Union[RetChunk, PostCallChunk]] = list(bundle.ret_chunks.get(name, []))
    if options.include_post:
        chunks.extend(bundle.post_chunks.get(name, []))
    for chunk in chunks:
        chunk_names, cut = chunk_feature_names(chunk, options)
        names.extend(chunk_names)
        truncated += int(cut)
    return names, truncated


def build_dataset(
    bundle: ChunkBundle,
    scheme: LabelScheme = LabelScheme.HIGH_LEVEL,
    options: Optional[ExtractionOptions] = None,
    threads: int = 1,
) -> Dataset:
    """
    One row per labeled function; a cell is 1 when any chunk of that function
    (its RET chunks, plus POST-CALL chunks at its call sites) produced the feature.
    """
    options = options or ExtractionOptions()
    rows = [name for name in bundle.function_order if name in bundle.labels]
    per_function = ordered_map(lambda name: _function_features(name, bundle, options), rows, threads)

    index: Dict[str, int] = {}
    row_columns: List[List[int]] = []
    truncated = 0
    for names, cut in per_function:
        truncated += cut
        columns = []
        for feature in names:
            if feature not in index:
                index[feature] = len(index)
            columns.append(index[feature])
        row_columns.append(columns)

    X = np.zeros((len(rows), len(index)), dtype=np.uint8)
    for r, columns in enumerate(row_columns):
        X[r, columns] = 1

    if bundle.diagnostics.unlabeled:
        logger.debug(f"Excluded {len(bundle.diagnostics.unlabeled)} unlabeled functions from the rows")
    if truncated:
        logger.warning(f"Pattern budget {options.pattern_budget} truncated {truncated} chunks")
    logger.info(f"Built dataset with {len(rows)} rows and {len(index)} features ({scheme.value})")

    return Dataset(
        vocabulary=FeatureVocabulary(names=tuple(index)),
        X=X,
        labels=tuple(scheme.label_for(bundle.labels[name]) for name in rows),
        functions=tuple(rows),
        scheme=scheme,
        options=options,
        diagnostics=DatasetDiagnostics(
            unlabeled=list(bundle.diagnostics.unlabeled),
            no_return=list(bundle.diagnostics.no_return),
            truncated_chunks=truncated,
        ),
    )


def build_from_functions(
    functions: Sequence[FunctionListing],
    scheme: LabelScheme = LabelScheme.HIGH_LEVEL,
    options: Optional[ExtractionOptions] = None,
    threads: int = 1,
) -> Dataset:
    options = options or ExtractionOptions()
    bundle = build_chunk_bundle(functions, options.max_len, options.anchor_mode, threads)
    return build_dataset(bundle, scheme, options, threads)


def feature_rows(
    functions: Sequence[FunctionListing],
    vocabulary: FeatureVocabulary,
    options: Optional[ExtractionOptions] = None,
    threads: int = 1,
) -> Tuple[List[str], np.ndarray]:
    """
    Rows in a fixed vocabulary for every function with at least one return,
    labeled or not. Features outside the vocabulary are dropped.
    """
    options = options or ExtractionOptions()
    bundle = build_chunk_bundle(functions, options.max_len, options.anchor_mode, threads)
    names = [name for name in bundle.function_order if bundle.ret_chunks.get(name)]
    per_function = ordered_map(lambda name: _function_features(name, bundle, options)[0], names, threads)
    X = np.zeros((len(names), len(vocabulary)), dtype=np.uint8)
    for r, features in enumerate(per_function):
        columns = [vocabulary.index[f] for f in features if f in vocabulary]
        X[r, columns] = 1
    return names, X


def project_onto(dataset: Dataset, vocabulary: FeatureVocabulary) -> Dataset:
    """Re-express a dataset's rows in another vocabulary; unknown features are dropped."""
    X = np.zeros((dataset.n_rows, len(vocabulary)), dtype=np.uint8)
    source, target = [], []
    for name, column in vocabulary.index.items():
        if name in dataset.vocabulary:
            source.append(dataset.vocabulary.index[name])
            target.append(column)
    if source:
        X[:, target] = dataset.X[:, source]
    return dataset.model_copy(update={"X": X, "vocabulary": vocabulary})


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    if a.scheme != b.scheme:
        raise DatasetSchemaError(f"Cannot merge a {a.scheme.value} dataset with a {b.scheme.value} dataset")
    vocabulary = a.vocabulary.union(b.vocabulary)
    left = project_onto(a, vocabulary)
    right = project_onto(b, vocabulary)
    return Dataset(
        vocabulary=vocabulary,
        X=np.vstack([left.X, right.X]),
        labels=a.labels + b.labels,
        functions=a.functions + b.functions,
        scheme=a.scheme,
        options=a.options,
    )


def prune_rare_features(dataset: Dataset, min_support_rows: int = 2) -> Dataset:
    """Drop features seen in fewer than min_support_rows rows."""
    keep = np.flatnonzero(dataset.support() >= min_support_rows)
    pruned = dataset.n_features - len(keep)
    if pruned:
        logger.info(f"Pruned {pruned} features with support below {min_support_rows} rows")
    result = dataset.take_columns(keep)
    diagnostics = dataset.diagnostics.model_copy(update={"pruned_features": dataset.diagnostics.pruned_features + pruned})
    return result.model_copy(update={"diagnostics": diagnostics})


def stratification_report(dataset: Dataset, folds: int = 2) -> Dict[str, Dict[str, Union[int, bool]]]:
    """Per-class row counts and whether each class can be spread over ``folds`` folds."""
    return {
        label: {"count": count, "stratifiable": count >= folds}
        for label, count in dataset.class_counts().items()
    }


def names_path(path: Path) -> Path:
    return Path(f"{path}.names")


def write_csv(dataset: Dataset, path: Path) -> None:
    """Scheme pragma, optional options pragma, quoted header ending in return_type, one row per function."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.X, columns=list(dataset.vocabulary.names))
    frame[TARGET_COLUMN] = list(dataset.labels)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"{SCHEME_PRAGMA}{dataset.scheme.value}\n")
        if dataset.options is not None:
            f.write(f"{OPTIONS_PRAGMA}{dataset.options.model_dump_json()}\n")
        frame.to_csv(f, index=False, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
    names_path(path).write_text("".join(f"{name}\n" for name in dataset.functions), encoding="utf-8")
    logger.info(f"Wrote {dataset.n_rows}x{dataset.n_features} dataset to {path}")


def read_csv(path: Path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetSchemaError(f"Dataset file {path} not found")
    options = None
    header_row = 2
    with open(path, newline="", encoding="utf-8") as f:
        pragma = f.readline().rstrip("\n")
        if not pragma.startswith(SCHEME_PRAGMA):
            raise DatasetSchemaError(f"first line must be {SCHEME_PRAGMA}<scheme>, got {pragma!r}", row=1)
        try:
            scheme = LabelScheme(pragma[len(SCHEME_PRAGMA):].strip())
        except ValueError:
            raise DatasetSchemaError(f"unknown scheme in {pragma!r}", row=1)
        header_line = f.readline()
        if header_line.startswith(OPTIONS_PRAGMA):
            try:
                options = ExtractionOptions.model_validate_json(header_line[len(OPTIONS_PRAGMA):].strip())
            except SchemaError as e:
                raise DatasetSchemaError(f"invalid extraction options: {e}", row=2)
            header_row = 3
            header_line = f.readline()
        header = next(csv.reader([header_line]), [])
        if not header or header[-1] != TARGET_COLUMN:
            raise DatasetSchemaError(f"header must end with {TARGET_COLUMN!r}", row=header_row)
        features = header[:-1]
        if len(set(features)) != len(features):
            raise DatasetSchemaError("header repeats a feature name", row=header_row)
        body = f.read()
    if body.strip():
        frame = pd.read_csv(io.StringIO(body), header=None, names=header, dtype=str, keep_default_na=False)
    else:
        frame = pd.DataFrame(columns=header, dtype=str)

    first_row = header_row + 1
    cells = frame[features].to_numpy(dtype=str) if features else np.zeros((len(frame), 0), dtype=str)
    bad = np.argwhere((cells != "0") & (cells != "1"))
    if len(bad):
        r, c = bad[0]
        raise DatasetSchemaError(f"cell value {cells[r, c]!r} is not 0 or 1", row=int(r) + first_row, column=features[c])

    labels = tuple(frame[TARGET_COLUMN].tolist())
    allowed = set(scheme.classes())
    for r, label in enumerate(labels):
        if label not in allowed:
            raise DatasetSchemaError(f"unknown label {label!r}", row=r + first_row, column=TARGET_COLUMN)

    sidecar = names_path(path)
    if sidecar.is_file():
        functions = tuple(line for line in sidecar.read_text(encoding="utf-8").splitlines() if line)
        if len(functions) != len(labels):
            raise DatasetSchemaError(f"{sidecar} lists {len(functions)} functions for {len(labels)} rows")
    else:
        functions = tuple(f"row{r}" for r in range(len(labels)))

    return Dataset(
        vocabulary=FeatureVocabulary(names=tuple(features)),
        X=(cells == "1").astype(np.uint8),
        labels=labels,
        functions=functions,
        scheme=scheme,
        options=options,
    )
