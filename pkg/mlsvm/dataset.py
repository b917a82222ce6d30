import logging
import math
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from sklearn.model_selection import StratifiedKFold

from .exceptions import DataFormatError, DimensionMismatchError, DomainError, ValidationError
from .parser import FormatParser
from .storage import atomic_write_text

logger = logging.getLogger(__name__)

Points = Union[np.ndarray, sp.csr_matrix]
FoldList = List[Tuple[np.ndarray, np.ndarray]]

FORMATS = ("svm", "csv")
NORMALIZATION_MODES = ("none", "minmax", "zscore")


@dataclass(frozen=True)
class Dataset:
    """Feature rows with labels in {-1, +1}.

    Attributes:
        points (Points): n x d feature matrix, dense or CSR.
        labels (Optional[np.ndarray]): Per-row labels in {-1, +1}; None for unlabeled data.
        label_names (Tuple[str, str]): Original label tokens mapped to -1 and +1.
    """
    points: Points
    labels: Optional[np.ndarray] = None
    label_names: Tuple[str, str] = ("-1", "+1")

    def __post_init__(self) -> None:
        if self.points.ndim != 2:
            raise ValidationError("points must be a 2-D matrix.")
        values = self.points.data if sp.issparse(self.points) else self.points
        if not np.all(np.isfinite(values)):
            raise ValidationError("points contain NaN or Inf values.")
        if self.labels is not None:
            if self.labels.shape != (self.points.shape[0],):
                raise DimensionMismatchError(
                    f"{self.labels.shape[0]} labels for {self.points.shape[0]} rows."
                )
            if not np.all(np.abs(self.labels) == 1):
                raise DomainError("every label must be exactly -1 or +1.")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    @property
    def n_plus(self) -> int:
        return 0 if self.labels is None else int(np.count_nonzero(self.labels == 1))

    @property
    def n_minus(self) -> int:
        return 0 if self.labels is None else int(np.count_nonzero(self.labels == -1))

    @property
    def r_imb(self) -> float:
        """Fraction of rows in the majority (-1) class."""
        return self.n_minus / len(self) if len(self) else 0.0

    def dense_points(self) -> np.ndarray:
        if sp.issparse(self.points):
            return np.asarray(self.points.toarray(), dtype=float)
        return np.asarray(self.points, dtype=float)

    def class_indices(self, label: int) -> np.ndarray:
        if self.labels is None:
            raise DomainError("dataset is unlabeled.")
        return np.flatnonzero(self.labels == label)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.points[indices], labels, self.label_names)


@dataclass(frozen=True)
class NormalizationParams:
    """Per-feature affine map fitted on a training set: x' = (x - shift) / scale."""
    mode: str
    shift: np.ndarray
    scale: np.ndarray

    def apply(self, points: Points) -> np.ndarray:
        dense = points.toarray() if sp.issparse(points) else np.asarray(points, dtype=float)
        if dense.shape[1] != self.shift.shape[0]:
            raise DimensionMismatchError(
                f"normalization fitted on {self.shift.shape[0]} features, got {dense.shape[1]}."
            )
        return (dense - self.shift) / self.scale


def _map_labels(tokens: List[str]) -> Tuple[np.ndarray, Tuple[str, str]]:
    """Maps a two-valued label set onto {-1, +1}.

    Numeric labels already in {-1, +1} keep their sign; otherwise the
    lexicographically smaller token becomes -1.
    """
    distinct = sorted(set(tokens))
    if len(distinct) > 2:
        raise DomainError(f"expected at most two distinct labels, found {len(distinct)}: {distinct[:5]}")

    try:
        numeric = {t: float(t) for t in distinct}
    except ValueError:
        numeric = None

    if numeric is not None and set(numeric.values()) <= {-1.0, 1.0}:
        labels = np.array([int(numeric[t]) for t in tokens], dtype=np.int8)
        names = {int(v): t for t, v in numeric.items()}
        return labels, (names.get(-1, "-1"), names.get(1, "+1"))

    mapping = {distinct[0]: -1}
    if len(distinct) == 2:
        mapping[distinct[1]] = 1
    labels = np.array([mapping[t] for t in tokens], dtype=np.int8)
    return labels, (distinct[0], distinct[1] if len(distinct) == 2 else "+1")


def _load_sparse_text(path: str, n_features: Optional[int], sparse: bool) -> Dataset:
    parser = FormatParser()
    data: List[float] = []
    indices: List[int] = []
    indptr = [0]
    tokens: List[str] = []
    labeled: Optional[bool] = None
    max_index = -1

    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            parsed = parser.parse_sample(line, line_no)
            if parsed['type'] == 'BLANK':
                continue
            has_label = parsed['label'] is not None
            if labeled is None:
                labeled = has_label
            elif labeled != has_label:
                raise DataFormatError("mixed labeled and unlabeled rows", line_no)
            if has_label:
                tokens.append(parsed['label'])
            for index, value in parsed['features']:
                if value != 0.0:
                    indices.append(index)
                    data.append(value)
                max_index = max(max_index, index)
            indptr.append(len(indices))

    if len(indptr) == 1:
        raise DataFormatError(f"no rows in '{path}'")

    width = max_index + 1
    if n_features is not None:
        if width > n_features:
            raise DimensionMismatchError(
                f"'{path}' uses feature index {width}, expected at most {n_features}."
            )
        width = n_features

    matrix = sp.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, width),
    )
    points: Points = matrix if sparse else matrix.toarray()
    if not labeled:
        return Dataset(points)
    labels, names = _map_labels(tokens)
    return Dataset(points, labels, names)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except (TypeError, ValueError):
        return False


def _load_csv(path: str, label_column: Optional[int], n_features: Optional[int], sparse: bool) -> Dataset:
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True,
                            keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"no rows in '{path}'")
    except pd.errors.ParserError as e:
        raise DataFormatError(f"ragged CSV in '{path}': {e}")

    if label_column is not None and not (0 <= label_column < frame.shape[1]):
        raise ValidationError(f"label column {label_column} out of range for {frame.shape[1]} columns.")
    feature_columns = [c for c in frame.columns if c != label_column]

    # header row: any non-numeric feature cell in the first row
    first_line = 1
    if len(frame) and not all(_is_number(frame.iloc[0][c]) for c in feature_columns):
        frame = frame.iloc[1:]
        first_line = 2
    if len(frame) == 0:
        raise DataFormatError(f"no rows in '{path}'")

    values = frame[feature_columns].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if bad_rows.size:
        raise DataFormatError("non-numeric or non-finite feature value", first_line + int(bad_rows[0]))

    if n_features is not None and values.shape[1] != n_features:
        raise DimensionMismatchError(f"'{path}' has {values.shape[1]} features, expected {n_features}.")

    points: Points = sp.csr_matrix(values) if sparse else values
    if label_column is None:
        return Dataset(points)
    labels, names = _map_labels([str(t).strip() for t in frame[label_column]])
    return Dataset(points, labels, names)


def load_dataset(path: str, fmt: str = "svm", label_column: Optional[int] = None,
                 n_features: Optional[int] = None, sparse: bool = False) -> Dataset:
    """Loads a dataset from a sparse text or CSV file.

    Args:
        path: File to read.
        fmt: ``svm`` (``<label> <index>:<value> ...``) or ``csv``.
        label_column: 0-based label column for CSV; None means unlabeled.
        n_features: Expected feature count (pads sparse rows, checks CSV width).
        sparse: Keep the feature matrix in CSR form.

    Returns:
        Dataset: Rows with labels normalized to {-1, +1}.

    Raises:
        FileNotFoundError: If the file does not exist.
        DataFormatError: On a malformed line (with its number) or an empty file.
        DomainError: On more than two distinct labels.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format '{fmt}', expected one of {FORMATS}.")
    if not os.path.exists(path):
        raise FileNotFoundError(f"Data file not found: {path}")

    if fmt == "svm":
        ds = _load_sparse_text(path, n_features, sparse)
    else:
        ds = _load_csv(path, label_column, n_features, sparse)
    logger.info("loaded %s: n=%d d=%d n_plus=%d n_minus=%d", path, len(ds), ds.n_features, ds.n_plus, ds.n_minus)
    return ds


def save_dataset(ds: Dataset, path: str) -> None:
    """Writes a dataset in the sparse text format. Zero features are omitted."""
    lines = []
    matrix = ds.points if sp.issparse(ds.points) else sp.csr_matrix(ds.points)
    matrix = sp.csr_matrix(matrix)
    matrix.sort_indices()
    for row in range(matrix.shape[0]):
        start, end = matrix.indptr[row], matrix.indptr[row + 1]
        pairs = [f"{int(j) + 1}:{float(v)!r}" for j, v in zip(matrix.indices[start:end], matrix.data[start:end])
                 if v != 0.0]
        head = [] if ds.labels is None else ["+1" if ds.labels[row] == 1 else "-1"]
        lines.append(" ".join(head + pairs))
    atomic_write_text(path, "\n".join(lines) + "\n")


def normalize_features(ds: Dataset, mode: str = "minmax") -> Tuple[Dataset, NormalizationParams]:
    """Scales every feature column using statistics of ``ds``.

    ``minmax`` maps to [0, 1]; ``zscore`` to mean 0 and population sd 1.
    Constant columns map to 0 in both modes.

    Args:
        ds: Non-empty dataset.
        mode: ``none``, ``minmax`` or ``zscore``.

    Returns:
        Tuple[Dataset, NormalizationParams]: The scaled copy and the fitted map.
    """
    if mode not in NORMALIZATION_MODES:
        raise ValidationError(f"unknown normalization '{mode}', expected one of {NORMALIZATION_MODES}.")
    if len(ds) == 0:
        raise DomainError("cannot normalize an empty dataset.")

    d = ds.n_features
    if mode == "none":
        return ds, NormalizationParams("none", np.zeros(d), np.ones(d))

    dense = ds.dense_points()
    if mode == "minmax":
        shift = dense.min(axis=0)
        scale = dense.max(axis=0) - shift
    else:
        shift = dense.mean(axis=0)
        scale = dense.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    params = NormalizationParams(mode, shift, scale)
    return Dataset(params.apply(dense), ds.labels, ds.label_names), params


def apply_normalization(ds: Dataset, params: NormalizationParams) -> Dataset:
    """Transforms ``ds`` with parameters fitted on another (training) set."""
    if params.mode == "none":
        return ds
    return Dataset(params.apply(ds.points), ds.labels, ds.label_names)


def shuffle_dataset(ds: Dataset, seed: int) -> Tuple[Dataset, np.ndarray]:
    """Returns a row-permuted copy and the permutation used."""
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(perm), perm


def stratified_split_indices(labels: np.ndarray, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Index form of :func:`stratified_split`."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}.")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for label in (1, -1):
        members = np.flatnonzero(labels == label)
        if members.size < 2:
            raise DomainError(f"class {label:+d} has {members.size} point(s); cannot stratify.")
        # round half up; every class keeps at least one training point
        n_test = min(int(math.floor(test_fraction * members.size + 0.5)), members.size - 1)
        shuffled = rng.permutation(members)
        test_parts.append(shuffled[:n_test])
        train_parts.append(shuffled[n_test:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Splits each class independently into train and test.

    Args:
        ds: Labeled dataset.
        test_fraction: Share of each class sent to test, rounded half up.
        seed: Seed; equal seeds give identical splits.

    Returns:
        Tuple[Dataset, Dataset]: (train, test), rows in original order.

    Raises:
        DomainError: If a class has fewer than 2 points.
    """
    if not ds.is_labeled:
        raise DomainError("cannot stratify an unlabeled dataset.")
    train_idx, test_idx = stratified_split_indices(ds.labels, test_fraction, seed)
    return ds.subset(train_idx), ds.subset(test_idx)


def k_fold_indices(ds: Union[Dataset, np.ndarray], k: int, seed: int) -> FoldList:
    """Stratified k-fold (train, validation) index pairs.

    Validation folds partition the index set and each carries every class
    within one point of its global proportion.

    Args:
        ds: Labeled dataset or its label vector.
        k: Number of folds, at least 2.
        seed: Shuffle seed.

    Returns:
        FoldList: k pairs of sorted index arrays.

    Raises:
        DomainError: If a class has fewer than k points.
    """
    labels = ds.labels if isinstance(ds, Dataset) else np.asarray(ds)
    if labels is None:
        raise DomainError("cannot build folds for an unlabeled dataset.")
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}.")
    for label in (1, -1):
        size = int(np.count_nonzero(labels == label))
        if size < k:
            raise DomainError(f"class {label:+d} has {size} point(s), fewer than k={k}.")

    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    dummy = np.zeros((labels.shape[0], 1))
    return [(np.sort(train), np.sort(val)) for train, val in splitter.split(dummy, labels)]
