"""Loading, one-hot encoding, and fold partitioning of binary classification data.

The extraction pipeline operates on datasets whose every feature is a 0/1
column. Arbitrary categorical CSV input is brought into that shape by
`load_csv` + `one_hot_encode`; the derived column names (`source=value`)
round-trip back to the original schema via `decode_feature_names`.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .seeding import rng_for

DATASET_FORMAT = "branchrules.dataset/1"
SCHEMA_FORMAT = "branchrules.schema/1"
FOLDS_FORMAT = "branchrules.folds/1"

_BINARY_VALUES = frozenset({"0", "1"})


@dataclass(frozen=True)
class RawTable:
    """String-valued tabular data as read from CSV, with typed feature columns.

    `column_kinds[i]` is "binary" when every value of column i is already
    "0"/"1", else "categorical". Labels are mapped at load time: class id 0 is
    the positive class, id 1 the negative class.
    """

    column_names: tuple[str, ...]
    column_kinds: tuple[str, ...]
    columns: tuple[tuple[str, ...], ...]
    labels: tuple[int, ...]
    class_names: tuple[str, str]
    label_column: str

    @property
    def n_records(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class BinaryDataset:
    """A fully binary feature matrix with binary labels.

    features: (n_records, n_features) uint8 matrix of 0/1 cells.
    labels: (n_records,) uint8 vector of class ids; 0 = positive class.
    class_names: (positive_name, negative_name).
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    class_names: tuple[str, str]

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.uint8)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if features.ndim != 2:
            raise DataError("feature matrix must be 2-dimensional")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DataError("labels must be a vector with one entry per record")
        if features.shape[0] == 0:
            raise DataError("dataset has no records")
        if features.shape[1] != len(self.feature_names):
            raise DataError("feature_names length does not match matrix width")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if np.any(features > 1):
            raise DataError("feature cells must be 0 or 1")
        if np.any(labels > 1):
            raise DataError("labels must be 0 or 1")
        for class_id in (0, 1):
            if not np.any(labels == class_id):
                raise DataError(
                    f"class {self.class_names[class_id]!r} has no records; "
                    "both classes must be present"
                )
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_records(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=2)

    def subset(self, indices: np.ndarray) -> "BinaryDataset":
        """A new dataset holding the given records (both classes must survive)."""
        idx = np.asarray(indices, dtype=np.intp)
        return BinaryDataset(
            self.features[idx], self.labels[idx], self.feature_names, self.class_names
        )


def load_csv(path, label_column: str, positive_class: str, *, skip_missing_rows: bool = False) -> RawTable:
    """Read a headered CSV file into a RawTable.

    The label column is removed from the feature columns and its values mapped
    to class ids (positive_class -> 0, the single other value -> 1). Cells are
    stripped of surrounding whitespace. Empty cells are rejected unless
    skip_missing_rows is set, in which case affected rows are dropped and the
    count reported via a warning.

    :raises DataError: missing file, missing/duplicate columns, ragged or
        empty rows, missing cells, non-binary label values, or a feature
        column name containing "=" (reserved for encoded names).
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = [[cell.strip() for cell in row] for row in reader if row]
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None

    if not rows:
        raise DataError(f"{path}: file is empty")
    header = rows[0]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not found in header")
    data_rows = rows[1:]
    if not data_rows:
        raise DataError(f"{path}: no data rows")

    width = len(header)
    for lineno, row in enumerate(data_rows, start=2):
        if len(row) != width:
            raise DataError(
                f"{path}: line {lineno} has {len(row)} cells, expected {width}"
            )

    if skip_missing_rows:
        kept = [row for row in data_rows if all(cell != "" for cell in row)]
        dropped = len(data_rows) - len(kept)
        if dropped:
            warnings.warn(f"{path}: dropped {dropped} rows with missing cells")
        data_rows = kept
        if not data_rows:
            raise DataError(f"{path}: all rows had missing cells")
    else:
        for lineno, row in enumerate(data_rows, start=2):
            for name, cell in zip(header, row):
                if cell == "":
                    raise DataError(
                        f"{path}: missing value at line {lineno}, column {name!r}"
                    )

    label_pos = header.index(label_column)
    feature_names = [name for i, name in enumerate(header) if i != label_pos]
    for name in feature_names:
        if "=" in name:
            raise DataError(
                f"{path}: feature column name {name!r} contains '=', which is "
                "reserved for encoded column names"
            )

    label_values = [row[label_pos] for row in data_rows]
    distinct_labels = sorted(set(label_values))
    if positive_class not in distinct_labels:
        raise DataError(
            f"{path}: positive class {positive_class!r} does not occur in "
            f"column {label_column!r} (values: {distinct_labels})"
        )
    if len(distinct_labels) > 2:
        raise DataError(
            f"{path}: label column {label_column!r} has {len(distinct_labels)} "
            f"distinct values {distinct_labels}; only binary classification is supported"
        )
    if len(distinct_labels) < 2:
        raise DataError(
            f"{path}: label column {label_column!r} has a single value; "
            "both classes must be present"
        )
    negative_class = next(v for v in distinct_labels if v != positive_class)
    labels = tuple(0 if v == positive_class else 1 for v in label_values)

    columns = []
    kinds = []
    for i, name in enumerate(header):
        if i == label_pos:
            continue
        values = tuple(row[i] for row in data_rows)
        columns.append(values)
        kinds.append("binary" if set(values) <= _BINARY_VALUES else "categorical")

    return RawTable(
        column_names=tuple(feature_names),
        column_kinds=tuple(kinds),
        columns=tuple(columns),
        labels=labels,
        class_names=(positive_class, negative_class),
        label_column=label_column,
    )


def one_hot_encode(table: RawTable) -> BinaryDataset:
    """Expand categorical columns into one 0/1 column per distinct value.

    Derived columns are named `source=value` in first-appearance order of the
    values; already-binary columns pass through unchanged under their own
    name. A column with a single distinct value is kept (constant) and
    reported via a warning.
    """
    names: list[str] = []
    out_columns: list[np.ndarray] = []
    for name, kind, values in zip(table.column_names, table.column_kinds, table.columns):
        distinct = list(dict.fromkeys(values))
        if len(distinct) == 1:
            warnings.warn(
                f"column {name!r} has a single distinct value {distinct[0]!r}"
            )
        arr = np.array(values)
        if kind == "binary":
            names.append(name)
            out_columns.append((arr == "1").astype(np.uint8))
        else:
            for value in distinct:
                names.append(f"{name}={value}")
                out_columns.append((arr == value).astype(np.uint8))

    features = np.column_stack(out_columns)
    labels = np.array(table.labels, dtype=np.uint8)
    return BinaryDataset(features, labels, tuple(names), table.class_names)


def decode_feature_names(feature_names) -> tuple[tuple[str, tuple[str, ...] | None], ...]:
    """Recover the source-column schema from encoded feature names.

    Returns one (source_name, values) entry per source column in order;
    values is None for a passed-through binary column and the ordered distinct
    value tuple for a one-hot expanded categorical column.
    """
    grouped: dict[str, list[str] | None] = {}
    for name in feature_names:
        if "=" in name:
            source, value = name.split("=", 1)
            existing = grouped.setdefault(source, [])
            if existing is None:
                raise DataError(
                    f"feature name {name!r} collides with a binary column {source!r}"
                )
            existing.append(value)
        else:
            if name in grouped:
                raise DataError(f"feature name {name!r} appears twice")
            grouped[name] = None
    return tuple(
        (source, tuple(values) if values is not None else None)
        for source, values in grouped.items()
    )


@dataclass(frozen=True)
class FoldPlan:
    """Stratified cross-validation fold assignments.

    assignments[r, i] is the fold of record i in repeat r. Every repeat
    partitions all records into n_folds disjoint nonempty folds, and within
    each fold every class count is within 1 of its proportional share.
    """

    n_folds: int
    n_repeats: int
    seed: int
    assignments: np.ndarray

    def __post_init__(self):
        assignments = np.ascontiguousarray(self.assignments, dtype=np.intp)
        if assignments.shape[0] != self.n_repeats:
            raise DataError("assignments must have one row per repeat")
        if np.any(assignments < 0) or np.any(assignments >= self.n_folds):
            raise DataError("fold assignments out of range")
        for r in range(self.n_repeats):
            counts = np.bincount(assignments[r], minlength=self.n_folds)
            if np.any(counts == 0):
                raise DataError(f"repeat {r} has an empty fold")
        assignments.setflags(write=False)
        object.__setattr__(self, "assignments", assignments)

    @property
    def n_records(self) -> int:
        return self.assignments.shape[1]

    def test_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments[repeat] == fold)

    def train_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments[repeat] != fold)

    def manifest_text(self) -> str:
        """The fold plan as an auditable text manifest."""
        lines = [
            f"# format: {FOLDS_FORMAT}",
            f"# n_folds={self.n_folds} n_repeats={self.n_repeats} seed={self.seed}",
            "repeat,fold,record",
        ]
        for r in range(self.n_repeats):
            for fold in range(self.n_folds):
                for record in self.test_indices(r, fold):
                    lines.append(f"{r},{fold},{record}")
        return "\n".join(lines) + "\n"


def stratified_folds(ds: BinaryDataset, n_folds: int, n_repeats: int, seed: int) -> FoldPlan:
    """Deterministic stratified fold assignment.

    Per repeat, each class's records are shuffled with a seed derived from
    (seed, repeat) and dealt round-robin across folds, which keeps every
    fold's class counts within 1 of the proportional share.

    :raises DataError: n_folds < 2, n_repeats < 1, or any class has fewer
        records than n_folds.
    """
    if n_folds < 2:
        raise DataError("n_folds must be at least 2")
    if n_repeats < 1:
        raise DataError("n_repeats must be at least 1")
    counts = ds.class_counts()
    for class_id in (0, 1):
        if counts[class_id] < n_folds:
            raise DataError(
                f"class {ds.class_names[class_id]!r} has {counts[class_id]} records, "
                f"fewer than n_folds={n_folds}"
            )
    assignments = np.empty((n_repeats, ds.n_records), dtype=np.intp)
    for r in range(n_repeats):
        rng = rng_for(seed, "folds", r)
        for class_id in (0, 1):
            idx = np.flatnonzero(ds.labels == class_id)
            idx = rng.permutation(idx)
            assignments[r, idx] = np.arange(len(idx)) % n_folds
    return FoldPlan(n_folds=n_folds, n_repeats=n_repeats, seed=seed, assignments=assignments)


def dataset_to_json(ds: BinaryDataset) -> str:
    """Serialize a BinaryDataset to the versioned interchange format."""
    payload = {
        "format": DATASET_FORMAT,
        "class_names": list(ds.class_names),
        "feature_names": list(ds.feature_names),
        "labels": ds.labels.tolist(),
        "rows": ds.features.tolist(),
    }
    return json.dumps(payload, indent=None, separators=(",", ":")) + "\n"


def dataset_from_json(text: str) -> BinaryDataset:
    """Parse the versioned dataset interchange format."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"dataset file is not valid JSON: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != DATASET_FORMAT:
        raise DataError(
            f"unrecognized dataset format tag {payload.get('format')!r} "
            f"(expected {DATASET_FORMAT!r})"
        )
    try:
        features = np.array(payload["rows"], dtype=np.uint8)
        labels = np.array(payload["labels"], dtype=np.uint8)
        names = tuple(payload["feature_names"])
        class_names = tuple(payload["class_names"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed dataset payload: {exc}") from None
    if len(class_names) != 2:
        raise DataError("dataset payload must name exactly two classes")
    if features.size == 0:
        raise DataError("dataset payload has no records")
    return BinaryDataset(features, labels, names, class_names)


def schema_to_json(table: RawTable) -> str:
    """Serialize the source-column schema sidecar for an encoded dataset."""
    payload = {
        "format": SCHEMA_FORMAT,
        "label_column": table.label_column,
        "class_names": list(table.class_names),
        "columns": [
            {
                "name": name,
                "kind": kind,
                "values": list(dict.fromkeys(values)),
            }
            for name, kind, values in zip(
                table.column_names, table.column_kinds, table.columns
            )
        ],
    }
    return json.dumps(payload, indent=2) + "\n"
