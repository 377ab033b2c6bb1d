"""Loading, cleaning, and encoding of UCI-style classification CSV files.

The expected input is a comma-separated file with one example per row:
optional ID columns, numeric attributes, and a class-label column, with
missing values marked by a token (``?`` by default).  A small key=value
schema file describes the layout.  Targets use a strict 1-of-m encoding
(one output node per class, including two-class problems), inputs are
linearly rescaled to [0, 1] per column, and partitions are consecutive
slices in file order -- never shuffled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DatasetSchema:
    """Layout of a raw CSV: column roles, class count, missing token."""

    name: str
    inputs: int
    classes: int
    class_col: int
    id_cols: tuple[int, ...] = ()
    missing: str = "?"
    examples: int = 0  # expected row count; 0 disables the check

    def __post_init__(self):
        if self.inputs < 1:
            raise ValueError("need at least one input attribute")
        if self.classes < 2:
            raise ValueError("need at least two classes")

    @property
    def arity(self):
        return self.inputs + 1 + len(self.id_cols)


SCHEMA_KEYS = {"name", "inputs", "classes", "class_col", "id_cols", "missing", "examples"}


def load_schema(path):
    """Parse a key=value schema file; unknown keys are errors."""
    fields = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown schema key {key!r}")
            fields[key] = value
    for required in ("name", "inputs", "classes", "class_col"):
        if required not in fields:
            raise ValueError(f"{path}: missing schema key {required!r}")
    id_cols = fields.get("id_cols", "").strip()
    return DatasetSchema(
        name=fields["name"],
        inputs=int(fields["inputs"]),
        classes=int(fields["classes"]),
        class_col=int(fields["class_col"]),
        id_cols=tuple(int(c) for c in id_cols.split(",") if c.strip()) if id_cols else (),
        missing=fields.get("missing", "?"),
        examples=int(fields.get("examples", "0")),
    )


@dataclass(eq=False)
class RawTable:
    """Numeric attribute matrix (NaN marks missing) plus raw class labels."""

    inputs: np.ndarray  # (T, inputs) float, NaN where missing
    labels: list[str]
    schema: DatasetSchema

    @property
    def n_rows(self):
        return self.inputs.shape[0]


def load_csv(path, schema):
    """Read a CSV against a schema; flags missing tokens, drops ID columns."""
    rows = []
    labels = []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    attr_cols = [c for c in range(schema.arity)
                 if c != schema.class_col and c not in schema.id_cols]
    if len(attr_cols) != schema.inputs:
        raise ValueError(f"{path}: schema arity inconsistent "
                         f"({len(attr_cols)} attribute columns, expected {schema.inputs})")
    for lineno, line in enumerate(lines, start=1):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != schema.arity:
            raise ValueError(f"{path}:{lineno}: expected {schema.arity} columns, "
                             f"got {len(parts)}")
        row = np.empty(schema.inputs)
        for k, col in enumerate(attr_cols):
            token = parts[col]
            if token == schema.missing:
                row[k] = np.nan
            else:
                try:
                    row[k] = float(token)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: column {col}: "
                                     f"unparseable numeric {token!r}") from None
        rows.append(row)
        labels.append(parts[schema.class_col])
    table = RawTable(inputs=np.array(rows), labels=labels, schema=schema)
    if schema.examples and table.n_rows != schema.examples:
        raise ValueError(f"{path}: {table.n_rows} rows, schema expects {schema.examples}")
    return table


def impute_missing(table, strategy="mean", constant=0.0):
    """Replace NaNs: per-column mean of the present entries, or a constant."""
    if strategy not in ("mean", "constant"):
        raise ValueError(f"unknown imputation strategy {strategy!r}")
    X = table.inputs.copy()
    nan_mask = np.isnan(X)
    if strategy == "constant":
        X[nan_mask] = constant
    else:
        for col in range(X.shape[1]):
            miss = nan_mask[:, col]
            if not miss.any():
                continue
            if miss.all():
                raise ValueError(f"column {col} entirely missing")
            X[miss, col] = X[~miss, col].mean()
    return RawTable(inputs=X, labels=list(table.labels), schema=table.schema)


def rescale_inputs(table):
    """Linearly map each attribute column onto [0, 1]; constant columns to 0."""
    X = table.inputs.copy()
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    flat = span == 0
    span[flat] = 1.0
    X = (X - lo) / span
    X[:, flat] = 0.0
    return RawTable(inputs=X, labels=list(table.labels), schema=table.schema)


def class_mapping(table):
    """Map raw label tokens to class numbers 1..m (sorted numerically when
    every label parses as a number, lexicographically otherwise)."""
    unique = sorted(set(table.labels))
    try:
        unique.sort(key=float)
    except ValueError:
        pass
    if len(unique) != table.schema.classes:
        raise ValueError(f"found {len(unique)} distinct labels {unique}, "
                         f"schema expects {table.schema.classes}")
    return {label: k + 1 for k, label in enumerate(unique)}


def encode_targets(table):
    """1-of-m target vectors: class k becomes the unit vector e_k."""
    mapping = class_mapping(table)
    targets = np.zeros((table.n_rows, table.schema.classes))
    for row, label in enumerate(table.labels):
        targets[row, mapping[label] - 1] = 1.0
    return targets


@dataclass(eq=False)
class PatternSet:
    """Numeric input/target patterns plus the output-range metadata that the
    error-percentage formula needs."""

    inputs: np.ndarray   # (T, m)
    targets: np.ndarray  # (T, n)
    o_max: float = 1.0
    o_min: float = 0.0

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs/targets row counts differ")
        if self.inputs.shape[0] < 1:
            raise ValueError("pattern set is empty")
        if self.o_max < self.o_min:
            raise ValueError("o_max < o_min")

    @property
    def size(self):
        return self.inputs.shape[0]

    @property
    def n_inputs(self):
        return self.inputs.shape[1]

    @property
    def n_outputs(self):
        return self.targets.shape[1]

    def slice(self, start, stop):
        return PatternSet(self.inputs[start:stop].copy(), self.targets[start:stop].copy(),
                          self.o_max, self.o_min)

    @staticmethod
    def concatenate(a, b):
        if (a.o_max, a.o_min) != (b.o_max, b.o_min):
            raise ValueError("output ranges differ")
        return PatternSet(np.vstack([a.inputs, b.inputs]),
                          np.vstack([a.targets, b.targets]), a.o_max, a.o_min)


@dataclass
class SplitSpec:
    """Consecutive train/validation/test slice sizes, in file order."""

    train_count: int
    validation_count: int
    test_count: int

    def __post_init__(self):
        if min(self.train_count, self.validation_count, self.test_count) < 1:
            raise ValueError("every split needs at least one example")

    @property
    def total(self):
        return self.train_count + self.validation_count + self.test_count


def partition(inputs, targets, spec):
    """Slice encoded data into (train, validation, test) in original order."""
    if spec.total > inputs.shape[0]:
        raise ValueError(f"split needs {spec.total} rows, file has {inputs.shape[0]}")
    full = PatternSet(inputs, targets)
    a = spec.train_count
    b = a + spec.validation_count
    c = b + spec.test_count
    return full.slice(0, a), full.slice(a, b), full.slice(b, c)


def load_patterns(data_path, schema, spec, impute="mean"):
    """Full pipeline: load, impute, rescale, encode, partition."""
    table = load_csv(data_path, schema)
    table = impute_missing(table, impute)
    table = rescale_inputs(table)
    targets = encode_targets(table)
    return partition(table.inputs, targets, spec)


# -- classification metrics ---------------------------------------------------


def classify(output):
    """Winner-takes-all class number (1-based); ties go to the lowest index."""
    output = np.asarray(output)
    return int(np.argmax(output)) + 1


def misclassification_rate(net, patterns):
    """Percentage of patterns whose predicted class differs from the target."""
    predicted = np.argmax(net.forward_batch(patterns.inputs), axis=1)
    actual = np.argmax(patterns.targets, axis=1)
    return 100.0 * float(np.mean(predicted != actual))


def accuracy(net, patterns):
    return 100.0 - misclassification_rate(net, patterns)
