"""Tabular ingestion: feature schema, CSV loading, empirical CDFs and binarization.

Instances are held in an *encoded* float matrix: numeric features keep their
value, categorical features store the index of their category, binary features
store 0 or 1. Everything downstream (actions, predictors, the solver) works on
that encoding; :meth:`Dataset.decode_row` maps back to raw values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("numeric", "categorical", "binary")
ACTIONABILITY = ("free", "immutable", "increase_only", "decrease_only")
DEFAULT_BINS = 10


class SchemaError(ValueError):
    """Raised for malformed schemas or data that does not conform to one."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    actionability: str = "free"
    bins: int | None = None
    max_bin_shift: int | None = None
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.actionability not in ACTIONABILITY:
            raise SchemaError(
                f"feature {self.name!r}: unknown actionability {self.actionability!r}"
            )
        if self.kind == "numeric":
            bins = DEFAULT_BINS if self.bins is None else int(self.bins)
            if bins < 2:
                raise SchemaError(f"feature {self.name!r}: bins must be >= 2")
            shift = bins - 1 if self.max_bin_shift is None else int(self.max_bin_shift)
            if shift < 1:
                raise SchemaError(f"feature {self.name!r}: max_bin_shift must be >= 1")
            object.__setattr__(self, "bins", bins)
            object.__setattr__(self, "max_bin_shift", shift)
        else:
            if self.actionability in ("increase_only", "decrease_only"):
                raise SchemaError(
                    f"feature {self.name!r}: {self.actionability} requires a numeric feature"
                )
            object.__setattr__(self, "bins", None)
            object.__setattr__(self, "max_bin_shift", None)
        if self.kind == "categorical":
            cats = tuple(str(c) for c in self.categories)
            if not cats:
                raise SchemaError(f"feature {self.name!r}: categories must be non-empty")
            if len(set(cats)) != len(cats):
                raise SchemaError(f"feature {self.name!r}: duplicate categories")
            object.__setattr__(self, "categories", cats)
        else:
            object.__setattr__(self, "categories", ())

    @property
    def mutable(self) -> bool:
        return self.actionability != "immutable"

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "kind": self.kind, "actionability": self.actionability}
        if self.kind == "numeric":
            out["bins"] = self.bins
            out["max_bin_shift"] = self.max_bin_shift
        if self.kind == "categorical":
            out["categories"] = list(self.categories)
        return out


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, j: int) -> FeatureSpec:
        return self.features[j]

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index(self, name: str) -> int:
        for j, f in enumerate(self.features):
            if f.name == name:
                return j
        raise SchemaError(f"unknown feature {name!r}")

    def to_dict(self) -> dict:
        return {"features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        try:
            entries = doc["features"]
        except (KeyError, TypeError):
            raise SchemaError("schema document needs a 'features' list") from None
        specs = []
        for entry in entries:
            unknown = set(entry) - {
                "name", "kind", "actionability", "bins", "max_bin_shift", "categories",
            }
            if unknown:
                raise SchemaError(f"unknown schema keys {sorted(unknown)}")
            specs.append(
                FeatureSpec(
                    name=entry["name"],
                    kind=entry["kind"],
                    actionability=entry.get("actionability", "free"),
                    bins=entry.get("bins"),
                    max_bin_shift=entry.get("max_bin_shift"),
                    categories=tuple(entry.get("categories", ())),
                )
            )
        return cls(tuple(specs))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_bins(self, bins: int) -> "FeatureSchema":
        """Copy of the schema with every numeric feature re-binned to ``bins``."""
        specs = []
        for f in self.features:
            if f.kind == "numeric":
                shift = bins - 1 if f.max_bin_shift == f.bins - 1 else min(f.max_bin_shift, bins - 1)
                f = FeatureSpec(f.name, f.kind, f.actionability, bins, shift)
            specs.append(f)
        return FeatureSchema(tuple(specs))


def load_schema(path: str | Path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


@dataclass
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema):
            raise SchemaError("instance matrix does not match the schema width")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.X.shape[0],):
                raise SchemaError("label vector length differs from instance count")
        _check_encoded(self.schema, self.X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return Dataset(self.schema, self.X[rows], labels)

    def decode_row(self, i: int) -> dict:
        return decode_instance(self.schema, self.X[i])

    @classmethod
    def from_records(cls, schema: FeatureSchema, records: Iterable[dict], labels=None):
        rows = [encode_instance(schema, r) for r in records]
        X = np.array(rows, dtype=np.float64).reshape(len(rows), len(schema))
        return cls(schema, X, labels)


def encode_instance(schema: FeatureSchema, record: dict) -> list[float]:
    row = []
    for f in schema:
        v = record[f.name]
        if f.kind == "numeric":
            row.append(float(v))
        elif f.kind == "binary":
            iv = int(v)
            if iv not in (0, 1):
                raise SchemaError(f"{f.name}: binary value {v!r} not in {{0,1}}")
            row.append(float(iv))
        else:
            try:
                row.append(float(f.categories.index(str(v))))
            except ValueError:
                raise SchemaError(f"{f.name}: unknown category {v!r}") from None
    return row


def decode_instance(schema: FeatureSchema, row: Sequence[float]) -> dict:
    out = {}
    for f, v in zip(schema, row):
        if f.kind == "numeric":
            out[f.name] = float(v)
        elif f.kind == "binary":
            out[f.name] = int(v)
        else:
            out[f.name] = f.categories[int(v)]
    return out


def format_value(spec: FeatureSpec, v: float) -> str:
    if spec.kind == "numeric":
        return repr(float(v))
    if spec.kind == "binary":
        return str(int(v))
    return spec.categories[int(v)]


def _check_encoded(schema: FeatureSchema, X: np.ndarray) -> None:
    for j, f in enumerate(schema):
        col = X[:, j]
        if f.kind == "numeric":
            if not np.all(np.isfinite(col)):
                raise SchemaError(f"{f.name}: non-finite numeric values")
        elif f.kind == "binary":
            if not np.all((col == 0) | (col == 1)):
                raise SchemaError(f"{f.name}: binary values must be 0 or 1")
        else:
            ok = (col == np.floor(col)) & (col >= 0) & (col < len(f.categories))
            if not np.all(ok):
                raise SchemaError(f"{f.name}: category codes out of range")


def load_dataset(
    path: str | Path, schema: FeatureSchema, label_column: str | None = None
) -> Dataset:
    """Read a UTF-8 CSV with a header row into a :class:`Dataset`.

    Column order in the file does not matter. Columns that are neither schema
    features nor ``label_column`` are ignored. Row numbers in error messages
    count data rows from 1 (the header is row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        positions = {}
        for f in schema:
            if f.name not in header:
                raise SchemaError(f"{path}: missing column {f.name!r}")
            positions[f.name] = header.index(f.name)
        label_pos = None
        if label_column is not None:
            if label_column not in header:
                raise SchemaError(f"{path}: missing label column {label_column!r}")
            label_pos = header.index(label_column)

        rows, labels = [], []
        for r, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(header):
                raise SchemaError(f"{path}: row {r} has {len(cells)} cells, expected {len(header)}")
            row = []
            for f in schema:
                cell = cells[positions[f.name]].strip()
                row.append(_parse_cell(f, cell, r, path))
            rows.append(row)
            if label_pos is not None:
                cell = cells[label_pos].strip()
                if cell not in ("0", "1"):
                    raise SchemaError(
                        f"{path}: row {r}, column {label_column!r}: label {cell!r} not in {{0,1}}"
                    )
                labels.append(int(cell))

    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(schema))
    return Dataset(schema, X, np.array(labels) if label_pos is not None else None)


def _parse_cell(f: FeatureSpec, cell: str, r: int, path) -> float:
    where = f"{path}: row {r}, column {f.name!r}"
    if f.kind == "numeric":
        try:
            v = float(cell)
        except ValueError:
            raise SchemaError(f"{where}: cannot parse {cell!r} as a number") from None
        if not np.isfinite(v):
            raise SchemaError(f"{where}: non-finite value {cell!r}")
        return v
    if f.kind == "binary":
        if cell not in ("0", "1"):
            raise SchemaError(f"{where}: binary value {cell!r} not in {{0,1}}")
        return float(cell)
    try:
        return float(f.categories.index(cell))
    except ValueError:
        raise SchemaError(f"{where}: unknown category {cell!r}") from None


def write_dataset(path: str | Path, data: Dataset, label_column: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = data.schema.names + ([label_column] if label_column else [])
        w.writerow(header)
        for i in range(data.n):
            row = [format_value(f, v) for f, v in zip(data.schema, data.X[i])]
            if label_column:
                row.append(str(int(data.labels[i])))
            w.writerow(row)


def compute_affected(data: Dataset, predictor) -> np.ndarray:
    """Indices of instances the predictor assigns to the undesired class 0."""
    labels = np.asarray(predictor.predict_batch(data.X))
    return np.flatnonzero(labels == 0)


class EmpiricalCdf:
    """Per-feature empirical CDFs over a full dataset.

    ``Q_j(v) = #{values <= v} / N``. Counts are exposed as integers so that
    percentile shifts can be accumulated exactly as numerators over ``N``.
    For categorical and binary features any change of value counts as a full
    shift of ``N``.
    """

    def __init__(self, schema: FeatureSchema, X: np.ndarray):
        if X.shape[0] == 0:
            raise SchemaError("cannot fit CDFs on an empty dataset")
        self.schema = schema
        self.n = int(X.shape[0])
        self._sorted = {
            j: np.sort(X[:, j]) for j, f in enumerate(schema) if f.kind == "numeric"
        }

    def count(self, j: int, v) -> np.ndarray:
        """Number of dataset values of numeric feature ``j`` that are <= ``v``."""
        return np.searchsorted(self._sorted[j], v, side="right").astype(np.int64)

    def __call__(self, j: int, v):
        if self.schema[j].kind != "numeric":
            raise SchemaError(f"{self.schema[j].name}: CDF defined for numeric features only")
        return self.count(j, v) / self.n

    def shift_numerator(self, j: int, old, new) -> np.ndarray:
        """``N * |Q_j(new) - Q_j(old)|`` as an exact integer (vectorized)."""
        if self.schema[j].kind == "numeric":
            return np.abs(self.count(j, new) - self.count(j, old))
        changed = np.asarray(old) != np.asarray(new)
        return np.where(changed, self.n, 0).astype(np.int64)


def fit_cdfs(data: Dataset) -> EmpiricalCdf:
    return EmpiricalCdf(data.schema, data.X)


@dataclass(frozen=True)
class NumericBinning:
    """Equal-width binning of one numeric feature over ``[lo, hi]``.

    ``thresholds`` are the interior edges. A value's bin is the number of
    thresholds strictly below it, so ``x <= thresholds[k]`` holds exactly when
    ``bin(x) <= k``; that keeps split predicates and bin shifts consistent.
    """

    lo: float
    hi: float
    bins: int
    thresholds: tuple[float, ...]

    @property
    def constant(self) -> bool:
        return not self.thresholds

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def bin_of(self, v):
        return np.searchsorted(np.asarray(self.thresholds), v, side="left")

    def midpoint(self, b):
        return self.lo + (np.asarray(b) + 0.5) * self.width


class Binning(dict):
    """Feature index -> :class:`NumericBinning` for every numeric feature."""

    def to_dict(self, schema: FeatureSchema) -> dict:
        return {
            schema[j].name: {"lo": b.lo, "hi": b.hi, "bins": b.bins}
            for j, b in sorted(self.items())
        }


def fit_binning(data: Dataset) -> Binning:
    """Equal-width edges on the full dataset; constant features get no edges."""
    out = Binning()
    for j, f in enumerate(data.schema):
        if f.kind != "numeric":
            continue
        col = data.X[:, j]
        lo, hi = float(col.min()), float(col.max())
        if lo == hi:
            warnings.warn(f"numeric feature {f.name!r} is constant; it gets no splits or actions")
            logger.warning("constant numeric feature %s", f.name)
            out[j] = NumericBinning(lo, hi, f.bins, ())
            continue
        edges = np.linspace(lo, hi, f.bins + 1)[1:-1]
        out[j] = NumericBinning(lo, hi, f.bins, tuple(float(e) for e in edges))
    return out


@dataclass(frozen=True)
class Predicate:
    """A binary test on an original feature: ``x_j <= value`` or ``x_j == value``."""

    feature: int
    op: str
    value: float

    def holds(self, X: np.ndarray) -> np.ndarray:
        col = np.asarray(X)[..., self.feature]
        if self.op == "le":
            return col <= self.value
        return col == self.value

    def describe(self, schema: FeatureSchema) -> str:
        f = schema[self.feature]
        if self.op == "le":
            return f"{f.name} <= {self.value:g}"
        return f"{f.name} == {format_value(f, self.value)}"

    def to_dict(self, schema: FeatureSchema) -> dict:
        f = schema[self.feature]
        if self.op == "le":
            return {"feature": f.name, "threshold": self.value}
        if f.kind == "categorical":
            return {"feature": f.name, "category": f.categories[int(self.value)]}
        return {"feature": f.name, "equals": int(self.value)}


@dataclass
class BinarizedView:
    """Bit matrix of predicates over the affected instances.

    ``bits[i, p]`` is 1 when predicate ``p`` holds for affected instance ``i``
    (the row order follows ``affected``).
    """

    predicates: list[Predicate]
    bits: np.ndarray
    affected: np.ndarray
    binning: Binning = field(default_factory=Binning)

    @property
    def n_predicates(self) -> int:
        return len(self.predicates)


def make_predicates(schema: FeatureSchema, binning: Binning) -> list[Predicate]:
    preds = []
    for j, f in enumerate(schema):
        if f.kind == "numeric":
            preds.extend(Predicate(j, "le", t) for t in binning[j].thresholds)
        elif f.kind == "categorical":
            preds.extend(Predicate(j, "eq", float(c)) for c in range(len(f.categories)))
        else:
            preds.append(Predicate(j, "eq", 1.0))
    return preds


def binarize(data: Dataset, affected, binning: Binning | None = None) -> BinarizedView:
    if binning is None:
        binning = fit_binning(data)
    affected = np.asarray(affected, dtype=np.int64)
    preds = make_predicates(data.schema, binning)
    X0 = data.X[affected]
    bits = np.zeros((len(affected), len(preds)), dtype=np.uint8)
    for p, pred in enumerate(preds):
        bits[:, p] = pred.holds(X0)
    return BinarizedView(preds, bits, affected, binning)
