"""Dataset schemas, CSV ingestion, min-max + one-hot encoding, and splits.

A schema declares the feature layout (names, kinds, categorical
vocabularies) up front, so the encoded width is known before any data is
read and stays identical across machines. Fitting touches only the training
records; transform is a pure function of (record, fitted state).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyDatasetError,
    MissingLabelError,
    RowParseError,
    SchemaMismatchError,
    UnknownClassError,
)
from .numgrad.checkpoint import load_arrays, save_arrays
from .seeding import substream

SCHEMA_FORMAT_VERSION = 1
STATE_FORMAT_VERSION = 1

UNLABELED = -1  # label slot for rows with an empty label column

MASK_VALUE = "-"  # categorical value masked to an all-zero block


class UnseenCategoryWarning(UserWarning):
    """A categorical value outside the schema vocabulary was zero-masked."""


class DegenerateFeatureWarning(UserWarning):
    """A numeric feature was constant on the fitting data (min == max)."""


@dataclass(frozen=True)
class Feature:
    """One schema column: numeric, or categorical with a frozen vocabulary."""

    name: str
    kind: str
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name or self.name != self.name.strip():
            raise SchemaMismatchError(f"bad feature name {self.name!r}")
        if self.kind not in ("numeric", "categorical"):
            raise SchemaMismatchError(f"feature {self.name}: kind must be numeric or categorical")
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if self.kind == "categorical":
            if not self.vocabulary:
                raise SchemaMismatchError(f"feature {self.name}: categorical needs a vocabulary")
            lowered = [v.lower() for v in self.vocabulary]
            if len(set(lowered)) != len(lowered):
                raise SchemaMismatchError(f"feature {self.name}: duplicate vocabulary entries")
        elif self.vocabulary:
            raise SchemaMismatchError(f"feature {self.name}: numeric features carry no vocabulary")

    @property
    def width(self) -> int:
        return 1 if self.kind == "numeric" else len(self.vocabulary)


@dataclass(frozen=True)
class DatasetSchema:
    """Ordered feature list plus the label column and class names.

    label_aliases maps label spellings seen in data files onto canonical
    class names (e.g. a dataset revision that renamed a class), matched
    case-insensitively.
    """

    features: tuple[Feature, ...]
    label_column: str
    class_names: tuple[str, ...]
    description: str = ""
    label_aliases: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "label_aliases",
                           tuple((a, c) for a, c in self.label_aliases))
        if not self.features:
            raise SchemaMismatchError("schema needs at least one feature")
        names = [f.name.lower() for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaMismatchError("feature names must be unique (case-insensitive)")
        if not self.label_column:
            raise SchemaMismatchError("label_column is required")
        if self.label_column.lower() in names:
            raise SchemaMismatchError("label_column must not also be a feature")
        if not self.class_names or len(set(self.class_names)) != len(self.class_names):
            raise SchemaMismatchError("class_names must be non-empty and unique")
        lowered_classes = {c.lower() for c in self.class_names}
        for alias, canonical in self.label_aliases:
            if canonical not in self.class_names:
                raise SchemaMismatchError(
                    f"label alias target {canonical!r} is not a class name")
            if alias.lower() in lowered_classes:
                raise SchemaMismatchError(f"label alias {alias!r} shadows a class name")

    @property
    def encoded_width(self) -> int:
        return sum(f.width for f in self.features)

    def block_spans(self) -> tuple[tuple[Feature, int, int], ...]:
        """(feature, start, stop) of each feature's slice in the encoded vector."""
        spans = []
        pos = 0
        for f in self.features:
            spans.append((f, pos, pos + f.width))
            pos += f.width
        return tuple(spans)

    def class_index(self, name: str) -> int:
        lowered = name.lower()
        for i, c in enumerate(self.class_names):
            if c.lower() == lowered:
                return i
        for alias, canonical in self.label_aliases:
            if alias.lower() == lowered:
                return self.class_names.index(canonical)
        raise UnknownClassError(f"label {name!r} is not among classes {self.class_names}")

    def fingerprint(self) -> str:
        canon = json.dumps(schema_to_dict(self), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def schema_to_dict(schema: DatasetSchema) -> dict:
    features = []
    for f in schema.features:
        entry: dict = {"name": f.name, "kind": f.kind}
        if f.kind == "categorical":
            entry["vocabulary"] = list(f.vocabulary)
        features.append(entry)
    out = {
        "format_version": SCHEMA_FORMAT_VERSION,
        "label_column": schema.label_column,
        "class_names": list(schema.class_names),
        "features": features,
    }
    if schema.description:
        out["description"] = schema.description
    if schema.label_aliases:
        out["label_aliases"] = {a: c for a, c in schema.label_aliases}
    return out


def schema_from_dict(doc: dict) -> DatasetSchema:
    if not isinstance(doc, dict):
        raise SchemaMismatchError("schema document must be a JSON object")
    allowed = {"format_version", "label_column", "class_names", "features",
               "description", "label_aliases"}
    unknown = set(doc) - allowed
    if unknown:
        raise SchemaMismatchError(f"unknown schema keys: {sorted(unknown)}")
    if doc.get("format_version") != SCHEMA_FORMAT_VERSION:
        raise SchemaMismatchError(
            f"unsupported schema format version {doc.get('format_version')!r}")
    features = []
    for entry in doc.get("features", []):
        extra = set(entry) - {"name", "kind", "vocabulary"}
        if extra:
            raise SchemaMismatchError(f"unknown feature keys: {sorted(extra)}")
        features.append(Feature(entry.get("name", ""), entry.get("kind", ""),
                                tuple(entry.get("vocabulary", ()))))
    aliases = tuple(sorted(doc.get("label_aliases", {}).items()))
    return DatasetSchema(tuple(features), doc.get("label_column", ""),
                         tuple(doc.get("class_names", ())),
                         doc.get("description", ""), aliases)


def save_schema(path: str, schema: DatasetSchema) -> None:
    write_json(path, schema_to_dict(schema))


def load_schema(path: str) -> DatasetSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


def packaged_schema(name: str) -> DatasetSchema:
    """Load one of the schemas shipped inside the package (by file stem)."""
    here = os.path.join(os.path.dirname(__file__), "schemas", name + ".json")
    if not os.path.exists(here):
        raise SchemaMismatchError(f"no packaged schema named {name!r}")
    return load_schema(here)


@dataclass(frozen=True)
class RawRecord:
    """One parsed CSV row: feature values in schema order, plus the label string."""

    values: tuple
    label: str | None


def load_csv(path: str, schema: DatasetSchema) -> list[RawRecord]:
    """Parse a CSV with a header row against the schema.

    Header must contain every feature name and the label column (order
    irrelevant, case-insensitive, extra columns ignored). Numeric fields are
    parsed as floats; categorical fields and labels are whitespace-stripped
    strings. An empty label cell yields label None.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatchError(f"{path}: empty file, no header row") from None
        positions = {name.strip().lower(): i for i, name in enumerate(header)}
        missing = [f.name for f in schema.features if f.name.lower() not in positions]
        if schema.label_column.lower() not in positions:
            missing.append(schema.label_column)
        if missing:
            raise SchemaMismatchError(f"{path}: header is missing columns {missing}")
        cols = [positions[f.name.lower()] for f in schema.features]
        label_col = positions[schema.label_column.lower()]

        records = []
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue  # tolerate blank lines
            if len(row) < len(header):
                raise RowParseError(row_idx, f"expected {len(header)} fields, got {len(row)}")
            values = []
            for f, c in zip(schema.features, cols):
                raw = row[c].strip()
                if f.kind == "numeric":
                    try:
                        values.append(float(raw))
                    except ValueError:
                        raise RowParseError(
                            row_idx, f"feature {f.name}: {raw!r} is not numeric") from None
                else:
                    values.append(raw)
            label = row[label_col].strip()
            records.append(RawRecord(tuple(values), label if label else None))
    return records


@dataclass(frozen=True)
class PreprocessorState:
    """Fitted per-numeric-feature (min, max); vocabularies come from the schema."""

    schema: DatasetSchema
    minima: np.ndarray
    maxima: np.ndarray

    def __post_init__(self):
        numeric = [f for f in self.schema.features if f.kind == "numeric"]
        if self.minima.shape != (len(numeric),) or self.maxima.shape != (len(numeric),):
            raise SchemaMismatchError("min/max arrays must have one entry per numeric feature")
        if np.any(self.minima > self.maxima):
            raise SchemaMismatchError("fitted minimum exceeds maximum")

    def degenerate_features(self) -> tuple[str, ...]:
        numeric = [f.name for f in self.schema.features if f.kind == "numeric"]
        return tuple(n for n, mn, mx in zip(numeric, self.minima, self.maxima) if mn == mx)


def fit_preprocessor(records: list[RawRecord], schema: DatasetSchema) -> PreprocessorState:
    """Scan training records for per-numeric-feature minima and maxima."""
    if not records:
        raise EmptyDatasetError("cannot fit a preprocessor on zero records")
    numeric_idx = [i for i, f in enumerate(schema.features) if f.kind == "numeric"]
    mat = np.array([[rec.values[i] for i in numeric_idx] for rec in records], dtype=np.float64)
    minima = mat.min(axis=0) if numeric_idx else np.zeros(0)
    maxima = mat.max(axis=0) if numeric_idx else np.zeros(0)
    state = PreprocessorState(schema, minima, maxima)
    for name in state.degenerate_features():
        warnings.warn(f"feature {name} is constant on the fitting data; "
                      "it will encode as 0", DegenerateFeatureWarning, stacklevel=2)
    return state


@dataclass
class TransformStats:
    """Mutable tally of zero-masked unseen categories, keyed by feature name."""

    unseen: dict[str, int] = field(default_factory=dict)

    def count(self, feature: str) -> None:
        self.unseen[feature] = self.unseen.get(feature, 0) + 1


@dataclass(frozen=True)
class EncodedSample:
    """Encoded feature vector in [0,1]^width plus an optional class index."""

    features: np.ndarray
    label: int | None


def transform(record: RawRecord, state: PreprocessorState,
              stats: TransformStats | None = None) -> EncodedSample:
    """Encode one record: min-max scale numerics, one-hot categoricals.

    Numerics are clipped into [0,1]; a degenerate feature (min == max on the
    fitting data) encodes as 0. The literal value "-" in a categorical
    yields an all-zero block, as does any value outside the vocabulary (the
    latter with a counted warning).
    """
    schema = state.schema
    out = np.zeros(schema.encoded_width)
    pos = 0
    num_i = 0
    for f, value in zip(schema.features, record.values):
        if f.kind == "numeric":
            mn, mx = state.minima[num_i], state.maxima[num_i]
            if mx > mn:
                out[pos] = min(1.0, max(0.0, (value - mn) / (mx - mn)))
            num_i += 1
            pos += 1
        else:
            if value != MASK_VALUE:
                lowered = value.lower()
                hit = next((k for k, v in enumerate(f.vocabulary) if v.lower() == lowered), None)
                if hit is not None:
                    out[pos + hit] = 1.0
                else:
                    if stats is not None:
                        stats.count(f.name)
                    warnings.warn(f"feature {f.name}: unseen category {value!r} zero-masked",
                                  UnseenCategoryWarning, stacklevel=2)
            pos += f.width
    label = None if record.label is None else schema.class_index(record.label)
    return EncodedSample(out, label)


@dataclass(frozen=True)
class EncodedDataset:
    """Encoded matrix plus integer labels (-1 marks unlabeled rows)."""

    x: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if self.x.ndim != 2 or self.labels.shape != (self.x.shape[0],):
            raise SchemaMismatchError("dataset arrays must be (n, width) and (n,)")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def width(self) -> int:
        return self.x.shape[1]

    def subset(self, indices: np.ndarray) -> "EncodedDataset":
        return EncodedDataset(self.x[indices], self.labels[indices], self.class_names)

    def require_labels(self) -> None:
        if np.any(self.labels == UNLABELED):
            n = int(np.sum(self.labels == UNLABELED))
            raise MissingLabelError(f"{n} unlabeled rows where labels are required")

    def class_counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.labels == i)) for i, name in enumerate(self.class_names)}


def encode_dataset(records: list[RawRecord], state: PreprocessorState,
                   stats: TransformStats | None = None) -> EncodedDataset:
    if not records:
        raise EmptyDatasetError("no records to encode")
    width = state.schema.encoded_width
    x = np.zeros((len(records), width))
    labels = np.full(len(records), UNLABELED, dtype=np.int64)
    for i, rec in enumerate(records):
        sample = transform(rec, state, stats)
        x[i] = sample.features
        if sample.label is not None:
            labels[i] = sample.label
    return EncodedDataset(x, labels, state.schema.class_names)


@dataclass(frozen=True)
class SplitSpec:
    """Stratified per-class subsampling parameters for one dataset role."""

    role: str
    fraction: float
    seed: int

    def __post_init__(self):
        if self.role not in ("encoder-set", "head-set"):
            raise SchemaMismatchError(f"role must be encoder-set or head-set, got {self.role!r}")
        if not 0 < self.fraction <= 1:
            raise SchemaMismatchError(f"fraction must lie in (0, 1], got {self.fraction}")


def _round_count(x: float) -> int:
    return int(round(x))


def _stratified_indices(labels: np.ndarray, fraction: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Per class: round(fraction*size) indices, minimum 1, uniform w/o replacement."""
    picked = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        count = max(1, _round_count(fraction * idx.size))
        picked.append(rng.choice(idx, size=min(count, idx.size), replace=False))
    return np.sort(np.concatenate(picked))


def stratified_subsample(dataset: EncodedDataset, spec: SplitSpec) -> EncodedDataset:
    """Keep round(fraction x class size) rows per class (at least one each).

    Selection is uniform without replacement under the spec's seed and
    deterministic; surviving rows keep their original order.
    """
    dataset.require_labels()
    rng = substream(spec.seed, "stratified-subsample", spec.role)
    return dataset.subset(_stratified_indices(dataset.labels, spec.fraction, rng))


def stratified_split(dataset: EncodedDataset, fraction: float, seed: int,
                     role: str = "head-set") -> tuple[np.ndarray, np.ndarray]:
    """Stratified (selected, remainder) index pair; selected gets the fraction."""
    dataset.require_labels()
    rng = substream(seed, "stratified-split", role)
    take = _stratified_indices(dataset.labels, fraction, rng)
    mask = np.ones(len(dataset), dtype=bool)
    mask[take] = False
    return take, np.flatnonzero(mask)


def random_split(dataset: EncodedDataset, fraction: float, seed: int,
                 label: str = "split") -> tuple[EncodedDataset, EncodedDataset]:
    """Unstratified split: round(fraction*n) rows in the first part."""
    if not 0 < fraction <= 1:
        raise SchemaMismatchError(f"fraction must lie in (0, 1], got {fraction}")
    n = len(dataset)
    take = _round_count(fraction * n)
    perm = substream(seed, label).permutation(n)
    return dataset.subset(np.sort(perm[:take])), dataset.subset(np.sort(perm[take:]))


def filter_classes(dataset: EncodedDataset, keep: list[str]) -> EncodedDataset:
    """Drop rows outside `keep` and relabel 0..K-1 in keep-list order.

    Unlabeled rows are dropped too: class filtering only makes sense on
    labeled data.
    """
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise UnknownClassError("duplicate class names in keep list")
    for name in keep:
        if name not in dataset.class_names:
            raise UnknownClassError(f"class {name!r} not among {dataset.class_names}")
    old_indices = [dataset.class_names.index(name) for name in keep]
    remap = {old: new for new, old in enumerate(old_indices)}
    rows = np.flatnonzero(np.isin(dataset.labels, old_indices))
    labels = np.array([remap[int(l)] for l in dataset.labels[rows]], dtype=np.int64)
    return EncodedDataset(dataset.x[rows], labels, tuple(keep))


def binarize(dataset: EncodedDataset, normal_class: str = "Normal") -> EncodedDataset:
    """Collapse to normal-vs-attack: the named class is 0, every other class 1."""
    if normal_class not in dataset.class_names:
        raise UnknownClassError(f"class {normal_class!r} not among {dataset.class_names}")
    normal_idx = dataset.class_names.index(normal_class)
    labels = np.where(dataset.labels == UNLABELED, UNLABELED,
                      np.where(dataset.labels == normal_idx, 0, 1)).astype(np.int64)
    return EncodedDataset(dataset.x, labels, (normal_class, "attack"))


# ---------------------------------------------------------------------------
# Artifact serialization


def write_json(path: str, doc: dict) -> None:
    """Deterministic JSON write: sorted keys, trailing newline, atomic replace."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def save_state(path: str, state: PreprocessorState) -> None:
    numeric = [f.name for f in state.schema.features if f.kind == "numeric"]
    doc = {
        "format_version": STATE_FORMAT_VERSION,
        "schema_fingerprint": state.schema.fingerprint(),
        "minima": {n: float(v) for n, v in zip(numeric, state.minima)},
        "maxima": {n: float(v) for n, v in zip(numeric, state.maxima)},
    }
    write_json(path, doc)


def load_state(path: str, schema: DatasetSchema) -> PreprocessorState:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != STATE_FORMAT_VERSION:
        raise SchemaMismatchError(
            f"unsupported preprocessor state version {doc.get('format_version')!r}")
    if doc.get("schema_fingerprint") != schema.fingerprint():
        raise SchemaMismatchError("preprocessor state was fitted under a different schema")
    numeric = [f.name for f in schema.features if f.kind == "numeric"]
    try:
        minima = np.array([doc["minima"][n] for n in numeric], dtype=np.float64)
        maxima = np.array([doc["maxima"][n] for n in numeric], dtype=np.float64)
    except KeyError as exc:
        raise SchemaMismatchError(f"state file missing fitted values for {exc}") from None
    return PreprocessorState(schema, minima, maxima)


def save_encoded(path: str, dataset: EncodedDataset, schema_fingerprint: str = "") -> None:
    meta = {
        "kind": "encoded-dataset",
        "class_names": list(dataset.class_names),
        "schema_fingerprint": schema_fingerprint,
    }
    save_arrays(path, {"x": dataset.x, "labels": dataset.labels}, meta=meta)


def load_encoded(path: str) -> tuple[EncodedDataset, dict]:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "encoded-dataset":
        raise SchemaMismatchError(f"{path} is not an encoded dataset artifact")
    dataset = EncodedDataset(np.asarray(arrays["x"], dtype=np.float64),
                             np.asarray(arrays["labels"], dtype=np.int64),
                             tuple(meta["class_names"]))
    return dataset, meta
