"""Datasets: synthetic generation, CSV ingestion, splits, and min-max scaling."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CsvParseError, SchemaError

# Sampling rectangle and labeling rule for the synthetic task.
SYNTH_LOW = np.array([-2.0, -2.0])
SYNTH_HIGH = np.array([4.0, 7.0])


def synthetic_boundary(x1):
    """Polynomial threshold on the second coordinate: label 1 iff x2 >= this."""
    x1 = np.asarray(x1, dtype=float)
    return 1.0 + x1 + 2.0 * x1**2 + x1**3 - x1**4


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    immutable: bool = False


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-feature min-max map to [0, 1], fitted on a training split.

    Constant features map to 0 (range clamped to 1 to avoid division by zero).
    """

    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "MinMaxScaler":
        features = np.asarray(features, dtype=float)
        return cls(mins=features.min(axis=0), maxs=features.max(axis=0))

    def _ranges(self) -> np.ndarray:
        ranges = self.maxs - self.mins
        return np.where(ranges > 0, ranges, 1.0)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mins) / self._ranges()

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * self._ranges() + self.mins


@dataclass
class Dataset:
    """Feature matrix with binary labels, feature metadata and an optional scaler."""

    features: np.ndarray
    labels: np.ndarray
    feature_meta: list[FeatureMeta] = field(default_factory=list)
    scaler: MinMaxScaler | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n, p = self.features.shape
        if n < 1 or p < 1:
            raise ValueError("dataset must have at least one row and one feature")
        if self.labels.shape != (n,):
            raise ValueError("labels must be a vector with one entry per row")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must take values in {0, 1}")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        if not self.feature_meta:
            self.feature_meta = [FeatureMeta(f"x{j + 1}") for j in range(p)]
        if len(self.feature_meta) != p:
            raise ValueError("feature_meta length must match feature count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def immutable_mask(self) -> np.ndarray:
        return np.array([m.immutable for m in self.feature_meta], dtype=bool)

    def to_json_dict(self) -> dict:
        out = {
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "meta": [{"name": m.name, "immutable": m.immutable} for m in self.feature_meta],
            "scaler": None,
        }
        if self.scaler is not None:
            out["scaler"] = {"min": self.scaler.mins.tolist(), "max": self.scaler.maxs.tolist()}
        return out

    @classmethod
    def from_json_dict(cls, payload: dict) -> "Dataset":
        scaler = None
        if payload.get("scaler") is not None:
            scaler = MinMaxScaler(
                mins=np.asarray(payload["scaler"]["min"], dtype=float),
                maxs=np.asarray(payload["scaler"]["max"], dtype=float),
            )
        meta = [FeatureMeta(m["name"], bool(m["immutable"])) for m in payload.get("meta", [])]
        return cls(
            features=np.asarray(payload["features"], dtype=float),
            labels=np.asarray(payload["labels"], dtype=int),
            feature_meta=meta,
            scaler=scaler,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def generate_synthetic(n: int, noise_std: float = 0.0, seed: int = 0) -> Dataset:
    """Sample ``n`` points uniformly on [-2, 4] x [-2, 7] and label them.

    A point gets label 1 iff x2 >= 1 + x1 + 2*x1^2 + x1^3 - x1^4 + eps with
    eps ~ N(0, noise_std^2). ``noise_std=0`` gives the deterministic present
    labeling; ``noise_std=1`` the noisy future labeling.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    features = rng.uniform(SYNTH_LOW, SYNTH_HIGH, size=(n, 2))
    threshold = synthetic_boundary(features[:, 0])
    if noise_std > 0:
        threshold = threshold + rng.normal(0.0, noise_std, size=n)
    labels = (features[:, 1] >= threshold).astype(int)
    return Dataset(features=features, labels=labels, feature_meta=[FeatureMeta("x1"), FeatureMeta("x2")])


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seed-deterministic disjoint partition, scaler fitted on the train side."""
    n = dataset.n
    n_train = int(round(n * spec.train_fraction))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"train_fraction={spec.train_fraction} leaves an empty side for n={n}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    train_idx, test_idx = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    scaler = MinMaxScaler.fit(dataset.features[train_idx])
    train = Dataset(
        features=dataset.features[train_idx],
        labels=dataset.labels[train_idx],
        feature_meta=list(dataset.feature_meta),
        scaler=scaler,
    )
    test = replace(train, features=dataset.features[test_idx], labels=dataset.labels[test_idx])
    return train, test


@dataclass(frozen=True)
class CsvSchema:
    feature_columns: tuple[str, ...]
    categorical: tuple[str, ...]
    immutable: tuple[str, ...]
    label_column: str
    # maps the raw label convention to {0 = unfavorable, 1 = favorable}
    label_map: dict


def _german_label(raw: float) -> int:
    # UCI coding 1=good/2=bad; corrected release uses 0/1 with 1=good.
    if raw in (1.0, 2.0):
        return 1 if raw == 1.0 else 0
    if raw in (0.0,):
        return 0
    raise ValueError(f"unrecognized german label value {raw!r}")


CSV_SCHEMAS: dict[str, CsvSchema] = {
    "german": CsvSchema(
        feature_columns=("duration", "amount", "personal_status_sex", "age"),
        categorical=("personal_status_sex",),
        immutable=("personal_status_sex", "age"),
        label_column="label",
        label_map={"kind": "german"},
    ),
    "sba": CsvSchema(
        feature_columns=(
            "Term", "NoEmp", "CreateJob", "RetainedJob", "UrbanRural", "ChgOffPrinGr",
            "GrAppv", "SBA_Appv", "New", "RealEstate", "Portion", "Recession",
        ),
        categorical=(),
        immutable=(),
        label_column="label",
        label_map={"kind": "identity"},  # 1 = loan paid in full = favorable
    ),
    "gmc": CsvSchema(
        feature_columns=(
            "RevolvingUtilizationOfUnsecuredLines", "age", "NumberOfTime30-59DaysPastDueNotWorse",
            "DebtRatio", "MonthlyIncome", "NumberOfOpenCreditLinesAndLoans",
            "NumberOfTimes90DaysLate", "NumberRealEstateLoansOrLines",
            "NumberOfTime60-89DaysPastDueNotWorse", "NumberOfDependents",
        ),
        categorical=(),
        immutable=("age",),
        label_column="label",
        label_map={"kind": "inverted"},  # raw 1 flags distress, so favorable = 1 - raw
    ),
}


def _map_label(schema: CsvSchema, raw: float, row: int) -> int:
    kind = schema.label_map["kind"]
    try:
        if kind == "german":
            return _german_label(raw)
        if kind == "inverted":
            if raw in (0.0, 1.0):
                return 1 - int(raw)
            raise ValueError(f"label must be 0/1, got {raw!r}")
        if raw in (0.0, 1.0):
            return int(raw)
        raise ValueError(f"label must be 0/1, got {raw!r}")
    except ValueError as exc:
        raise CsvParseError(f"row {row}: {exc}", row=row, column=schema.label_column) from exc


def load_csv(path, schema: str) -> Dataset:
    """Load a documented-schema CSV file into a Dataset.

    Declared categorical columns are integer-encoded in first-appearance
    order; missing numeric cells are imputed with the column median. Columns
    beyond the documented ones are ignored. Label conventions are remapped per
    schema so that 1 is always the favorable class.
    """
    if schema not in CSV_SCHEMAS:
        raise SchemaError(f"unknown dataset schema {schema!r}; expected one of {sorted(CSV_SCHEMAS)}")
    spec = CSV_SCHEMAS[schema]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in (*spec.feature_columns, spec.label_column):
            if column not in header:
                raise SchemaError(f"missing column {column!r} in {schema} file {path}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{schema} file {path} has no data rows")

    n, p = len(rows), len(spec.feature_columns)
    features = np.empty((n, p))
    labels = np.empty(n, dtype=int)
    codes: dict[str, dict[str, int]] = {c: {} for c in spec.categorical}
    for i, row in enumerate(rows):
        for j, column in enumerate(spec.feature_columns):
            cell = (row[column] or "").strip()
            if column in spec.categorical:
                features[i, j] = codes[column].setdefault(cell, len(codes[column]))
            elif cell == "":
                features[i, j] = np.nan
            else:
                try:
                    features[i, j] = float(cell)
                except ValueError as exc:
                    raise CsvParseError(
                        f"cannot parse cell at row {i}, column {column!r}: {cell!r}",
                        row=i, column=column,
                    ) from exc
        cell = (row[spec.label_column] or "").strip()
        try:
            raw = float(cell)
        except ValueError as exc:
            raise CsvParseError(
                f"cannot parse label at row {i}: {cell!r}", row=i, column=spec.label_column
            ) from exc
        labels[i] = _map_label(spec, raw, i)

    for j, column in enumerate(spec.feature_columns):
        mask = np.isnan(features[:, j])
        if mask.all():
            raise CsvParseError(f"column {column!r} has no parseable values", column=column)
        if mask.any():
            features[mask, j] = np.median(features[~mask, j])

    meta = [FeatureMeta(c, immutable=c in spec.immutable) for c in spec.feature_columns]
    return Dataset(features=features, labels=labels, feature_meta=meta)
