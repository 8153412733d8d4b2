"""Tabular data with numerical features and one-hot categorical blocks.

Raw CSV rows are parsed against a :class:`FeatureSchema`, min-max scaled to
[0, 1], one-hot expanded, split, and used to seed a :class:`PoisonSet`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class SchemaError(ValueError):
    """Data does not match the declared schema."""


class ParseError(ValueError):
    """A cell could not be parsed."""


@dataclass(frozen=True)
class FeatureSchema:
    numerical_names: tuple[str, ...]
    categorical_specs: tuple[tuple[str, tuple[str, ...]], ...]
    response: str = "y"

    def __post_init__(self):
        object.__setattr__(self, "numerical_names", tuple(self.numerical_names))
        object.__setattr__(
            self,
            "categorical_specs",
            tuple((name, tuple(labels)) for name, labels in self.categorical_specs),
        )
        names = list(self.numerical_names) + [name for name, _ in self.categorical_specs]
        if len(set(names)) != len(names):
            raise SchemaError(f"feature names are not unique: {names}")
        if self.response in names:
            raise SchemaError(f"response {self.response!r} clashes with a feature name")
        for name, labels in self.categorical_specs:
            if len(labels) < 2:
                raise SchemaError(f"categorical feature {name!r} needs at least 2 labels")
            if len(set(labels)) != len(labels):
                raise SchemaError(f"categorical feature {name!r} has duplicate labels")

    @property
    def m(self) -> int:
        return len(self.numerical_names)

    @property
    def t(self) -> int:
        return len(self.categorical_specs)

    @property
    def category_counts(self) -> tuple[int, ...]:
        return tuple(len(labels) for _, labels in self.categorical_specs)

    @property
    def n_cat_columns(self) -> int:
        return sum(self.category_counts)

    @property
    def n_columns(self) -> int:
        """Width of the encoded feature matrix (no intercept column)."""
        return self.m + self.n_cat_columns

    def cat_slices(self) -> list[slice]:
        """Column slices of each categorical block inside the categorical matrix."""
        out, start = [], 0
        for size in self.category_counts:
            out.append(slice(start, start + size))
            start += size
        return out

    def to_dict(self) -> dict:
        return {
            "numerical": list(self.numerical_names),
            "categorical": [{"name": n, "labels": list(l)} for n, l in self.categorical_specs],
            "response": self.response,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        try:
            return cls(
                numerical_names=tuple(d.get("numerical", [])),
                categorical_specs=tuple(
                    (c["name"], tuple(str(x) for x in c["labels"])) for c in d.get("categorical", [])
                ),
                response=d["response"],
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def save_schema(schema: FeatureSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class RawTable:
    """Parsed CSV: numeric cells as floats, categorical cells as label indices."""

    schema: FeatureSchema
    num: np.ndarray  # (n, m) float
    cat: np.ndarray  # (n, t) int
    y: np.ndarray  # (n,)

    def __len__(self):
        return len(self.y)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    num: np.ndarray  # (n, m)
    cat: np.ndarray  # (n, sum n(j)), one-hot blocks in schema order
    y: np.ndarray  # (n,)
    row_ids: np.ndarray = None  # original row indices, for traceability

    def __post_init__(self):
        n = len(self.y)
        num = np.asarray(self.num, dtype=float).reshape(n, self.schema.m)
        cat = np.asarray(self.cat, dtype=float).reshape(n, self.schema.n_cat_columns)
        object.__setattr__(self, "num", _freeze(num))
        object.__setattr__(self, "cat", _freeze(cat))
        object.__setattr__(self, "y", _freeze(np.asarray(self.y, dtype=float).reshape(n)))
        ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=int)
        ids = ids.copy()
        ids.setflags(write=False)
        object.__setattr__(self, "row_ids", ids)
        check_unit_box(self.num, "numerical features")
        check_unit_box(self.y, "responses")
        check_sos1(self.cat, self.schema)

    def __len__(self):
        return len(self.y)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def features(self) -> np.ndarray:
        """Encoded feature matrix: numerical columns then categorical blocks."""
        return np.hstack([self.num, self.cat])

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.schema, self.num[idx], self.cat[idx], self.y[idx], self.row_ids[idx])


@dataclass(eq=False)
class PoisonSet:
    """Attacker decision variables.

    ``num`` and ``cat`` are mutated by the attack strategies; ``y`` is fixed
    once initialised.
    """

    schema: FeatureSchema
    num: np.ndarray  # (q, m)
    cat: np.ndarray  # (q, sum n(j))
    y: np.ndarray  # (q,)
    origin_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        q = len(self.y)
        self.num = np.array(self.num, dtype=float).reshape(q, self.schema.m)
        self.cat = np.array(self.cat, dtype=float).reshape(q, self.schema.n_cat_columns)
        y = np.array(self.y, dtype=float).reshape(q)
        y.setflags(write=False)
        self.y = y
        if self.origin_indices is None:
            self.origin_indices = np.full(q, -1, dtype=int)
        self.origin_indices = np.asarray(self.origin_indices, dtype=int)

    def __len__(self):
        return len(self.y)

    @property
    def q(self) -> int:
        return len(self.y)

    @property
    def features(self) -> np.ndarray:
        return np.hstack([self.num, self.cat])

    def copy(self) -> "PoisonSet":
        return PoisonSet(self.schema, self.num.copy(), self.cat.copy(), self.y, self.origin_indices.copy())

    def subset(self, idx) -> "PoisonSet":
        idx = np.asarray(idx, dtype=int)
        return PoisonSet(self.schema, self.num[idx], self.cat[idx], self.y[idx], self.origin_indices[idx])

    def validate(self) -> None:
        check_unit_box(self.num, "poison numerical features")
        check_sos1(self.cat, self.schema)

    def to_dict(self) -> dict:
        return {
            "num": self.num.tolist(),
            "cat": self.cat.astype(int).tolist(),
            "y": self.y.tolist(),
            "origin_indices": self.origin_indices.tolist(),
        }

    @classmethod
    def from_dict(cls, schema: FeatureSchema, d: dict) -> "PoisonSet":
        return cls(schema, d["num"], d["cat"], d["y"], d["origin_indices"])


def check_unit_box(a: np.ndarray, what: str) -> None:
    a = np.asarray(a)
    if a.size and (not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0):
        raise ValueError(f"{what} must lie in [0, 1]")


def check_sos1(cat: np.ndarray, schema: FeatureSchema) -> None:
    cat = np.asarray(cat)
    if cat.size == 0:
        return
    if not np.all((cat == 0.0) | (cat == 1.0)):
        raise ValueError("categorical entries must be binary")
    for sl in schema.cat_slices():
        if not np.all(cat[:, sl].sum(axis=1) == 1.0):
            raise ValueError("each categorical block must contain exactly one 1 (SOS-1)")


def one_hot(indices: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Expand an (n, t) array of label indices into an (n, sum n(j)) 0/1 matrix."""
    indices = np.asarray(indices, dtype=int)
    if schema.t == 0:
        return np.zeros((len(indices), 0))
    indices = indices.reshape(-1, schema.t)
    out = np.zeros((len(indices), schema.n_cat_columns))
    for j, sl in enumerate(schema.cat_slices()):
        out[np.arange(len(indices)), sl.start + indices[:, j]] = 1.0
    return out


def category_indices(cat: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Inverse of :func:`one_hot`."""
    cat = np.asarray(cat).reshape(-1, schema.n_cat_columns)
    return np.stack([cat[:, sl].argmax(axis=1) for sl in schema.cat_slices()], axis=1) if schema.t else np.zeros(
        (len(cat), 0), dtype=int
    )


def load_csv(path, schema: FeatureSchema) -> RawTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: file has no header row") from None
        needed = list(schema.numerical_names) + [n for n, _ in schema.categorical_specs] + [schema.response]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        col = {name: header.index(name) for name in needed}
        label_maps = [{lab: z for z, lab in enumerate(labels)} for _, labels in schema.categorical_specs]

        num_rows, cat_rows, ys = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue

            def number(name):
                cell = row[col[name]].strip() if col[name] < len(row) else ""
                try:
                    return float(cell)
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}, column {name!r}: cannot parse {cell!r}") from None

            num_rows.append([number(name) for name in schema.numerical_names])
            codes = []
            for (name, _), lmap in zip(schema.categorical_specs, label_maps):
                cell = row[col[name]].strip() if col[name] < len(row) else ""
                if cell not in lmap:
                    raise SchemaError(f"{path}: row {lineno}, column {name!r}: unknown label {cell!r}")
                codes.append(lmap[cell])
            cat_rows.append(codes)
            ys.append(number(schema.response))

    n = len(ys)
    return RawTable(
        schema,
        np.array(num_rows, dtype=float).reshape(n, schema.m),
        np.array(cat_rows, dtype=int).reshape(n, schema.t),
        np.array(ys, dtype=float),
    )


@dataclass(frozen=True)
class ScalingStats:
    num_min: tuple[float, ...]
    num_max: tuple[float, ...]
    y_min: float
    y_max: float

    def to_dict(self) -> dict:
        return {"num_min": list(self.num_min), "num_max": list(self.num_max), "y_min": self.y_min, "y_max": self.y_max}


def compute_scaling_stats(raw: RawTable) -> ScalingStats:
    if len(raw) == 0:
        raise ValueError("cannot compute scaling statistics from an empty table")
    return ScalingStats(
        tuple(raw.num.min(axis=0).tolist()),
        tuple(raw.num.max(axis=0).tolist()),
        float(raw.y.min()),
        float(raw.y.max()),
    )


def _minmax(values: np.ndarray, lo: float, hi: float, name: str, warnings: list) -> np.ndarray:
    if hi <= lo:
        warnings.append({"column": name, "reason": "constant column mapped to 0.0"})
        logger.warning("constant column %r mapped to 0.0", name)
        return np.zeros_like(values, dtype=float)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


def encode_and_scale(raw: RawTable, scaling_stats: ScalingStats | None = None, warnings: list | None = None) -> Dataset:
    """Min-max scale numerics and responses, clamp to [0, 1], one-hot the categoricals.

    Constant columns are mapped to 0.0 and reported through ``warnings``.
    """
    schema = raw.schema
    warnings = [] if warnings is None else warnings
    if len(raw) == 0:
        return Dataset(schema, np.zeros((0, schema.m)), np.zeros((0, schema.n_cat_columns)), np.zeros(0))
    stats = scaling_stats or compute_scaling_stats(raw)
    num = np.empty_like(raw.num, dtype=float)
    for i, name in enumerate(schema.numerical_names):
        num[:, i] = _minmax(raw.num[:, i], stats.num_min[i], stats.num_max[i], name, warnings)
    y = _minmax(raw.y, stats.y_min, stats.y_max, schema.response, warnings)
    return Dataset(schema, num, one_hot(raw.cat, schema), y)


def split(dataset: Dataset, sizes: tuple[int, int, int], seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint train/validation/test subsets drawn from one seeded shuffle."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or min(sizes) < 0:
        raise ValueError(f"sizes must be three non-negative counts, got {sizes}")
    if sum(sizes) > dataset.n:
        raise ValueError(f"requested {sum(sizes)} rows but dataset has {dataset.n}")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    a, b = sizes[0], sizes[0] + sizes[1]
    return dataset.take(perm[:a]), dataset.take(perm[a:b]), dataset.take(perm[b : b + sizes[2]])


def round_half_away(x):
    """Round to nearest integer with ties away from zero (0.5 -> 1)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def poison_count(n_train: int, rate: float) -> int:
    return int(round_half_away(rate * n_train))


def init_poison(train: Dataset, rate: float, seed: int) -> PoisonSet:
    """Copy ``round(rate * n)`` random training rows and flip their responses to round(1 - y).

    The rows come from a prefix of one seeded permutation, so for a fixed seed
    the poison set at a lower rate is contained in the one at a higher rate.
    """
    if not (0.0 < rate <= 1.0) or math.isnan(rate):
        raise ValueError(f"poisoning rate must be in (0, 1], got {rate}")
    q = poison_count(train.n, rate)
    if q < 1:
        raise ValueError(f"rate {rate} on {train.n} training rows gives no poison samples")
    idx = np.random.default_rng(seed).permutation(train.n)[:q]
    return PoisonSet(train.schema, train.num[idx], train.cat[idx], round_half_away(1.0 - train.y[idx]), idx)
