"""Seeded synthetic regression data in the library's encoded format."""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, FeatureSchema, one_hot


def make_schema(m: int, category_counts=()) -> FeatureSchema:
    return FeatureSchema(
        tuple(f"x{i}" for i in range(m)),
        tuple((f"c{j}", tuple(f"v{z}" for z in range(k))) for j, k in enumerate(category_counts)),
        response="y",
    )


def make_dataset(n: int, m: int, category_counts=(), seed: int = 0, noise: float = 0.1) -> Dataset:
    """Linear model plus Gaussian noise, responses min-max scaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    schema = make_schema(m, category_counts)
    num = rng.uniform(size=(n, m))
    codes = np.stack([rng.integers(0, k, size=n) for k in category_counts], axis=1) if category_counts else np.zeros((n, 0), int)
    cat = one_hot(codes, schema)
    w = rng.normal(size=schema.n_columns)
    y = np.hstack([num, cat]) @ w + noise * rng.normal(size=n)
    span = y.max() - y.min()
    y = (y - y.min()) / span if span > 0 else np.zeros(n)
    return Dataset(schema, num, cat, y)
