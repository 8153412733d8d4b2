"""Exhaustive grid search over poison features for tiny instances."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .bilevel import AttackState
from .dataset import Dataset, PoisonSet


class BudgetExceeded(RuntimeError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"brute force needs {required} evaluations, budget is {budget}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class OracleConfig:
    grid_points: int = 21
    budget: int = 10**7

    def __post_init__(self):
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")


@dataclass
class OracleResult:
    poison: PoisonSet
    objective: float
    evaluations: int


def evaluation_count(q: int, m: int, category_counts, grid_points: int) -> int:
    return grid_points ** (q * m) * int(np.prod(category_counts, dtype=object)) ** q


def brute_force(train: Dataset, poison_template: PoisonSet, lam: float, config: OracleConfig = OracleConfig()) -> OracleResult:
    """Evaluate every grid point for the numerical poison features times every SOS-1 assignment.

    Enumeration is lexicographic (numerical grid outermost, categories
    innermost) and only a strictly larger objective replaces the incumbent,
    so ties resolve to the lexicographically smallest assignment.
    """
    schema = train.schema
    q, m = poison_template.q, schema.m
    required = evaluation_count(q, m, schema.category_counts, config.grid_points)
    if required > config.budget:
        raise BudgetExceeded(required, config.budget)

    grid = np.linspace(0.0, 1.0, config.grid_points)
    per_sample_cats = []
    for combo in itertools.product(*(range(n) for n in schema.category_counts)):
        row = np.zeros(schema.n_cat_columns)
        for sl, z in zip(schema.cat_slices(), combo):
            row[sl.start + z] = 1.0
        per_sample_cats.append(row)

    state = AttackState(train, poison_template.copy(), lam)
    best_f, best_num, best_cat = -np.inf, None, None
    count = 0
    for num_flat in itertools.product(grid, repeat=q * m):
        num = np.array(num_flat).reshape(q, m)
        for cats in itertools.product(per_sample_cats, repeat=q):
            cat = np.array(cats).reshape(q, schema.n_cat_columns)
            f = state.evaluate(num, cat)
            count += 1
            if f > best_f:
                best_f, best_num, best_cat = f, num.copy(), cat.copy()

    best = PoisonSet(schema, best_num, best_cat, poison_template.y, poison_template.origin_indices)
    return OracleResult(best, float(best_f), count)


def snap_to_grid(poison: PoisonSet, grid_points: int) -> PoisonSet:
    """Round numerical poison features to the nearest oracle grid point."""
    out = poison.copy()
    out.num[...] = np.round(out.num * (grid_points - 1)) / (grid_points - 1)
    return out
