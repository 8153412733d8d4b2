"""Attack strategies: iterative (IAS), shifting (SAS), and categorical flipping (IFCF)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bilevel import AttackState
from .dataset import Dataset, PoisonSet, round_half_away
from .localopt import IMPROVEMENT_EPS, OptimizerConfig, optimize_batch
from .ridge import RegressionParams

METHODS = ("ias", "sas", "ifcf")


@dataclass(frozen=True)
class StrategyConfig:
    method: str = "sas"
    batch_fraction: float = 0.1
    epochs: int = 2
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.lower())
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must be in (0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class AttackRun:
    """Outcome of one strategy run.

    ``trajectory`` is a list of segments. Each segment records the leader
    objective under one fixed lower-level problem and is non-decreasing.
    SAS and IFCF produce a single segment; IAS produces one per batch because
    its training set grows between batches.
    """

    method: str
    poison: PoisonSet
    params: RegressionParams
    objective: float
    trajectory: list
    events: list
    timings: dict


def make_batches(q: int, batch_fraction: float) -> list[np.ndarray]:
    """Consecutive batches of ``round(batch_fraction * q)`` samples (at least 1); the last takes the remainder."""
    size = max(1, int(round_half_away(batch_fraction * q)))
    return [np.arange(start, min(start + size, q)) for start in range(0, q, size)]


def _sas_pass(state: AttackState, batches, config: StrategyConfig, trajectory: list, seed_offset: int = 0) -> bool:
    any_improved = False
    for i, batch in enumerate(batches):
        _, improved, _ = optimize_batch(state, batch, config.optimizer, seed=config.seed + seed_offset + i)
        any_improved |= improved
        trajectory.append(state.leader_mse)
    return any_improved


def run_sas(train: Dataset, poison: PoisonSet, lam: float, config: StrategyConfig) -> AttackRun:
    """All poison samples stay in the training set; batches are optimised in turn."""
    t0 = time.perf_counter()
    state = AttackState(train, poison.copy(), lam)
    segment = [state.leader_mse]
    improved = _sas_pass(state, make_batches(poison.q, config.batch_fraction), config, segment)
    events = [{"kind": "sas", "before": segment[0], "after": state.leader_mse}] if improved else []
    return AttackRun("sas", state.poison, state.params, state.leader_mse, [segment], events,
                     {"sas": time.perf_counter() - t0})


def run_ias(train: Dataset, poison: PoisonSet, lam: float, config: StrategyConfig) -> AttackRun:
    """Batch ``i`` is optimised with batches ``1..i-1`` as fixed data and later batches absent."""
    t0 = time.perf_counter()
    working = poison.copy()
    batches = make_batches(poison.q, config.batch_fraction)
    segments, events = [], []
    state = None
    for i, batch in enumerate(batches):
        present = np.arange(batch[-1] + 1)
        state = AttackState(train, working.subset(present), lam)
        before = state.leader_mse
        _, improved, _ = optimize_batch(state, batch, config.optimizer, seed=config.seed + i)
        working.num[present] = state.poison.num
        segments.append([before, state.leader_mse])
        if improved:
            events.append({"kind": "ias_batch", "batch": i, "before": before, "after": state.leader_mse})
    return AttackRun("ias", working, state.params, state.leader_mse, segments, events,
                     {"ias": time.perf_counter() - t0})


def flip_candidates(params: RegressionParams) -> tuple[np.ndarray, np.ndarray]:
    """Per categorical feature, the index of the largest and smallest weight (lowest index on ties)."""
    up = np.array([int(np.argmax(w)) for w in params.w_cat], dtype=int)
    down = np.array([int(np.argmin(w)) for w in params.w_cat], dtype=int)
    return up, down


def _push(state: AttackState, k: int):
    """One push of sample ``k``; returns (improved, direction, e_up, e_down)."""
    schema = state.train.schema
    params = state.params
    up, down = flip_candidates(params)
    base = float(params.w_num @ state.poison.num[k]) + params.c
    target = float(state.poison.y[k])
    pred_up = base + sum(float(w[z]) for w, z in zip(params.w_cat, up))
    pred_down = base + sum(float(w[z]) for w, z in zip(params.w_cat, down))
    e_up, e_down = abs(target - pred_up), abs(target - pred_down)
    direction, choice = ("up", up) if e_up >= e_down else ("down", down)

    candidate = np.zeros(schema.n_cat_columns)
    for sl, z in zip(schema.cat_slices(), choice):
        candidate[sl.start + z] = 1.0
    if np.array_equal(candidate, state.poison.cat[k]):
        return False, direction, e_up, e_down

    snap = state.snapshot()
    before = state.leader_mse
    state.poison.cat[k] = candidate
    state.refit()
    if state.leader_mse > before + IMPROVEMENT_EPS:
        return True, direction, e_up, e_down
    state.restore(snap)
    return False, direction, e_up, e_down


def flip_sample(state: AttackState, k: int):
    """Push poison sample ``k``'s categories all to their max-weight or all to their min-weight level.

    The direction whose prediction lies further from the sample's (flipped)
    response is tried; ties go up. A push is kept only if the leader
    objective rises. Because a kept push moves the weights, the push is
    repeated until it no longer changes anything, so an immediate second
    call is a no-op. Each kept push strictly raises the objective over a
    finite set of assignments, so this terminates. Returns
    ``(state, improved, info)``.
    """
    state.require_sync()
    info = {"sample": int(k), "direction": None, "before": state.leader_mse, "after": state.leader_mse, "pushes": 0}
    if state.train.schema.t == 0:
        return state, False, info
    while True:
        improved, direction, e_up, e_down = _push(state, k)
        if info["direction"] is None:
            info.update(direction=direction, e_up=e_up, e_down=e_down)
        if not improved:
            break
        info["pushes"] += 1
    info["after"] = state.leader_mse
    return state, info["pushes"] > 0, info


def run_ifcf(train: Dataset, poison: PoisonSet, lam: float, config: StrategyConfig) -> AttackRun:
    """SAS on numerical features, then epochs of categorical flips each followed by a SAS pass.

    Stops early once an epoch accepts no flip: the data is then unchanged
    since the previous SAS pass.
    """
    t0 = time.perf_counter()
    state = AttackState(train, poison.copy(), lam)
    batches = make_batches(poison.q, config.batch_fraction)
    segment = [state.leader_mse]
    events = []
    if _sas_pass(state, batches, config, segment):
        events.append({"kind": "sas", "before": segment[0], "after": state.leader_mse})
    timings = {"sas": time.perf_counter() - t0, "flip": 0.0, "sas_repeat": 0.0}

    for epoch in range(config.epochs):
        t1 = time.perf_counter()
        flipped = False
        for k in range(poison.q):
            _, improved, info = flip_sample(state, k)
            if improved:
                flipped = True
                segment.append(state.leader_mse)
                events.append({"kind": "flip", "epoch": epoch, **info})
        timings["flip"] += time.perf_counter() - t1
        if not flipped:
            break
        t2 = time.perf_counter()
        before = state.leader_mse
        if _sas_pass(state, batches, config, segment, seed_offset=(epoch + 1) * len(batches)):
            events.append({"kind": "sas", "epoch": epoch, "before": before, "after": state.leader_mse})
        timings["sas_repeat"] += time.perf_counter() - t2

    return AttackRun("ifcf", state.poison, state.params, state.leader_mse, [segment], events, timings)


def run_strategy(train: Dataset, poison: PoisonSet, lam: float, config: StrategyConfig) -> AttackRun:
    return {"ias": run_ias, "sas": run_sas, "ifcf": run_ifcf}[config.method](train, poison, lam, config)
