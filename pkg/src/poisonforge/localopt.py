"""Projected-gradient ascent on a batch of poison numerical features."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .bilevel import AttackState, hypergradient

IMPROVEMENT_EPS = 1e-12
ARMIJO_C = 1e-4
BB_MAX_STEP = 1e6


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 500
    grad_tol: float = 1e-6
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    min_step: float = 1e-12
    multistart: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must be in (0, 1)")
        if not 0 < self.min_step < self.step_init:
            raise ValueError("need 0 < min_step < step_init")
        if self.grad_tol < 0 or self.multistart < 1:
            raise ValueError("grad_tol must be >= 0 and multistart >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BatchTrace:
    objectives: list
    reason: str = ""


def projected_gradient_norm(x: np.ndarray, grad: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(np.clip(x + grad, 0.0, 1.0) - x)))


def _ascend(state: AttackState, batch: np.ndarray, config: OptimizerConfig, trace: BatchTrace) -> None:
    """Run projected-gradient ascent from the state's current batch values."""
    f = state.leader_mse
    trace.objectives.append(f)
    step = config.step_init
    x_prev = g_prev = None
    for _ in range(config.max_iters):
        x = state.poison.num[batch].copy()
        grad = hypergradient(state, batch)
        if projected_gradient_norm(x, grad) <= config.grad_tol:
            trace.reason = "grad_tol"
            return
        if x_prev is not None:
            # Barzilai-Borwein trial step for ascent: s.s / -(s.dy)
            s, dy = x - x_prev, grad - g_prev
            curv = -float(np.sum(s * dy))
            step = float(np.sum(s * s)) / curv if curv > 0 else config.step_init
            step = min(max(step, config.min_step), BB_MAX_STEP)
        x_prev, g_prev = x, grad
        accepted = False
        while step >= config.min_step:
            x_new = np.clip(x + step * grad, 0.0, 1.0)
            state.poison.num[batch] = x_new
            f_new = state.refit().leader_mse
            if f_new >= f + ARMIJO_C * float(np.sum(grad * (x_new - x))) and f_new > f:
                accepted = True
                break
            step *= config.backtrack_factor
        if not accepted:
            state.poison.num[batch] = x
            state.refit()
            trace.reason = "min_step"
            return
        f = f_new
        trace.objectives.append(f)
    trace.reason = "max_iters"


def optimize_batch(state: AttackState, batch, config: OptimizerConfig = OptimizerConfig(), seed: int = 0):
    """Locally maximise the leader objective over the numerical features of ``batch``.

    Returns ``(state, improved, trace)``. If the best point found does not beat
    the entry objective by more than ``IMPROVEMENT_EPS`` the batch is restored
    to its entry values.
    """
    batch = np.asarray(batch, dtype=int)
    state.require_sync()
    if batch.size and (batch.min() < 0 or batch.max() >= state.poison.q):
        raise IndexError("batch indices outside the poison set")
    entry = state.snapshot()
    f0 = state.leader_mse
    trace = BatchTrace([])
    if state.m == 0 or batch.size == 0:
        trace.objectives.append(f0)
        trace.reason = "no_variables"
        return state, False, trace

    _ascend(state, batch, config, trace)
    best_f, best_x = state.leader_mse, state.poison.num[batch].copy()
    if config.multistart > 1:
        rng = np.random.default_rng(seed)
        for _ in range(config.multistart - 1):
            state.poison.num[batch] = rng.uniform(size=(len(batch), state.m))
            state.refit()
            extra = BatchTrace([])
            _ascend(state, batch, config, extra)
            if state.leader_mse > best_f:
                best_f, best_x = state.leader_mse, state.poison.num[batch].copy()
        state.poison.num[batch] = best_x
        state.refit()
        if best_f > trace.objectives[-1]:
            trace.objectives.append(best_f)

    if state.leader_mse > f0 + IMPROVEMENT_EPS:
        return state, True, trace
    state.restore(entry)
    trace.objectives = [f0]
    return state, False, trace
