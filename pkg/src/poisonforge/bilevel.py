"""Leader objective and its gradient through the exact ridge response."""

from __future__ import annotations

import numpy as np

from . import ridge
from .dataset import Dataset, PoisonSet


class StaleStateError(RuntimeError):
    """Poison features changed since the last refit."""


class AttackState:
    """Training data, current poison set, and the ridge optimum they induce.

    ``poison`` is owned by the state and mutated in place by the optimisers;
    call :meth:`refit` after every change. The training Gram matrix is cached
    so a refit costs one small dense solve.
    """

    def __init__(self, train: Dataset, poison: PoisonSet, lam: float):
        if lam <= 0:
            raise ValueError(f"attacks need lambda > 0, got {lam}")
        self.train = train
        self.poison = poison
        self.lam = float(lam)
        A0 = ridge.augment(train.features)
        self._A0 = A0
        self._y0 = np.asarray(train.y)
        self._gram0 = A0.T @ A0
        self._moment0 = A0.T @ self._y0
        self._fingerprint = None
        self.theta = None
        self.leader_mse = None
        self._factor = None
        self.refit()

    @property
    def m(self) -> int:
        return self.train.schema.m

    def _poison_fingerprint(self):
        return (self.poison.num.tobytes(), self.poison.cat.tobytes())

    def refit(self) -> "AttackState":
        Ap = ridge.augment(self.poison.features)
        N = self.train.n + self.poison.q
        H, rhs = ridge.stationarity_system(self._gram0 + Ap.T @ Ap, self._moment0 + Ap.T @ self.poison.y, N, self.lam)
        self._factor = ridge.Factorization(H, self.lam)
        theta = self._factor.solve(rhs)
        if not np.all(np.isfinite(theta)):
            raise ridge.NumericError("ridge solve produced non-finite parameters")
        self.theta = theta
        resid = self._A0 @ theta - self._y0
        self.leader_mse = float(resid @ resid / len(resid))
        self._fingerprint = self._poison_fingerprint()
        return self

    def in_sync(self) -> bool:
        return self._fingerprint == self._poison_fingerprint()

    def require_sync(self) -> None:
        if not self.in_sync():
            raise StaleStateError("poison set changed since last refit")

    @property
    def params(self) -> ridge.RegressionParams:
        return ridge.RegressionParams.from_theta(self.theta, self.train.schema)

    def evaluate(self, num: np.ndarray | None = None, cat: np.ndarray | None = None) -> float:
        """Set poison features, refit, and return the leader objective."""
        if num is not None:
            self.poison.num[...] = num
        if cat is not None:
            self.poison.cat[...] = cat
        self.refit()
        return self.leader_mse

    def snapshot(self):
        return self.poison.num.copy(), self.poison.cat.copy()

    def restore(self, snap) -> None:
        self.poison.num[...] = snap[0]
        self.poison.cat[...] = snap[1]
        self.refit()


def leader_objective(state: AttackState) -> float:
    """Training MSE of the poisoned model over the clean training rows only."""
    state.require_sync()
    return state.leader_mse


def refit(state: AttackState) -> AttackState:
    return state.refit()


def hypergradient(state: AttackState, samples=None) -> np.ndarray:
    """d(leader MSE)/d(poison numerical features) for the given poison rows.

    Uses the adjoint of the stationarity system: with ``v = H^{-1} dF/dtheta``
    and residual ``r_k`` of poison row ``k``,

        dF/dx_kf = -(2/N) * (v_f * r_k + (v . a_k) * theta_f)

    where ``a_k`` is the augmented poison row. Returns an array of shape
    ``(len(samples), m)``.
    """
    state.require_sync()
    m = state.m
    samples = np.arange(state.poison.q) if samples is None else np.asarray(samples, dtype=int)
    if m == 0 or len(samples) == 0:
        return np.zeros((len(samples), m))
    theta = state.theta
    resid0 = state._A0 @ theta - state._y0
    dF = (2.0 / len(resid0)) * (state._A0.T @ resid0)
    v = state._factor.solve(dF)
    Ap = ridge.augment(state.poison.features[samples])
    rp = Ap @ theta - state.poison.y[samples]
    N = state.train.n + state.poison.q
    return -(2.0 / N) * (np.outer(rp, v[:m]) + np.outer(Ap @ v, theta[:m]))
