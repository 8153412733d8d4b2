"""A-priori bounds on ridge weights and intercept under any feasible poison set.

The weight bound has the form ``factor * R`` with

    R = ||y0||_2 + sqrt(q) + (sum(y0) + q) / sqrt(n + q)

and ``factor`` an upper bound on ``max_i g(sigma_i)``, ``g(s) = s / (s^2 + lam)``,
over the singular values of the (centred) poisoned design. ``g`` peaks at
``s = sqrt(lam)`` with value ``1 / (2 sqrt(lam))``; that peak is the cap.
Narrower factors are used only when sqrt(lam) provably lies outside the
attainable spectrum:

* every centred poisoned design has sigma_min >= sigma_min(centred X0),
  since adding rows can only grow the scatter matrix;
* sigma_max^2 <= sigma_max(X0)^2 + q * (m + t), since each poison row has
  squared norm at most m + t.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset


class BoundViolation(AssertionError):
    pass


@dataclass(frozen=True)
class VariableBounds:
    weight_bound: float
    intercept_lo: float
    intercept_hi: float
    sigma_used: float
    capped: bool
    sigma_min_x0: float = 0.0
    sigma_max_x0: float = 0.0
    response_term: float = 0.0
    # single-sigma alternatives (largest or smallest singular value of X0), for audit only
    bound_if_largest_sigma: float = 0.0
    bound_if_smallest_sigma: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VariableBounds":
        return cls(**d)

    def violations(self, w: np.ndarray, c: float | None = None, slack: float = 1e-9) -> list[str]:
        out = []
        worst = float(np.max(np.abs(w))) if np.size(w) else 0.0
        if worst > self.weight_bound + slack:
            out.append(f"max |w| = {worst:.6g} exceeds weight bound {self.weight_bound:.6g}")
        if c is not None and not (self.intercept_lo - slack <= c <= self.intercept_hi + slack):
            out.append(f"intercept {c:.6g} outside [{self.intercept_lo:.6g}, {self.intercept_hi:.6g}]")
        return out

    def check(self, w, c=None) -> None:
        problems = self.violations(w, c)
        if problems:
            raise BoundViolation("; ".join(problems))


def g(sigma: float, lam: float) -> float:
    return sigma / (sigma * sigma + lam)


def _singular_values(A: np.ndarray) -> np.ndarray:
    if A.size == 0:
        return np.zeros(1)
    s = np.linalg.svd(A, compute_uv=False)
    # a tall-or-wide matrix has min(n, d) values; missing ones are zero
    if len(s) < A.shape[1]:
        s = np.append(s, np.zeros(A.shape[1] - len(s)))
    return s


def compute_bounds(train: Dataset, q: int, lam: float) -> VariableBounds:
    if not lam > 0:
        raise ValueError(f"bounds need lambda > 0, got {lam}")
    if train.n == 0:
        raise ValueError("bounds need a non-empty training set")
    if q < 0:
        raise ValueError("q must be non-negative")
    X0 = train.features
    y0 = np.asarray(train.y)
    n = train.n
    s_raw = _singular_values(X0)
    s_centred = _singular_values(X0 - X0.mean(axis=0))
    sigma_lo = float(s_centred.min())
    sigma_hi = math.sqrt(float(s_raw.max()) ** 2 + q * (train.schema.m + train.schema.t))

    R = float(np.linalg.norm(y0)) + math.sqrt(q) + (float(y0.sum()) + q) / math.sqrt(n + q)
    cap = 1.0 / (2.0 * math.sqrt(lam))
    root = math.sqrt(lam)
    if sigma_lo > 0 and root <= sigma_lo:
        factor, sigma_used = g(sigma_lo, lam), sigma_lo
    elif root >= sigma_hi:
        factor, sigma_used = g(sigma_hi, lam), sigma_hi
    else:
        factor, sigma_used = cap, root
    capped = factor >= cap
    factor = min(factor, cap)

    return VariableBounds(
        weight_bound=factor * R,
        intercept_lo=float(y0.sum()) / (n + q),
        intercept_hi=(float(y0.sum()) + q) / (n + q),
        sigma_used=sigma_used,
        capped=capped,
        sigma_min_x0=float(s_raw.min()),
        sigma_max_x0=float(s_raw.max()),
        response_term=R,
        bound_if_largest_sigma=g(float(s_raw.max()), lam) * R,
        bound_if_smallest_sigma=g(float(s_raw.min()), lam) * R,
    )


def centred_intercept(train: Dataset, poison) -> float:
    """Intercept under the mean-centred parameterisation: mean of all responses."""
    y = np.concatenate([np.asarray(train.y), np.asarray(poison.y) if poison is not None else np.zeros(0)])
    return float(y.mean())
