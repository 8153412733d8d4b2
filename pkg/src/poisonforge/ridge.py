"""Ridge regression lower level: exact fit through its stationarity system.

The lower-level objective on N = n + q rows is

    (1/N) * ||X w + c - y||^2 + lam * ||w||^2

with an unregularised intercept ``c``. Its gradient with respect to
theta = (w, c) is ``H theta - (2/N) A^T y`` where ``A = [X, 1]`` and
``H = (2/N) A^T A + 2 lam diag(1, ..., 1, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import Dataset, FeatureSchema, PoisonSet

FIT_TOL = 1e-8
DEFAULT_LAMBDA_GRID = tuple(float(x) for x in np.logspace(-3, 1, 13))


class RankDeficientError(np.linalg.LinAlgError):
    """The unregularised system has no unique solution."""


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class RegressionParams:
    w_num: np.ndarray
    w_cat: tuple[np.ndarray, ...]
    c: float

    @property
    def w(self) -> np.ndarray:
        """All weights in design-matrix column order."""
        return np.concatenate([np.asarray(self.w_num, dtype=float)] + [np.asarray(b, dtype=float) for b in self.w_cat])

    @property
    def theta(self) -> np.ndarray:
        return np.append(self.w, self.c)

    @classmethod
    def from_theta(cls, theta, schema: FeatureSchema) -> "RegressionParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (schema.n_columns + 1,):
            raise ValueError(f"theta has shape {theta.shape}, schema needs {(schema.n_columns + 1,)}")
        w_num = theta[: schema.m].copy()
        w_cat = tuple(theta[schema.m + sl.start : schema.m + sl.stop].copy() for sl in schema.cat_slices())
        return cls(w_num, w_cat, float(theta[-1]))

    def to_dict(self) -> dict:
        return {"w_num": list(map(float, self.w_num)), "w_cat": [list(map(float, b)) for b in self.w_cat], "c": self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionParams":
        return cls(np.array(d["w_num"], dtype=float), tuple(np.array(b, dtype=float) for b in d["w_cat"]), float(d["c"]))


def design_matrix(train: Dataset, poison: PoisonSet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack training rows then poison rows; columns are numerical then categorical blocks."""
    X, y = train.features, np.array(train.y)
    if poison is None or poison.q == 0:
        return X, y
    if poison.schema != train.schema:
        raise ValueError("poison set and training data use different schemas")
    return np.vstack([X, poison.features]), np.concatenate([y, poison.y])


def augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def reg_mask(d: int) -> np.ndarray:
    """Diagonal of the regulariser: 1 for weights, 0 for the intercept."""
    mask = np.ones(d + 1)
    mask[-1] = 0.0
    return mask


def stationarity_system(gram: np.ndarray, moment: np.ndarray, n_rows: int, lam: float):
    """Return ``(H, rhs)`` from ``A^T A`` and ``A^T y`` of the augmented design."""
    H = (2.0 / n_rows) * gram
    H[np.diag_indices_from(H)] += 2.0 * lam * reg_mask(len(H) - 1)
    return H, (2.0 / n_rows) * moment


class Factorization:
    """Cholesky of the stationarity matrix with an LU fallback; reused for adjoint solves."""

    def __init__(self, H: np.ndarray, lam: float):
        self.H = H
        self._chol = None
        self._lu = None
        if lam > 0:
            try:
                self._chol = scipy.linalg.cho_factor(H, check_finite=False)
            except np.linalg.LinAlgError:
                self._chol = None
        if self._chol is None:
            if lam == 0 and np.linalg.matrix_rank(H) < len(H):
                raise RankDeficientError("stationarity system is singular (lambda = 0 with collinear columns)")
            self._lu = scipy.linalg.lu_factor(H, check_finite=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._chol is not None:
            x = scipy.linalg.cho_solve(self._chol, b, check_finite=False)
        else:
            x = scipy.linalg.lu_solve(self._lu, b, check_finite=False)
        # one step of iterative refinement keeps the residual near machine precision
        r = b - self.H @ x
        if self._chol is not None:
            x = x + scipy.linalg.cho_solve(self._chol, r, check_finite=False)
        else:
            x = x + scipy.linalg.lu_solve(self._lu, r, check_finite=False)
        return x


def solve_theta(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if X.shape[0] < 1:
        raise ValueError("need at least one row to fit")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("design matrix or responses contain non-finite values")
    A = augment(X)
    H, rhs = stationarity_system(A.T @ A, A.T @ y, A.shape[0], lam)
    theta = Factorization(H, lam).solve(rhs)
    if not np.all(np.isfinite(theta)):
        raise NumericError("ridge solve produced non-finite parameters")
    return theta


def fit(train: Dataset, poison: PoisonSet | None, lam: float) -> RegressionParams:
    X, y = design_matrix(train, poison)
    return RegressionParams.from_theta(solve_theta(X, y, lam), train.schema)


def gradient(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Gradient of the lower-level objective; the entries are the stationarity expressions."""
    A = augment(X)
    resid = A @ theta - y
    return (2.0 / len(y)) * (A.T @ resid) + 2.0 * lam * reg_mask(X.shape[1]) * theta


def objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    resid = augment(X) @ theta - y
    w = theta[:-1]
    return float(resid @ resid / len(y) + lam * (w @ w))


def kkt_residual(params: RegressionParams, train: Dataset, poison: PoisonSet | None, lam: float) -> float:
    """Max-norm of the stationarity conditions (one per weight plus the intercept)."""
    X, y = design_matrix(train, poison)
    theta = params.theta
    if theta.shape != (X.shape[1] + 1,):
        raise ValueError("parameter dimension does not match the data")
    return float(np.max(np.abs(gradient(theta, X, y, lam))))


def predict(params: RegressionParams, num, cat=()) -> float:
    """Prediction for one sample given its numerical vector and concatenated one-hot blocks."""
    x = np.concatenate([np.asarray(num, dtype=float).ravel(), np.asarray(cat, dtype=float).ravel()])
    w = params.w
    if x.shape != w.shape:
        raise ValueError(f"sample has {x.size} encoded features, model has {w.size}")
    return float(w @ x + params.c)


def predict_rows(params: RegressionParams, X: np.ndarray) -> np.ndarray:
    return X @ params.w + params.c


def mse(params: RegressionParams, dataset: Dataset) -> float:
    if dataset.n == 0:
        raise ValueError("mse of an empty dataset is undefined")
    resid = predict_rows(params, dataset.features) - dataset.y
    return float(resid @ resid / dataset.n)


def cv_lambda(train: Dataset, grid=DEFAULT_LAMBDA_GRID, folds: int = 10, seed: int = 0) -> float:
    """Grid search over lambda with k-fold cross-validation on unpoisoned data.

    Folds are contiguous blocks of one seeded permutation. Ties go to the
    larger lambda.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(g < 0 for g in grid):
        raise ValueError("lambda grid values must be non-negative")
    if folds < 2 or train.n < folds:
        raise ValueError(f"need 2 <= folds <= n_train, got folds={folds}, n={train.n}")
    X, y = train.features, np.asarray(train.y)
    parts = np.array_split(np.random.default_rng(seed).permutation(train.n), folds)
    scores = []
    for lam in grid:
        errs = []
        for k in range(folds):
            hold = parts[k]
            keep = np.concatenate([parts[i] for i in range(folds) if i != k])
            theta = solve_theta(X[keep], y[keep], lam)
            resid = augment(X[hold]) @ theta - y[hold]
            errs.append(resid @ resid / len(hold))
        scores.append(float(np.mean(errs)))
    best = min(scores)
    return max(lam for lam, s in zip(grid, scores) if s == best)
