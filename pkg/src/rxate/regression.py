"""Least squares building blocks: datasets, per-arm OLS fits and pooled centering."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import linalg


class DataError(ValueError):
    """Input data violates a dataset or estimator precondition."""


class RankDeficientError(DataError):
    """Design matrix (with intercept) is not of full column rank."""

    def __init__(self, message: str, column: Optional[str] = None):
        super().__init__(message)
        self.column = column


class InsufficientDataError(DataError):
    """Too few observations to identify the requested fit."""


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Per-unit responses, treatment flags and covariates of a randomized trial.

    Parameters
    ----------
    y : array_like, shape (n,)
        Responses.
    w : array_like, shape (n,)
        Treatment flags, 1 for treated and 0 for control.
    X : array_like, shape (n, p), optional
        Covariates. ``p`` may be zero.
    names : sequence of str, optional
        Covariate column names.
    propensity : array_like, shape (n,), optional
        Known assignment probabilities, if the design supplies them.
    """

    y: np.ndarray
    w: np.ndarray
    X: np.ndarray = None
    names: tuple = ()
    propensity: Optional[np.ndarray] = None

    def __post_init__(self):
        y = _frozen(self.y, 1)
        if y.ndim != 1:
            raise DataError("y must be one-dimensional")
        n = y.shape[0]
        w_raw = np.asarray(self.w)
        if w_raw.shape != (n,):
            raise DataError(f"w has shape {w_raw.shape}, expected ({n},)")
        X = np.zeros((n, 0)) if self.X is None else np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(n, -1) if n else X.reshape(0, 0)
        if X.ndim != 2 or X.shape[0] != n:
            raise DataError(f"X has shape {X.shape}, expected ({n}, p)")
        X = _frozen(X, 2)
        if np.isnan(y).any() or np.isnan(X).any():
            raise DataError("missing values in y or X")
        if not np.isin(w_raw, (0, 1)).all():
            raise DataError("w must contain only 0/1 flags")
        w = np.asarray(w_raw, dtype=np.int8).copy()
        w.setflags(write=False)
        if w.sum() == 0 or w.sum() == n:
            raise DataError("both treatment arms must be non-empty")
        names = tuple(self.names) if self.names else tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} names given for {X.shape[1]} covariates")
        prop = self.propensity
        if prop is not None:
            prop = _frozen(prop, 1)
            if prop.shape != (n,):
                raise DataError(f"propensity has shape {prop.shape}, expected ({n},)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "propensity", prop)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_t(self) -> int:
        return int(self.w.sum())

    @property
    def n_c(self) -> int:
        return self.n - self.n_t

    def arm(self, treated: bool):
        """Return ``(X, y)`` for one arm."""
        mask = self.w == (1 if treated else 0)
        return self.X[mask], self.y[mask]

    def with_covariates(self, X, names: Sequence[str] = ()) -> "Dataset":
        return replace(self, X=X, names=tuple(names))

    def with_responses(self, y) -> "Dataset":
        return replace(self, y=y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        prop = None if self.propensity is None else self.propensity[idx]
        return Dataset(self.y[idx], self.w[idx], self.X[idx], self.names, prop)


@dataclass(frozen=True, eq=False)
class FitResult:
    """One arm's least squares fit.

    ``mse`` is ``SSE / df_resid`` and is NaN for an exact fit (``df_resid == 0``).
    """

    intercept: float
    slopes: np.ndarray
    residuals: np.ndarray
    mse: float
    r_squared: float
    df_resid: int
    sse: float = 0.0
    sst: float = 0.0
    names: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def p(self) -> int:
        return self.slopes.shape[0]


@dataclass(frozen=True, eq=False)
class CenteredDataset:
    dataset: Dataset
    pooled_mean: np.ndarray


def _first_dependent_column(A: np.ndarray) -> int:
    for j in range(1, A.shape[1] + 1):
        if np.linalg.matrix_rank(A[:, :j]) < j:
            return j - 1
    return A.shape[1] - 1


def fit_ols(X, y, weights=None, names: Sequence[str] = ()) -> FitResult:
    """Fit ``y ~ 1 + X`` by least squares.

    The intercept column is prepended internally. The solve uses a column
    pivoted QR factorization of the column-scaled design, so badly scaled
    covariates (e.g. dollars next to indicators) do not trip the rank test.

    Parameters
    ----------
    X : array_like, shape (n, p)
    y : array_like, shape (n,)
    weights : array_like, shape (n,), optional
        Positive observation weights; the fit then minimizes
        ``sum(weights * residual**2)``.
    names : sequence of str, optional
        Covariate names used in error messages.

    Returns
    -------
    FitResult

    Raises
    ------
    InsufficientDataError
        If ``n < p + 1``, i.e. the coefficients are not identified.
    RankDeficientError
        If the design with intercept is rank deficient. The error names the
        first column that is a linear combination of the preceding ones.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, p = X.shape
    if y.shape != (n,):
        raise DataError(f"y has shape {y.shape}, expected ({n},)")
    names = tuple(names) if names else tuple(f"x{j}" for j in range(p))
    k = p + 1
    if n < k:
        raise InsufficientDataError(f"{n} observations cannot identify {k} coefficients")

    A = np.column_stack([np.ones(n), X])
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        if sw.shape != (n,) or not np.all(np.isfinite(sw)) or np.any(sw <= 0):
            raise DataError("weights must be finite, positive and match y")
        Aw, yw = A * sw[:, None], y * sw
    else:
        Aw, yw = A, y

    scale = np.linalg.norm(Aw, axis=0)
    if np.any(scale == 0):
        j = int(np.flatnonzero(scale == 0)[0])
        col = "intercept" if j == 0 else names[j - 1]
        raise RankDeficientError(f"column {col!r} is identically zero", col)
    Q, R, perm = linalg.qr(Aw / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, k) * np.finfo(float).eps * diag[0]
    if np.any(diag <= tol):
        j = _first_dependent_column(Aw / scale)
        col = "intercept" if j == 0 else names[j - 1]
        raise RankDeficientError(
            f"design is rank deficient: column {col!r} is collinear with earlier columns", col
        )
    z = linalg.solve_triangular(R, Q.T @ yw)
    coef = np.empty(k)
    coef[perm] = z
    coef /= scale

    resid = y - A @ coef
    wts = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    sse = float(wts @ resid**2)
    ybar = float(wts @ y / wts.sum())
    sst = float(wts @ (y - ybar) ** 2)
    df = n - k
    mse = sse / df if df > 0 else float("nan")
    if sst > 0:
        r2 = min(max(1.0 - sse / sst, 0.0), 1.0)
    else:
        r2 = 1.0
    slopes = coef[1:].copy()
    slopes.setflags(write=False)
    resid.setflags(write=False)
    return FitResult(
        intercept=float(coef[0]),
        slopes=slopes,
        residuals=resid,
        mse=mse,
        r_squared=r2,
        df_resid=df,
        sse=sse,
        sst=sst,
        names=names,
    )


def predict_at(fit: FitResult, x) -> float:
    """Evaluate the fitted plane at a covariate vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (fit.p,):
        raise DataError(f"expected a covariate vector of length {fit.p}, got shape {x.shape}")
    return float(fit.intercept + x @ fit.slopes)


def pooled_mean(d: Dataset) -> np.ndarray:
    """``(n_T * xbar_T + n_C * xbar_C) / N``, i.e. the mean of all covariate rows."""
    XT, _ = d.arm(True)
    XC, _ = d.arm(False)
    return (d.n_t * XT.mean(axis=0) + d.n_c * XC.mean(axis=0)) / d.n


def pool_center(d: Dataset) -> CenteredDataset:
    """Center every covariate row at the pooled (both arms) mean."""
    m = pooled_mean(d) if d.p else np.zeros(0)
    m.setflags(write=False)
    return CenteredDataset(d.with_covariates(d.X - m, d.names), m)


def fit_arms(d: Dataset):
    """Fit the treated and control regressions separately; returns ``(fit_t, fit_c)``."""
    XT, yT = d.arm(True)
    XC, yC = d.arm(False)
    return fit_ols(XT, yT, names=d.names), fit_ols(XC, yC, names=d.names)
