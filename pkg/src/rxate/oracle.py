"""Population variances of the two estimators and the comparison between them.

All formulas are for large samples: ``var_regression`` leaves out its
``O(N^-2)`` remainder unless an explicit bound is passed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .regression import DataError, fit_ols

PSD_TOL = -1e-10


@dataclass(frozen=True, eq=False)
class PopulationParams:
    """Population description of a two-arm trial.

    Attributes
    ----------
    beta_t, beta_c : ndarray, shape (p,)
        Best-linear-approximation slopes in each arm.
    sigma2_t, sigma2_c : float
        Error variances.
    varf_t, varf_c : float
        Variances of the nonlinearity left over by the linear approximation.
    sigma_x : ndarray, shape (p, p)
        Covariate covariance, common to both arms.
    n_t, n_c : int
        Arm sizes.
    mu_x : ndarray, shape (p,)
        Covariate mean.
    beta0_t, beta0_c : float
        Intercepts of the linear approximations.
    """

    beta_t: np.ndarray
    beta_c: np.ndarray
    sigma2_t: float
    sigma2_c: float
    sigma_x: np.ndarray
    n_t: int
    n_c: int
    varf_t: float = 0.0
    varf_c: float = 0.0
    mu_x: Optional[np.ndarray] = None
    beta0_t: float = 0.0
    beta0_c: float = 0.0

    def __post_init__(self):
        bt = np.atleast_1d(np.asarray(self.beta_t, dtype=float))
        bc = np.atleast_1d(np.asarray(self.beta_c, dtype=float))
        p = bt.shape[0]
        S = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
        if bc.shape != (p,) or S.shape != (p, p):
            raise DataError("beta_t, beta_c and sigma_x dimensions disagree")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise DataError("sigma_x must be symmetric")
        if p and np.linalg.eigvalsh(S).min() < PSD_TOL:
            raise DataError("sigma_x is not positive semidefinite")
        for name in ("sigma2_t", "sigma2_c", "varf_t", "varf_c"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be nonnegative")
        if self.n_t < 1 or self.n_c < 1:
            raise DataError("arm sizes must be positive")
        mu = np.zeros(p) if self.mu_x is None else np.atleast_1d(np.asarray(self.mu_x, dtype=float))
        if mu.shape != (p,):
            raise DataError("mu_x has the wrong length")
        object.__setattr__(self, "beta_t", bt)
        object.__setattr__(self, "beta_c", bc)
        object.__setattr__(self, "sigma_x", S)
        object.__setattr__(self, "mu_x", mu)

    @property
    def n(self) -> int:
        return self.n_t + self.n_c

    @property
    def ate(self) -> float:
        """``E[T] - E[C]``."""
        return float(self.beta0_t - self.beta0_c + self.mu_x @ (self.beta_t - self.beta_c))

    def _residual_part(self) -> float:
        return (self.sigma2_t + self.varf_t) / self.n_t + (self.sigma2_c + self.varf_c) / self.n_c


def var_diff(params: PopulationParams) -> float:
    """Variance of the difference in means, split by conditioning on covariates."""
    P = params
    S = P.sigma_x
    return float(
        P._residual_part() + P.beta_t @ S @ P.beta_t / P.n_t + P.beta_c @ S @ P.beta_c / P.n_c
    )


def var_regression(params: PopulationParams, n2_bound: float = 0.0) -> float:
    """Large-sample variance of the pooled-mean regression estimator.

    ``n2_bound`` is added as-is; pass an upper bound on the ``O(N^-2)``
    remainder to get a conservative figure.
    """
    P = params
    db = P.beta_t - P.beta_c
    return float(P._residual_part() + db @ P.sigma_x @ db / P.n + n2_bound)


def variance_gap(params: PopulationParams) -> float:
    """``var_diff - var_regression``; never negative."""
    return var_diff(params) - var_regression(params)


def gap_quadratic_form(params: PopulationParams) -> float:
    """The same gap written as ``q' Sigma q / N`` with
    ``q = sqrt(n_C/n_T) beta_T + sqrt(n_T/n_C) beta_C``.

    It is zero exactly when ``beta_C = -(n_C/n_T) beta_T`` (for positive
    definite ``Sigma``).
    """
    P = params
    q = np.sqrt(P.n_c / P.n_t) * P.beta_t + np.sqrt(P.n_t / P.n_c) * P.beta_c
    return float(q @ P.sigma_x @ q / P.n)


def equality_slopes(beta_t, n_t: int, n_c: int) -> np.ndarray:
    """Control slopes at which the two variances coincide."""
    return -(n_c / n_t) * np.asarray(beta_t, dtype=float)


def r2_threshold(n: int, p: int) -> float:
    """R^2 above which the conditional variance estimate at the covariate
    mean falls below the marginal one: ``(p + 2) / (n + 1)``."""
    if n <= p + 1:
        raise DataError(f"need n > p + 1, got n={n}, p={p}")
    return (p + 2) / (n + 1)


@dataclass(frozen=True)
class VarianceComparison:
    conditional: float
    marginal: float
    r_squared: float
    threshold: float

    @property
    def smaller(self) -> str:
        if self.conditional < self.marginal:
            return "conditional"
        if self.marginal < self.conditional:
            return "marginal"
        return "equal"


def compare_conditional_marginal(X, y) -> VarianceComparison:
    """Compare ``MSE * (1 + 1/n)`` from a regression with the marginal ``SST / n``.

    The conditional figure is the classical fixed-design variance at the
    covariate mean; the marginal one ignores covariates. They cross exactly
    at ``R^2 = (p + 2) / (n + 1)``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, p = X.shape
    thr = r2_threshold(n, p)
    fit = fit_ols(X, y)
    return VarianceComparison(
        conditional=fit.mse * (1 + 1 / n),
        marginal=fit.sst / n,
        r_squared=1 - fit.sse / fit.sst if fit.sst > 0 else 1.0,
        threshold=thr,
    )
