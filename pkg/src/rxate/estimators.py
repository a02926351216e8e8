"""Average treatment effect estimators and their standard errors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .regression import (
    DataError,
    Dataset,
    fit_arms,
    fit_ols,
    pool_center,
    predict_at,
)

METHODS = (
    "diff_means",
    "regression",
    "regression_interacted",
    "known_mean",
    "weighted_contrast",
    "ipw_regression",
    "stratified_naive",
    "post_stratified",
)


@dataclass(frozen=True)
class AteEstimate:
    """Point estimate and standard error of an average treatment effect.

    ``se`` is NaN when it cannot be formed (no residual degrees of freedom,
    or a method without a variance formula); ``diagnostics["warnings"]``
    then says why.
    """

    point: float
    se: float
    method: str
    n_t: int
    n_c: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if self.se < 0:
            raise ValueError("standard error must be nonnegative")

    @property
    def warnings(self) -> list:
        return list(self.diagnostics.get("warnings", []))

    def ci(self, level: float = 0.95) -> tuple:
        """Wald interval ``point -/+ z * se``."""
        return wald_interval(self.point, self.se, level)


def z_multiplier(level: float = 0.95) -> float:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(stats.norm.ppf(0.5 + level / 2))


def wald_interval(point: float, se: float, level: float = 0.95) -> tuple:
    h = z_multiplier(level) * se
    return point - h, point + h


def _is_binary(y) -> bool:
    return bool(np.isin(y, (0.0, 1.0)).all())


def _range_warnings(d: Dataset, point: float) -> list:
    if _is_binary(d.y) and not -1.0 <= point <= 1.0:
        return [f"binary response but estimate {point:.6g} lies outside [-1, 1]"]
    return []


def _df_warnings(*fits) -> list:
    if any(f.df_resid == 0 for f in fits):
        return ["standard error undefined: an arm regression has zero residual degrees of freedom"]
    return []


def _sqrt(v: float) -> float:
    return float(np.sqrt(v)) if np.isfinite(v) else float("nan")


def ate_diff_means(d: Dataset) -> AteEstimate:
    """Treated mean minus control mean, with the unpooled two-sample SE."""
    _, yT = d.arm(True)
    _, yC = d.arm(False)
    point = float(yT.mean() - yC.mean())
    var = 0.0
    warnings = []
    for yg in (yT, yC):
        if yg.size > 1:
            var += yg.var(ddof=1) / yg.size
        else:
            var = float("nan")
    if not np.isfinite(var):
        warnings.append("standard error undefined: an arm has a single unit")
    return AteEstimate(point, _sqrt(var), "diff_means", d.n_t, d.n_c, {"warnings": warnings})


def ate_diff_means_regression_se(d: Dataset) -> AteEstimate:
    """Difference in means with its SE rebuilt from the two arm regressions.

    The variance is split into a residual part and a covariate part,
    ``MSE_T/n_T + MSE_C/n_C + b_T' S_T b_T / n_T + b_C' S_C b_C / n_C``,
    where ``S_g`` is the covariate covariance within arm ``g``.
    """
    fT, fC = fit_arms(d)
    XT, _ = d.arm(True)
    XC, _ = d.arm(False)
    var = fT.mse / d.n_t + fC.mse / d.n_c
    if d.p:
        ST = np.atleast_2d(np.cov(XT, rowvar=False))
        SC = np.atleast_2d(np.cov(XC, rowvar=False))
        var += fT.slopes @ ST @ fT.slopes / d.n_t + fC.slopes @ SC @ fC.slopes / d.n_c
    base = ate_diff_means(d)
    diag = {"warnings": _df_warnings(fT, fC), "se_formula": "regression_decomposition"}
    return AteEstimate(base.point, _sqrt(var), "diff_means", d.n_t, d.n_c, diag)


def combined_r_squared(d: Dataset, fit_t, fit_c) -> float:
    """R^2 of the fully interacted single regression, from the two arm fits.

    With a treatment flag and full flag-by-covariate interactions, the single
    regression's residuals are exactly the two arm regressions' residuals.
    """
    sst = float(((d.y - d.y.mean()) ** 2).sum())
    if sst == 0:
        return 1.0
    return 1.0 - (fit_t.sse + fit_c.sse) / sst


def regression_variance(d: Dataset, fit_t, fit_c) -> float:
    """``MSE_T/n_T + MSE_C/n_C + (b_T - b_C)' S (b_T - b_C) / N`` with pooled covariance S."""
    var = fit_t.mse / d.n_t + fit_c.mse / d.n_c
    if d.p:
        S = np.atleast_2d(np.cov(d.X, rowvar=False))
        db = fit_t.slopes - fit_c.slopes
        var += db @ S @ db / d.n
    return var


def ate_regression(d: Dataset) -> AteEstimate:
    """Difference of arm intercepts after centering covariates at the pooled mean.

    Each arm is fit separately; evaluating both fits at the common pooled
    covariate mean shares covariate information between the arms. The
    estimate does not depend on the location of the covariates.
    """
    c = pool_center(d)
    fT, fC = fit_arms(c.dataset)
    point = fT.intercept - fC.intercept
    se = _sqrt(regression_variance(c.dataset, fT, fC))
    diag = {
        "warnings": _df_warnings(fT, fC) + _range_warnings(d, point),
        "r_squared_combined": combined_r_squared(d, fT, fC),
        "pooled_mean": c.pooled_mean.tolist(),
        "slopes_t": fT.slopes.tolist(),
        "slopes_c": fC.slopes.tolist(),
        "mse_t": fT.mse,
        "mse_c": fC.mse,
    }
    return AteEstimate(point, se, "regression", d.n_t, d.n_c, diag)


def interacted_design(d: Dataset):
    """Columns ``[w, Xc, w * Xc]`` with ``Xc`` centered at the pooled mean (intercept implicit)."""
    c = pool_center(d)
    Xc = c.dataset.X
    w = d.w.astype(float)
    names = ("treated",) + d.names + tuple(f"treated:{nm}" for nm in d.names)
    return np.column_stack([w, Xc, Xc * w[:, None]]), names


def ate_regression_interacted(d: Dataset) -> AteEstimate:
    """Treatment coefficient of one regression with flag-by-covariate interactions."""
    Z, names = interacted_design(d)
    fit = fit_ols(Z, d.y, names=names)
    point = float(fit.slopes[0])
    c = pool_center(d)
    fT, fC = fit_arms(c.dataset)
    se = _sqrt(regression_variance(c.dataset, fT, fC))
    diag = {
        "warnings": _df_warnings(fT, fC) + _range_warnings(d, point),
        "r_squared_combined": fit.r_squared,
    }
    return AteEstimate(point, se, "regression_interacted", d.n_t, d.n_c, diag)


def ate_known_mean(d: Dataset, mu) -> AteEstimate:
    """Regression estimator with covariates centered at a known population mean.

    Since the covariate mean is not estimated, the slope-difference term of
    the variance drops out and ``se = sqrt(MSE_T/n_T + MSE_C/n_C)``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.shape != (d.p,):
        raise DataError(f"mu has shape {mu.shape}, expected ({d.p},)")
    fT, fC = fit_arms(d.with_covariates(d.X - mu, d.names))
    point = fT.intercept - fC.intercept
    se = _sqrt(fT.mse / d.n_t + fC.mse / d.n_c)
    diag = {
        "warnings": _df_warnings(fT, fC) + _range_warnings(d, point),
        "r_squared_combined": combined_r_squared(d, fT, fC),
        "mu": mu.tolist(),
    }
    return AteEstimate(point, se, "known_mean", d.n_t, d.n_c, diag)


def arm_mean_predictions(d: Dataset) -> tuple:
    """Each arm's fit evaluated at that arm's own covariate mean.

    The pair reproduces the arm response means, so its difference is the
    difference in means.
    """
    fT, fC = fit_arms(d)
    XT, _ = d.arm(True)
    XC, _ = d.arm(False)
    return predict_at(fT, XT.mean(axis=0)), predict_at(fC, XC.mean(axis=0))


ESTIMATORS = {
    "diff_means": ate_diff_means,
    "regression": ate_regression,
    "regression_interacted": ate_regression_interacted,
    "known_mean": ate_known_mean,
}
