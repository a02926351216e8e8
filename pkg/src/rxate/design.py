"""Estimators for non-uniform assignment: known propensities and strata."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .estimators import (
    AteEstimate,
    _range_warnings,
    ate_regression,
    combined_r_squared,
    regression_variance,
)
from .regression import DataError, Dataset, fit_ols, pool_center

EXTREME_WEIGHT = 20.0


class WeightError(DataError):
    """An assignment probability lies outside (0, 1)."""


class ExtremeWeightWarning(UserWarning):
    pass


class UndefinedEstimandError(DataError):
    """A stratum lacks treated or control units."""

    def __init__(self, message: str, stratum=None):
        super().__init__(message)
        self.stratum = stratum


@dataclass(frozen=True)
class PropensitySpec:
    """Known probability of treatment per unit.

    ``value`` is a constant, a per-unit array, or a callable mapping the
    ``(n, p)`` covariate matrix to per-unit probabilities.
    """

    value: Union[float, np.ndarray, Callable]

    def resolve(self, d: Dataset) -> np.ndarray:
        v = self.value
        if callable(v):
            pi = np.asarray(v(d.X), dtype=float)
        elif np.ndim(v) == 0:
            pi = np.full(d.n, float(v))
        else:
            pi = np.asarray(v, dtype=float)
        if pi.shape != (d.n,):
            raise WeightError(f"propensity has shape {pi.shape}, expected ({d.n},)")
        bad = ~((pi > 0) & (pi < 1))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise WeightError(f"propensity {pi[i]!r} at unit {i} is outside (0, 1)")
        return pi

    @classmethod
    def from_dataset(cls, d: Dataset) -> "PropensitySpec":
        if d.propensity is None:
            raise WeightError("dataset carries no propensity column")
        return cls(np.asarray(d.propensity))


def _resolve(d: Dataset, ps: Optional[PropensitySpec]) -> np.ndarray:
    return (ps or PropensitySpec.from_dataset(d)).resolve(d)


def ipw_weights(d: Dataset, ps: Optional[PropensitySpec] = None) -> tuple:
    """Per-unit inverse probability weights and any extreme-weight messages."""
    pi = _resolve(d, ps)
    wts = np.where(d.w == 1, 1.0 / pi, 1.0 / (1.0 - pi))
    msgs = []
    big = wts > EXTREME_WEIGHT
    if big.any():
        msgs.append(
            f"{int(big.sum())} unit weight(s) exceed {EXTREME_WEIGHT:g} (max {wts.max():.6g})"
        )
    return wts, msgs


def reweight(d: Dataset, ps: Optional[PropensitySpec] = None) -> Dataset:
    """Divide treated responses by ``pi`` and control responses by ``1 - pi``."""
    _, msgs = ipw_weights(d, ps)
    for m in msgs:
        warnings.warn(m, ExtremeWeightWarning, stacklevel=2)
    pi = _resolve(d, ps)
    return d.with_responses(d.y / np.where(d.w == 1, pi, 1.0 - pi))


def ate_weighted_contrast(
    d: Dataset, ps: Optional[PropensitySpec] = None, normalization: str = "literal"
) -> AteEstimate:
    """Contrast of inverse-probability-weighted arm averages.

    normalization : {"literal", "horvitz_thompson", "hajek"}
        ``literal`` divides each arm's weighted sum by the arm size,
        ``horvitz_thompson`` by the total sample size N and ``hajek`` by the
        arm's sum of weights.

    No standard error is available; ``se`` is NaN.
    """
    wts, msgs = ipw_weights(d, ps)
    t, c = d.w == 1, d.w == 0
    yw = d.y * wts
    if normalization == "literal":
        point = yw[t].sum() / d.n_t - yw[c].sum() / d.n_c
    elif normalization == "horvitz_thompson":
        point = (yw[t].sum() - yw[c].sum()) / d.n
    elif normalization == "hajek":
        point = yw[t].sum() / wts[t].sum() - yw[c].sum() / wts[c].sum()
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    diag = {
        "warnings": msgs + ["no standard error is available for the weighted contrast"],
        "normalization": normalization,
    }
    return AteEstimate(float(point), float("nan"), "weighted_contrast", d.n_t, d.n_c, diag)


def ate_ipw_regression(
    d: Dataset, ps: Optional[PropensitySpec] = None, mode: str = "reweight"
) -> AteEstimate:
    """Regression estimator for known, covariate-dependent assignment probabilities.

    mode : {"reweight", "wls"}
        ``reweight`` runs the pooled-mean regression estimator on responses
        divided by their assignment probabilities. ``wls`` instead fits each
        arm by least squares weighted with ``1/pi`` (resp. ``1/(1-pi)``) and
        evaluates both fits at the pooled covariate mean; this version is
        consistent for the ATE when assignment depends on covariates.

    The reported SE is the unweighted regression formula applied to the
    fitted quantities and ignores the randomness of the weights.
    """
    wts, msgs = ipw_weights(d, ps)
    if mode == "reweight":
        base = ate_regression(d.with_responses(d.y * wts))
        diag = dict(base.diagnostics)
        diag["warnings"] = msgs + list(diag["warnings"])
        point, se = base.point, base.se
    elif mode == "wls":
        c = pool_center(d)
        t, cm = d.w == 1, d.w == 0
        fT = fit_ols(c.dataset.X[t], d.y[t], weights=wts[t], names=d.names)
        fC = fit_ols(c.dataset.X[cm], d.y[cm], weights=wts[cm], names=d.names)
        point = fT.intercept - fC.intercept
        var = regression_variance(c.dataset, fT, fC)
        se = float(np.sqrt(var)) if np.isfinite(var) else float("nan")
        diag = {
            "warnings": msgs + _range_warnings(d, point),
            "r_squared_combined": combined_r_squared(d, fT, fC),
        }
    else:
        raise ValueError(f"unknown mode {mode!r}")
    diag["mode"] = mode
    diag["warnings"].append("standard error ignores the variability introduced by weighting")
    return AteEstimate(float(point), se, "ipw_regression", d.n_t, d.n_c, diag)


@dataclass(frozen=True, eq=False)
class StratifiedDataset:
    """Responses, treatment flags and an integer stratum label per unit.

    ``labels`` optionally records the raw stratum value for each integer label.
    """

    y: np.ndarray
    w: np.ndarray
    stratum: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.w)
        s = np.asarray(self.stratum)
        if y.ndim != 1 or w.shape != y.shape or s.shape != y.shape:
            raise DataError("y, w and stratum must be equal-length vectors")
        if np.isnan(y).any():
            raise DataError("missing values in y")
        if not np.isin(w, (0, 1)).all():
            raise DataError("w must contain only 0/1 flags")
        if not np.issubdtype(s.dtype, np.integer):
            raise DataError("stratum labels must be integers")
        if w.sum() == 0 or w.sum() == w.size:
            raise DataError("both treatment arms must be non-empty")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w.astype(np.int8))
        object.__setattr__(self, "stratum", s.astype(np.int64))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def strata(self) -> np.ndarray:
        return np.unique(self.stratum)

    @property
    def counts(self) -> np.ndarray:
        """``K[i, j]``: units in stratum ``strata[i]`` receiving arm ``j`` (0 control, 1 treated)."""
        return np.array(
            [[np.sum((self.stratum == s) & (self.w == j)) for j in (0, 1)] for s in self.strata]
        )

    def to_dataset(self) -> Dataset:
        """Plain dataset, covariates are one-hot stratum indicators (first stratum dropped)."""
        strata = self.strata
        X = (self.stratum[:, None] == strata[None, 1:]).astype(float)
        names = tuple(f"stratum_{s}" for s in strata[1:])
        return Dataset(self.y, self.w, X, names)

    def _label(self, s):
        return self.labels[s] if 0 <= s < len(self.labels) else s


def ate_stratified_naive(sd: StratifiedDataset) -> AteEstimate:
    """Grand treated mean minus grand control mean, ignoring strata."""
    t, c = sd.w == 1, sd.w == 0
    point = sd.y[t].mean() - sd.y[c].mean()
    var = 0.0
    for m in (t, c):
        var += sd.y[m].var(ddof=1) / m.sum() if m.sum() > 1 else float("nan")
    se = float(np.sqrt(var)) if np.isfinite(var) else float("nan")
    return AteEstimate(float(point), se, "stratified_naive", int(t.sum()), int(c.sum()), {"warnings": []})


def ate_post_stratified(sd: StratifiedDataset) -> AteEstimate:
    """Within-stratum differences in means weighted by stratum sample shares.

    Coincides with the pooled-mean regression estimator on one-hot stratum
    covariates. The SE uses the standard post-stratification formula
    ``sum_i p_i^2 (s2_i1/K_i1 + s2_i0/K_i0)``; it is NaN when a cell has a
    single unit.
    """
    K = sd.counts
    N = sd.y.size
    point = 0.0
    var = 0.0
    for s, (k0, k1) in zip(sd.strata, K):
        if k0 < 1 or k1 < 1:
            raise UndefinedEstimandError(
                f"stratum {sd._label(s)!r} has {k1} treated and {k0} control units; "
                "the post-stratified estimate is undefined",
                sd._label(s),
            )
        m = sd.stratum == s
        y1, y0 = sd.y[m & (sd.w == 1)], sd.y[m & (sd.w == 0)]
        share = (k0 + k1) / N
        point += share * (y1.mean() - y0.mean())
        if k0 > 1 and k1 > 1:
            var += share**2 * (y1.var(ddof=1) / k1 + y0.var(ddof=1) / k0)
        else:
            var = float("nan")
    warns = [] if np.isfinite(var) else ["standard error undefined: a stratum cell has a single unit"]
    se = float(np.sqrt(var)) if np.isfinite(var) else float("nan")
    return AteEstimate(
        float(point), se, "post_stratified", int(K[:, 1].sum()), int(K[:, 0].sum()),
        {"warnings": warns, "strata": len(K)},
    )
