"""Known assignment probabilities and stratified designs.

When treatment probabilities vary with covariates, the plain difference in
means is biased. Weighting by the inverse of the known probabilities
repairs it. Within strata, post-stratification weights the per-stratum
differences by stratum shares and coincides with the regression estimator
on stratum indicators.

Run with ``python3 demos/design_variants.py``.
"""

import numpy as np

from rxate import (
    Dataset,
    StratifiedDataset,
    ate_diff_means,
    ate_ipw_regression,
    ate_post_stratified,
    ate_regression,
    ate_stratified_naive,
    ate_weighted_contrast,
)

rng = np.random.default_rng(3)
n = 2000
x = rng.uniform(0, 1, n)
pi = 0.2 + 0.6 * x
w = (rng.uniform(size=n) < pi).astype(int)
y0 = 1 + 2 * x + rng.normal(scale=0.5, size=n)
y = np.where(w == 1, y0 + 1 + 3 * x**2, y0)
d = Dataset(y, w, x[:, None], ("x",), propensity=pi)
print("true ATE 2.0")
print(f"difference in means          {ate_diff_means(d).point:.3f}")
for norm in ("literal", "horvitz_thompson", "hajek"):
    print(f"weighted contrast ({norm:16s}) {ate_weighted_contrast(d, normalization=norm).point:.3f}")
print(f"weighted least squares       {ate_ipw_regression(d, mode='wls').point:.3f}")
print(f"regression on y / pi         {ate_ipw_regression(d, mode='reweight').point:.3f}")
# Dividing by per-arm counts or regressing raw y/pi scales responses by
# roughly 1/E[pi]; the Horvitz-Thompson, Hajek and weighted fits do not.

s = rng.integers(0, 3, 600)
w2 = (rng.uniform(size=600) < np.array([0.2, 0.5, 0.8])[s]).astype(int)
y2 = 5 * s + w2 * (1 + s) + rng.normal(size=600)
sd = StratifiedDataset(y2, w2, s)
shares = np.bincount(s) / s.size
print(f"\nstratified: true ATE {np.dot(shares, 1 + np.arange(3)):.3f} (sample-weighted)")
print(f"naive contrast     {ate_stratified_naive(sd).point:.3f}")
ps = ate_post_stratified(sd)
print(f"post-stratified    {ps.point:.3f} (SE {ps.se:.3f})")
print(f"regression on strata indicators {ate_regression(sd.to_dataset()).point:.3f}")
