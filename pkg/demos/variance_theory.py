"""Population variances of the two estimators.

With slopes ``beta_T``, ``beta_C``, covariate covariance ``Sigma`` and arm
sizes ``n_T``, ``n_C``, the regression estimator never has the larger
large-sample variance. The gap is a quadratic form in
``q = sqrt(n_C/n_T) beta_T + sqrt(n_T/n_C) beta_C`` and vanishes exactly
when ``beta_C = -(n_C/n_T) beta_T``.

Run with ``python3 demos/variance_theory.py``.
"""

import numpy as np

from rxate import (
    PopulationParams,
    compare_conditional_marginal,
    equality_slopes,
    r2_threshold,
    var_diff,
    var_regression,
    variance_gap,
)

P = PopulationParams(beta_t=[2.0], beta_c=[1.0], sigma2_t=1.0, sigma2_c=1.0, sigma_x=[[1.0]], n_t=100, n_c=100)
print(f"scalar example: var_diff {var_diff(P):.4f}, var_regression {var_regression(P):.4f}, gap {variance_gap(P):.4f}")

bc = equality_slopes([2.0], 100, 300)
Q = PopulationParams([2.0], bc, 1.0, 1.0, [[1.0]], 100, 300)
print(f"beta_C = {bc[0]:.2f} with 100/300 units: gap {variance_gap(Q):.2e}")

rng = np.random.default_rng(0)
gaps = []
for _ in range(1000):
    A = rng.normal(size=(4, 3))
    R = PopulationParams(rng.normal(size=3), rng.normal(size=3), 1.0, 1.0, A.T @ A, 50, 80)
    gaps.append(variance_gap(R))
print(f"1000 random designs: smallest gap {min(gaps):.3e}")

# Fixed-design view: the classical variance of a prediction at the covariate
# mean, MSE (1 + 1/n), undercuts the marginal SST/n only once R^2 passes
# (p + 2)/(n + 1).
x = np.arange(-4.0, 5.0)
e = x**2 - (x**2).mean()
for r2 in (0.2, 0.3, 0.4):
    b = np.sqrt(r2 * (e**2).sum() / ((1 - r2) * (x**2).sum()))
    c = compare_conditional_marginal(x, 1 + b * x + e)
    print(f"R^2 {c.r_squared:.2f} (threshold {r2_threshold(9, 1):.2f}): "
          f"conditional {c.conditional:.3f}, marginal {c.marginal:.3f}, ratio {c.conditional / c.marginal:.6f}")
