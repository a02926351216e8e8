import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rxate import (
    DataError,
    Dataset,
    PopulationParams,
    ate_diff_means,
    ate_regression,
    compare_conditional_marginal,
    equality_slopes,
    gap_quadratic_form,
    paper_config,
    population_params,
    r2_threshold,
    var_diff,
    var_regression,
    variance_gap,
)


def scalar_params(**kw):
    base = dict(beta_t=[2.0], beta_c=[1.0], sigma2_t=1.0, sigma2_c=1.0, sigma_x=[[1.0]], n_t=100, n_c=100)
    base.update(kw)
    return PopulationParams(**base)


def test_scalar_example():
    P = scalar_params()
    assert var_diff(P) == pytest.approx(0.07)
    assert var_regression(P) == pytest.approx(0.025)
    assert variance_gap(P) == pytest.approx(0.045)
    assert gap_quadratic_form(P) == pytest.approx(0.045)


def test_zero_slopes_leave_residual_term():
    P = scalar_params(beta_t=[0.0], beta_c=[0.0], varf_t=0.5, sigma2_c=2.0)
    assert var_diff(P) == pytest.approx(1.5 / 100 + 2.0 / 100)
    assert var_regression(P) == var_diff(P)


def test_equal_slopes_regression_residual_only():
    P = scalar_params(beta_t=[3.0], beta_c=[3.0])
    assert var_regression(P) == pytest.approx(0.02)


def test_n2_bound_is_added():
    P = scalar_params()
    assert var_regression(P, n2_bound=0.001) == pytest.approx(0.026)


def test_invalid_params():
    with pytest.raises(DataError):
        scalar_params(sigma_x=[[-1.0]])
    with pytest.raises(DataError):
        PopulationParams([1.0, 0.0], [0.0, 0.0], 1.0, 1.0, [[1.0, 0.5], [0.4, 1.0]], 10, 10)
    with pytest.raises(DataError):
        PopulationParams([1.0, 0.0], [0.0, 0.0], 1.0, 1.0, [[1.0, 2.0], [2.0, 1.0]], 10, 10)
    with pytest.raises(DataError):
        scalar_params(sigma2_t=-1.0)
    with pytest.raises(DataError):
        scalar_params(beta_c=[1.0, 2.0])
    # rounding-level negative eigenvalue is tolerated
    PopulationParams([1.0, 1.0], [0.0, 0.0], 1.0, 1.0, [[1.0, 1.0], [1.0, 1.0 - 1e-13]], 10, 10)


def _random_params(rng):
    p = int(rng.integers(1, 6))
    A = rng.normal(size=(p + int(rng.integers(-1, 3)) if p > 1 else 1, p))
    S = A.T @ A
    return PopulationParams(
        beta_t=rng.normal(scale=3, size=p),
        beta_c=rng.normal(scale=3, size=p),
        sigma2_t=rng.exponential(),
        sigma2_c=rng.exponential(),
        sigma_x=S,
        n_t=int(rng.integers(2, 500)),
        n_c=int(rng.integers(2, 500)),
        varf_t=rng.exponential(),
        varf_c=rng.exponential(),
    )


def test_gap_nonnegative_thousand_draws():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        P = _random_params(rng)
        g = variance_gap(P)
        assert g >= -1e-12
        assert g == pytest.approx(gap_quadratic_form(P), rel=1e-9, abs=1e-12)


@given(
    seed=st.integers(0, 2**32 - 1),
    n_t=st.integers(2, 1000),
    n_c=st.integers(2, 1000),
)
@settings(max_examples=200, deadline=None)
def test_equality_condition_attains_zero(seed, n_t, n_c):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 5))
    A = rng.normal(size=(p + 2, p))
    bt = rng.normal(size=p)
    P = PopulationParams(bt, equality_slopes(bt, n_t, n_c), 1.0, 1.0, A.T @ A, n_t, n_c)
    assert abs(variance_gap(P)) <= 1e-12 * var_diff(P)


def test_equality_condition_negative_cases():
    bt = np.array([1.0, -2.0])
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    for bc in (np.zeros(2), -bt, bt, equality_slopes(bt, 30, 60) * 1.01):
        P = PopulationParams(bt, bc, 1.0, 1.0, S, 30, 60)
        assert variance_gap(P) > 1e-12 * var_diff(P)


def test_scale_consistency():
    rng = np.random.default_rng(9)
    P = _random_params(rng)
    c = 3.7
    Q = PopulationParams(
        P.beta_t * c, P.beta_c * c, P.sigma2_t * c**2, P.sigma2_c * c**2, P.sigma_x, P.n_t, P.n_c,
        P.varf_t * c**2, P.varf_c * c**2,
    )
    assert var_diff(Q) == pytest.approx(c**2 * var_diff(P))
    assert var_regression(Q) == pytest.approx(c**2 * var_regression(P))


def test_variances_match_simulation():
    rng = np.random.default_rng(55)
    n_t, n_c, reps = 100, 100, 4000
    bt, bc = np.array([2.0, -1.0]), np.array([0.5, 1.0])
    L = np.array([[1.0, 0.0], [0.6, 0.8]])
    P = PopulationParams(bt, bc, 1.5, 0.8, L @ L.T, n_t, n_c)
    diff, reg = np.empty(reps), np.empty(reps)
    w = np.r_[np.ones(n_t, int), np.zeros(n_c, int)]
    for r in range(reps):
        X = rng.normal(size=(n_t + n_c, 2)) @ L.T
        e = rng.normal(size=n_t + n_c) * np.where(w == 1, math.sqrt(1.5), math.sqrt(0.8))
        y = np.where(w == 1, X @ bt, X @ bc) + e
        d = Dataset(y, w, X)
        diff[r] = ate_diff_means(d).point
        reg[r] = ate_regression(d).point
    for sample, target in ((diff, var_diff(P)), (reg, var_regression(P))):
        v = sample.var(ddof=1)
        mc_se = v * math.sqrt(2 / (reps - 1))
        assert abs(v - target) < 3 * mc_se


def test_r2_threshold_values():
    assert r2_threshold(9, 1) == pytest.approx(0.3)
    assert r2_threshold(101, 3) == pytest.approx(5 / 102)
    with pytest.raises(DataError):
        r2_threshold(3, 2)


def threshold_fixture(r2=0.3):
    # x symmetric, e = x^2 - mean(x^2) is orthogonal to 1 and x
    x = np.arange(-4.0, 5.0)
    e = x**2 - (x**2).mean()
    sxx, see = (x**2).sum(), (e**2).sum()
    b = math.sqrt(r2 * see / ((1 - r2) * sxx))
    return x, 1.0 + b * x + e


def test_threshold_fixture_equality():
    x, y = threshold_fixture()
    cmp = compare_conditional_marginal(x, y)
    assert cmp.r_squared == pytest.approx(0.3, rel=1e-12)
    assert cmp.threshold == pytest.approx(0.3)
    assert abs(cmp.conditional - cmp.marginal) <= 1e-9 * cmp.marginal
    # both equal 440/9 by hand: SST = 132 + 308
    assert cmp.marginal == pytest.approx(440 / 9)


@pytest.mark.parametrize("r2,expected", [(0.5, "conditional"), (0.1, "marginal")])
def test_threshold_strict_orderings(r2, expected):
    x, y = threshold_fixture(r2)
    assert compare_conditional_marginal(x, y).smaller == expected


def test_perfect_fit_conditional_zero():
    x = np.arange(6.0)
    cmp = compare_conditional_marginal(x, 2 * x + 1)
    assert cmp.conditional == pytest.approx(0, abs=1e-25)
    assert cmp.smaller == "conditional"


@pytest.mark.xfail(
    strict=True,
    reason="published simulation SE for the regression estimator is not reachable from the published design",
)
def test_population_variance_matches_published_simulation_se():
    P = population_params(paper_config())
    assert math.sqrt(var_regression(P)) == pytest.approx(0.332, rel=0.05)
