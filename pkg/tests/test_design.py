import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from rxate import (
    Dataset,
    ExtremeWeightWarning,
    PropensitySpec,
    StratifiedDataset,
    UndefinedEstimandError,
    WeightError,
    ate_diff_means,
    ate_ipw_regression,
    ate_post_stratified,
    ate_regression,
    ate_stratified_naive,
    ate_weighted_contrast,
    ipw_weights,
    reweight,
)

from conftest import make_dataset


def test_half_propensity_doubles_responses():
    rng = np.random.default_rng(0)
    d = make_dataset(rng, 5, 6, 1)
    r = reweight(d, PropensitySpec(0.5))
    assert_array_equal(r.y, 2 * d.y)
    assert_array_equal(r.X, d.X)
    assert_array_equal(r.w, d.w)


def test_extreme_control_weight_warns():
    d = Dataset([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0])
    pi = np.array([0.5, 0.5, 0.999, 0.5])
    with pytest.warns(ExtremeWeightWarning):
        r = reweight(d, PropensitySpec(pi))
    assert r.y[2] == pytest.approx(3.0 * 1000)
    wts, msgs = ipw_weights(d, PropensitySpec(pi))
    assert wts[2] == pytest.approx(1000)
    assert msgs


def test_weight_of_twenty_is_not_extreme():
    d = Dataset([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        reweight(d, PropensitySpec([0.05, 0.5, 0.5, 0.5]))


@pytest.mark.parametrize("pi", [[0.5, 0.5, 0.5], [0.5, 0.0, 0.5, 0.5], [0.5, 1.0, 0.5, 0.5], 1.2])
def test_bad_propensities(pi):
    d = Dataset([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0])
    with pytest.raises(WeightError):
        reweight(d, PropensitySpec(pi))


def test_missing_propensity_column():
    with pytest.raises(WeightError):
        ate_weighted_contrast(Dataset([1.0, 2.0], [1, 0]))


def test_callable_and_dataset_propensities():
    d = Dataset([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0], [[0.0], [1.0], [0.0], [1.0]], propensity=[0.25, 0.75, 0.25, 0.75])
    rule = PropensitySpec(lambda X: 0.25 + 0.5 * X[:, 0])
    a = ate_weighted_contrast(d, rule)
    b = ate_weighted_contrast(d)
    assert a.point == b.point


def test_dyadic_round_trip_is_exact():
    rng = np.random.default_rng(3)
    d = make_dataset(rng, 8, 8, 1)
    # the probability of the received arm is a power of two
    p_arm = rng.choice([0.5, 0.25, 0.125], size=d.n)
    pi = np.where(d.w == 1, p_arm, 1 - p_arm)
    r = reweight(d, PropensitySpec(pi))
    back = r.y * np.where(d.w == 1, pi, 1 - pi)
    assert_array_equal(back, d.y)


def test_literal_contrast_hand_value():
    d = Dataset([3.0, 5.0, 0.0, 2.0], [1, 1, 0, 0])
    est = ate_weighted_contrast(d, PropensitySpec(0.5))
    # treated mean 4, control mean 1: 2*4 - 2*1
    assert est.point == pytest.approx(6.0)
    assert math.isnan(est.se)
    assert est.diagnostics["normalization"] == "literal"
    ht = ate_weighted_contrast(d, PropensitySpec(0.5), normalization="horvitz_thompson")
    assert ht.point == pytest.approx((16 - 4) / 4)


def test_hajek_with_sample_share_is_diff_means():
    rng = np.random.default_rng(4)
    d = make_dataset(rng, 7, 13, 1)
    est = ate_weighted_contrast(d, PropensitySpec(7 / 20), normalization="hajek")
    assert est.point == pytest.approx(ate_diff_means(d).point, rel=1e-12)
    lit = ate_weighted_contrast(d, PropensitySpec(7 / 20), normalization="horvitz_thompson")
    assert lit.point == pytest.approx(ate_diff_means(d).point, rel=1e-12)


def test_zero_responses_give_zero():
    d = Dataset(np.zeros(6), [1, 1, 1, 0, 0, 0])
    for norm in ("literal", "horvitz_thompson", "hajek"):
        assert ate_weighted_contrast(d, PropensitySpec(0.3), normalization=norm).point == 0.0
    with pytest.raises(ValueError):
        ate_weighted_contrast(d, PropensitySpec(0.3), normalization="other")


def test_ipw_regression_half_is_twice_regression():
    rng = np.random.default_rng(6)
    d = make_dataset(rng, 12, 10, 2)
    est = ate_ipw_regression(d, PropensitySpec(0.5))
    assert est.point == pytest.approx(2 * ate_regression(d).point, rel=1e-12)
    assert est.method == "ipw_regression"
    assert any("weighting" in w for w in est.warnings)
    halved = d.with_responses(d.y / 2)
    assert ate_ipw_regression(halved, PropensitySpec(0.5)).point == pytest.approx(ate_regression(d).point)


def test_wls_constant_propensity_equals_regression():
    rng = np.random.default_rng(7)
    d = make_dataset(rng, 12, 10, 2)
    est = ate_ipw_regression(d, PropensitySpec(0.3), mode="wls")
    assert est.point == pytest.approx(ate_regression(d).point, rel=1e-10)
    with pytest.raises(ValueError):
        ate_ipw_regression(d, PropensitySpec(0.3), mode="x")


def _covariate_assignment(rng, n=400):
    # effect varies with x and assignment favors large x, so the naive contrast is biased
    x = rng.uniform(0, 1, n)
    pi = 0.2 + 0.6 * x
    w = (rng.uniform(size=n) < pi).astype(int)
    y0 = 1.0 + 2.0 * x + rng.normal(scale=0.5, size=n)
    y1 = y0 + 1.0 + 3.0 * x**2
    y = np.where(w == 1, y1, y0)
    return Dataset(y, w, x[:, None], propensity=pi)


TRUE_ATE = 1.0 + 3.0 / 3  # E[1 + 3 x^2], x ~ U(0, 1)
MEAN_PI = 0.5


@pytest.mark.slow
def test_ipw_monte_carlo():
    rng = np.random.default_rng(42)
    reps = 2000
    out = {"wls": [], "ht": [], "lit": [], "diff": []}
    for _ in range(reps):
        d = _covariate_assignment(rng)
        out["wls"].append(ate_ipw_regression(d, mode="wls").point)
        out["ht"].append(ate_weighted_contrast(d, normalization="horvitz_thompson").point)
        out["lit"].append(ate_weighted_contrast(d).point)
        out["diff"].append(ate_diff_means(d).point)
    arr = {k: np.asarray(v) for k, v in out.items()}

    def within(k, target, k_se=3.0):
        a = arr[k]
        return abs(a.mean() - target) < k_se * a.std(ddof=1) / math.sqrt(reps)

    assert within("ht", TRUE_ATE)
    assert within("wls", TRUE_ATE)
    # literal per-arm normalization tends to E[Y1]/E[pi] - E[Y0]/E[1 - pi]
    ey1 = 1.0 + 1.0 + 1.0 + 1.0
    ey0 = 2.0
    assert within("lit", ey1 / MEAN_PI - ey0 / (1 - MEAN_PI), 4.0)
    assert not within("diff", TRUE_ATE)


def stratified_fixture():
    # stratum 1: treated (1, 2, 3), control (1); stratum 2: treated (5, 7), control (2, 3, 3, 4)
    y = [1.0, 2.0, 3.0, 1.0, 5.0, 7.0, 2.0, 3.0, 3.0, 4.0]
    w = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0]
    s = [1, 1, 1, 1, 2, 2, 2, 2, 2, 2]
    return StratifiedDataset(y, w, s)


def test_post_stratified_hand_value():
    sd = stratified_fixture()
    est = ate_post_stratified(sd)
    assert est.point == pytest.approx(1 * 0.4 + 3 * 0.6)
    # single control unit in stratum 1
    assert math.isnan(est.se)
    assert est.warnings


def test_naive_hand_value():
    est = ate_stratified_naive(stratified_fixture())
    assert est.point == pytest.approx(18 / 5 - 13 / 5)


def test_post_stratified_equals_regression_on_indicators():
    sd = stratified_fixture()
    reg = ate_regression(sd.to_dataset())
    assert abs(ate_post_stratified(sd).point - reg.point) <= 1e-10


def test_post_stratified_se_hand_value():
    sd = StratifiedDataset([1.0, 3.0, 0.0, 2.0, 5.0, 6.0, 7.0, 2.0, 3.0, 4.0], [1, 1, 0, 0, 1, 1, 1, 0, 0, 0], [0, 0, 0, 0, 1, 1, 1, 1, 1, 1])
    est = ate_post_stratified(sd)
    assert est.point == pytest.approx(2.2)
    assert est.se == pytest.approx(math.sqrt(0.16 * 2 + 0.36 * (2 / 3)))
    # balanced arms: the naive contrast agrees here
    assert ate_stratified_naive(sd).point == pytest.approx(2.2)


def test_equal_effects_recovered():
    rng = np.random.default_rng(8)
    s = np.repeat([0, 1, 2], [6, 8, 10])
    w = np.tile([1, 0], 12)
    base = rng.normal(size=24) * 0 + s * 10.0
    sd = StratifiedDataset(base + 1.5 * w, w, s)
    assert ate_post_stratified(sd).point == pytest.approx(1.5)
    assert ate_stratified_naive(sd).point == pytest.approx(1.5)


def test_single_stratum_naive_equals_diff():
    y = np.array([1.0, 4.0, 2.0, 3.0, 0.5])
    w = np.array([1, 1, 0, 0, 0])
    sd = StratifiedDataset(y, w, np.zeros(5, int))
    assert ate_stratified_naive(sd).point == pytest.approx(ate_diff_means(Dataset(y, w)).point)
    assert ate_post_stratified(sd).point == pytest.approx(ate_diff_means(Dataset(y, w)).point)


def test_empty_cell_names_stratum():
    sd = StratifiedDataset([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1], [0, 0, 1, 1], labels=("north", "south"))
    with pytest.raises(UndefinedEstimandError) as ei:
        ate_post_stratified(sd)
    assert ei.value.stratum == "south"
    assert "south" in str(ei.value)


def test_identity_on_random_stratified_fixtures():
    rng = np.random.default_rng(99)
    for _ in range(25):
        k = int(rng.integers(1, 6))
        sizes = rng.integers(4, 15, size=k)
        s = np.repeat(np.arange(k), sizes)
        w = np.concatenate([rng.permutation(np.r_[np.ones(m // 2, int), np.zeros(m - m // 2, int)]) for m in sizes])
        y = rng.normal(size=s.size) + s + w * rng.normal()
        sd = StratifiedDataset(y, w, s)
        a = ate_post_stratified(sd).point
        b = ate_regression(sd.to_dataset()).point
        assert abs(a - b) <= 1e-10 * max(1.0, abs(b))
