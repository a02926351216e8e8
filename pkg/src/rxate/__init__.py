"""Covariate-adjusted average treatment effect estimation for randomized trials
with random covariates."""

from .regression import (
    CenteredDataset,
    DataError,
    Dataset,
    FitResult,
    InsufficientDataError,
    RankDeficientError,
    fit_arms,
    fit_ols,
    pool_center,
    pooled_mean,
    predict_at,
)
from .estimators import (
    AteEstimate,
    arm_mean_predictions,
    ate_diff_means,
    ate_diff_means_regression_se,
    ate_known_mean,
    ate_regression,
    ate_regression_interacted,
    combined_r_squared,
    wald_interval,
)
from .oracle import (
    PopulationParams,
    VarianceComparison,
    compare_conditional_marginal,
    equality_slopes,
    gap_quadratic_form,
    r2_threshold,
    var_diff,
    var_regression,
    variance_gap,
)
from .design import (
    EXTREME_WEIGHT,
    ExtremeWeightWarning,
    PropensitySpec,
    StratifiedDataset,
    UndefinedEstimandError,
    WeightError,
    ate_ipw_regression,
    ate_post_stratified,
    ate_stratified_naive,
    ate_weighted_contrast,
    ipw_weights,
    reweight,
)
from .io import ColumnSpec, Report, load_csv, load_nsw
from .simulation import (
    Covariate,
    SimulationError,
    SimulationConfig,
    SimulationReport,
    calibrate_noise,
    decompose_error,
    generate_dataset,
    mean_r2,
    generate_paper_dgp,
    paired_bootstrap_ci,
    paper_config,
    population_params,
    r2_sweep,
    run_monte_carlo,
)

__version__ = "0.1.0"
