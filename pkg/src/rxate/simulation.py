"""Monte Carlo evaluation of the estimators, the R^2 sweep and the paired bootstrap.

Random numbers
--------------
Replication ``i`` of a run with master seed ``s`` draws from
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(i,))))``, so any
replication can be regenerated on its own and shards can be computed in
any order. Within a replication the draw order is: each covariate column
in turn (treated rows first, then control rows), then the noise for all
treated units, then the noise for all control units.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .estimators import (
    ate_diff_means,
    ate_diff_means_regression_se,
    ate_known_mean,
    ate_regression,
    ate_regression_interacted,
    z_multiplier,
)
from .oracle import PopulationParams
from .regression import DataError, Dataset, RankDeficientError, InsufficientDataError, fit_arms

MAX_SEED = 2**64

# Noise sd at which the lognormal/gamma design (gamma rate 4) reaches a mean
# combined R^2 of 0.75 at 250/250: calibrate_noise(paper_config(seed=0),
# 0.75, replications=2000) -> 2.1702.
PAPER_NOISE_SD = 2.170

SIM_ESTIMATORS = (
    "diff_means",
    "regression",
    "regression_interacted",
    "known_mean",
    "diff_means_regression_se",
)


class SimulationError(RuntimeError):
    def __init__(self, message: str, replication: int):
        super().__init__(f"replication {replication}: {message}")
        self.replication = replication


@dataclass(frozen=True)
class Covariate:
    """One independent covariate distribution.

    ``kind`` and parameters: ``normal(mean, sd)``, ``lognormal(mu, sigma)``
    (of the underlying normal), ``gamma(shape, scale)``, ``uniform(low, high)``,
    ``bernoulli(p)``.
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("normal", "lognormal", "gamma", "uniform", "bernoulli"):
            raise DataError(f"unknown covariate distribution {self.kind!r}")
        if self.kind in ("normal", "lognormal") and self.b < 0:
            raise DataError("scale parameter must be nonnegative")
        if self.kind == "gamma" and (self.a <= 0 or self.b <= 0):
            raise DataError("gamma shape and scale must be positive")
        if self.kind == "uniform" and self.b <= self.a:
            raise DataError("uniform needs low < high")
        if self.kind == "bernoulli" and not 0 <= self.a <= 1:
            raise DataError("bernoulli p must lie in [0, 1]")

    @property
    def mean(self) -> float:
        k, a, b = self.kind, self.a, self.b
        if k == "normal":
            return a
        if k == "lognormal":
            return math.exp(a + b * b / 2)
        if k == "gamma":
            return a * b
        if k == "uniform":
            return (a + b) / 2
        return a

    @property
    def var(self) -> float:
        k, a, b = self.kind, self.a, self.b
        if k == "normal":
            return b * b
        if k == "lognormal":
            return (math.exp(b * b) - 1) * math.exp(2 * a + b * b)
        if k == "gamma":
            return a * b * b
        if k == "uniform":
            return (b - a) ** 2 / 12
        return a * (1 - a)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k, a, b = self.kind, self.a, self.b
        if k == "normal":
            return rng.normal(a, b, size)
        if k == "lognormal":
            return rng.lognormal(a, b, size)
        if k == "gamma":
            return rng.gamma(a, b, size)
        if k == "uniform":
            return rng.uniform(a, b, size)
        return (rng.random(size) < a).astype(float)


@dataclass(frozen=True)
class SimulationConfig:
    """A linear two-arm data generating process plus Monte Carlo settings.

    Treated responses are ``beta0_t + X @ beta_t + Z`` and control responses
    ``beta0_c + X @ beta_c + Z`` with ``Z ~ N(0, noise_sd**2)`` drawn
    independently per unit. ``noise_sd = 0`` gives noise-free data.
    """

    n_t: int = 250
    n_c: int = 250
    noise_sd: float = PAPER_NOISE_SD
    replications: int = 2000
    seed: int = 0
    dgp: str = "paper_lognormal_gamma"
    covariates: tuple = (Covariate("lognormal", 0.0, 1.0), Covariate("gamma", 3.0, 0.25))
    beta_t: tuple = (2.0, 3.0)
    beta_c: tuple = (1.0, 1.0)
    beta0_t: float = 0.0
    beta0_c: float = 0.0
    estimators: tuple = ("diff_means", "regression")
    level: float = 0.95

    def __post_init__(self):
        if self.dgp not in ("paper_lognormal_gamma", "linear_custom"):
            raise DataError(f"unknown dgp {self.dgp!r}")
        if self.replications < 1:
            raise DataError("replications must be at least 1")
        if not 0 <= self.seed < MAX_SEED:
            raise DataError("seed must be a 64-bit unsigned integer")
        if self.noise_sd < 0 or not math.isfinite(self.noise_sd):
            raise DataError("noise_sd must be finite and nonnegative")
        if self.n_t < 1 or self.n_c < 1:
            raise DataError("arm sizes must be positive")
        p = len(self.covariates)
        if len(self.beta_t) != p or len(self.beta_c) != p:
            raise DataError("slope vectors must have one entry per covariate")
        unknown = set(self.estimators) - set(SIM_ESTIMATORS)
        if unknown:
            raise DataError(f"unknown estimators {sorted(unknown)}")
        if not 0 < self.level < 1:
            raise DataError("level must lie in (0, 1)")

    @property
    def p(self) -> int:
        return len(self.covariates)

    @property
    def covariate_mean(self) -> np.ndarray:
        return np.array([c.mean for c in self.covariates])

    @property
    def true_ate(self) -> float:
        db = np.asarray(self.beta_t) - np.asarray(self.beta_c)
        return float(self.beta0_t - self.beta0_c + self.covariate_mean @ db)


def paper_config(
    noise: Optional[float] = None,
    noise_convention: str = "sd",
    gamma_param: str = "rate",
    **overrides,
) -> SimulationConfig:
    """Lognormal/gamma design: ``T = 2 X1 + 3 X2 + Z``, ``C = X1 + X2 + Z``.

    ``X1 ~ Lognormal(0, 1)`` and ``X2 ~ Gamma(3, 4)``. ``gamma_param``
    chooses whether the 4 is a rate (mean 3/4, the default) or a scale
    (mean 12). ``noise`` is the sd of Z, or its variance when
    ``noise_convention="variance"``; by default the calibrated
    ``PAPER_NOISE_SD`` is used.
    """
    if gamma_param not in ("rate", "scale"):
        raise DataError("gamma_param must be 'rate' or 'scale'")
    if noise_convention not in ("sd", "variance"):
        raise DataError("noise_convention must be 'sd' or 'variance'")
    scale = 0.25 if gamma_param == "rate" else 4.0
    if noise is None:
        sd = PAPER_NOISE_SD
    else:
        sd = math.sqrt(noise) if noise_convention == "variance" else float(noise)
    base = dict(
        noise_sd=sd,
        dgp="paper_lognormal_gamma",
        covariates=(Covariate("lognormal", 0.0, 1.0), Covariate("gamma", 3.0, scale)),
        beta_t=(2.0, 3.0),
        beta_c=(1.0, 1.0),
    )
    base.update(overrides)
    return SimulationConfig(**base)


def population_params(cfg: SimulationConfig) -> PopulationParams:
    """Population quantities of a configured linear design (no nonlinearity)."""
    return PopulationParams(
        beta_t=np.asarray(cfg.beta_t, dtype=float),
        beta_c=np.asarray(cfg.beta_c, dtype=float),
        sigma2_t=cfg.noise_sd**2,
        sigma2_c=cfg.noise_sd**2,
        sigma_x=np.diag([c.var for c in cfg.covariates]) if cfg.p else np.zeros((0, 0)),
        n_t=cfg.n_t,
        n_c=cfg.n_c,
        mu_x=cfg.covariate_mean,
        beta0_t=cfg.beta0_t,
        beta0_c=cfg.beta0_c,
    )


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))


def generate_dataset(cfg: SimulationConfig, replication: int = 0) -> Dataset:
    """Draw one trial from the configured design (treated rows first)."""
    rng = replication_rng(cfg.seed, replication)
    n = cfg.n_t + cfg.n_c
    X = np.column_stack([c.sample(rng, n) for c in cfg.covariates]) if cfg.p else np.zeros((n, 0))
    zt = rng.normal(0.0, cfg.noise_sd, cfg.n_t)
    zc = rng.normal(0.0, cfg.noise_sd, cfg.n_c)
    yt = cfg.beta0_t + X[: cfg.n_t] @ np.asarray(cfg.beta_t, dtype=float) + zt
    yc = cfg.beta0_c + X[cfg.n_t :] @ np.asarray(cfg.beta_c, dtype=float) + zc
    w = np.r_[np.ones(cfg.n_t, dtype=int), np.zeros(cfg.n_c, dtype=int)]
    return Dataset(np.r_[yt, yc], w, X, tuple(f"x{j + 1}" for j in range(cfg.p)))


def generate_paper_dgp(cfg: SimulationConfig, replication: int = 0) -> Dataset:
    if cfg.dgp != "paper_lognormal_gamma":
        raise DataError("configuration does not describe the lognormal/gamma design")
    return generate_dataset(cfg, replication)


def _estimate(tag: str, d: Dataset, cfg: SimulationConfig):
    if tag == "diff_means":
        return ate_diff_means(d)
    if tag == "regression":
        return ate_regression(d)
    if tag == "regression_interacted":
        return ate_regression_interacted(d)
    if tag == "known_mean":
        return ate_known_mean(d, cfg.covariate_mean)
    return ate_diff_means_regression_se(d)


@dataclass
class ShardResult:
    """Per-replication draws for the replications ``index``."""

    index: np.ndarray
    points: dict
    ses: dict
    r2: np.ndarray


def run_shard(cfg: SimulationConfig, start: int, stop: int) -> ShardResult:
    idx = np.arange(start, stop)
    points = {e: np.empty(idx.size) for e in cfg.estimators}
    ses = {e: np.empty(idx.size) for e in cfg.estimators}
    r2 = np.empty(idx.size)
    for k, i in enumerate(idx):
        try:
            d = generate_dataset(cfg, int(i))
            for e in cfg.estimators:
                est = _estimate(e, d, cfg)
                points[e][k] = est.point
                ses[e][k] = est.se
            r2[k] = _r2(d)
        except DataError as exc:
            raise SimulationError(str(exc), int(i)) from exc
    return ShardResult(idx, points, ses, r2)


def _r2(d: Dataset) -> float:
    if d.p == 0:
        return 0.0
    fT, fC = fit_arms(d)
    sst = float(((d.y - d.y.mean()) ** 2).sum())
    return 1.0 - (fT.sse + fC.sse) / sst if sst > 0 else 1.0


def merge_shards(shards: Sequence[ShardResult]) -> ShardResult:
    """Concatenate shards in replication order, whatever order they arrive in."""
    index = np.concatenate([s.index for s in shards])
    order = np.argsort(index, kind="stable")
    if np.any(np.diff(index[order]) == 0):
        raise ValueError("shards overlap")
    keys = shards[0].points.keys()
    return ShardResult(
        index[order],
        {e: np.concatenate([s.points[e] for s in shards])[order] for e in keys},
        {e: np.concatenate([s.ses[e] for s in shards])[order] for e in keys},
        np.concatenate([s.r2 for s in shards])[order],
    )


@dataclass(frozen=True)
class EstimatorSummary:
    mean_point: float
    sd_point: float
    mean_se: float
    mc_se_mean_se: float
    coverage: float
    replications: int

    @property
    def mc_se_mean_point(self) -> float:
        return self.sd_point / math.sqrt(self.replications)


@dataclass(frozen=True)
class SimulationReport:
    estimators: dict
    mean_r2: float
    replications: int
    seed: int
    true_ate: float
    noise_sd: float
    draws: Optional[ShardResult] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "replications": self.replications,
            "seed": self.seed,
            "true_ate": self.true_ate,
            "noise_sd": self.noise_sd,
            "mean_r2": self.mean_r2,
            "estimators": {
                k: {
                    "mean_point": v.mean_point,
                    "sd_point": v.sd_point,
                    "mean_se": v.mean_se,
                    "mc_se_mean_se": v.mc_se_mean_se,
                    "coverage": v.coverage,
                    "mc_se_mean_point": v.mc_se_mean_point,
                }
                for k, v in self.estimators.items()
            },
        }


def summarize(cfg: SimulationConfig, draws: ShardResult) -> SimulationReport:
    R = draws.index.size
    z = z_multiplier(cfg.level)
    truth = cfg.true_ate
    out = {}
    for e in draws.points:
        pts, ses = draws.points[e], draws.ses[e]
        lo, hi = pts - z * ses, pts + z * ses
        out[e] = EstimatorSummary(
            mean_point=float(pts.mean()),
            sd_point=float(pts.std(ddof=1)) if R > 1 else 0.0,
            mean_se=float(ses.mean()),
            mc_se_mean_se=float(ses.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0,
            coverage=float(np.mean((lo <= truth) & (truth <= hi))),
            replications=R,
        )
    return SimulationReport(out, float(draws.r2.mean()), R, cfg.seed, truth, cfg.noise_sd, draws)


def run_monte_carlo(cfg: SimulationConfig, workers: int = 1, shard_size: Optional[int] = None) -> SimulationReport:
    """Run ``cfg.replications`` independent trials and aggregate.

    With ``workers > 1`` the replications are split into shards and run in
    separate processes; the report is identical to the serial one.
    """
    R = cfg.replications
    if workers <= 1 and shard_size is None:
        return summarize(cfg, run_shard(cfg, 0, R))
    size = shard_size or max(1, math.ceil(R / workers))
    bounds = [(a, min(a + size, R)) for a in range(0, R, size)]
    if workers <= 1:
        shards = [run_shard(cfg, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            shards = list(ex.map(run_shard, [cfg] * len(bounds), *zip(*bounds)))
    return summarize(cfg, merge_shards(shards))


def mean_r2(cfg: SimulationConfig, replications: Optional[int] = None) -> float:
    reps = replications or cfg.replications
    return float(np.mean([_r2(generate_dataset(cfg, i)) for i in range(reps)]))


def calibrate_noise(
    cfg: SimulationConfig,
    target_r2: float = 0.75,
    replications: int = 200,
    bracket: tuple = (1e-3, 1e3),
) -> float:
    """Noise sd at which the mean combined R^2 equals ``target_r2``.

    The same replication seeds are used for every candidate, so the mean
    R^2 is a smooth decreasing function of the noise sd and a bracketing
    root finder applies.
    """
    if not 0 < target_r2 < 1:
        raise ValueError("target_r2 must lie in (0, 1)")

    def gap(sd):
        return mean_r2(replace(cfg, noise_sd=sd), replications) - target_r2

    return float(optimize.brentq(gap, *bracket, xtol=1e-6))


@dataclass(frozen=True)
class SweepRow:
    noise: float
    mean_r2: float
    se_ratio: float
    mean_se_regression: float
    mean_se_diff: float


def r2_sweep(cfg: SimulationConfig, noise_grid: Sequence[float], workers: int = 1) -> list:
    """Mean R^2 and ``mean SE(regression) / mean SE(diff)`` across noise levels.

    ``noise_grid`` holds noise sds. Every grid point reuses the master seed.
    Rows come back sorted by mean R^2.
    """
    grid = list(noise_grid)
    if not grid or any(not (g > 0) for g in grid):
        raise DataError("noise grid must be a nonempty list of positive values")
    rows = []
    for g in grid:
        c = replace(cfg, noise_sd=float(g), estimators=("diff_means", "regression"))
        rep = run_monte_carlo(c, workers=workers)
        sr, sd = rep.estimators["regression"].mean_se, rep.estimators["diff_means"].mean_se
        rows.append(SweepRow(float(g), rep.mean_r2, sr / sd, sr, sd))
    return sorted(rows, key=lambda r: r.mean_r2)


@dataclass(frozen=True)
class BootstrapInterval:
    low: float
    high: float
    point: float
    level: float
    replicates: int
    method: str
    redraws: int = 0


BOOTSTRAP_METHODS = {
    "diff_means": ate_diff_means,
    "regression": ate_regression,
    "regression_interacted": ate_regression_interacted,
    "known_mean": ate_known_mean,
}


def paired_bootstrap_ci(
    d: Dataset,
    method: str = "regression",
    b: int = 2000,
    level: float = 0.95,
    seed: int = 0,
    max_redraws: int = 100,
    **kwargs,
) -> BootstrapInterval:
    """Percentile interval from resampling (covariates, response) pairs.

    Units are resampled with replacement within each arm, keeping both arm
    sizes fixed. A resample whose design is rank deficient is redrawn; more
    than ``max_redraws`` redraws in total is an error.
    """
    if method not in BOOTSTRAP_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if b < 100:
        raise ValueError("need at least 100 bootstrap replicates")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    fn = BOOTSTRAP_METHODS[method]
    rng = np.random.default_rng(seed)
    t_idx = np.flatnonzero(d.w == 1)
    c_idx = np.flatnonzero(d.w == 0)
    stats_ = np.empty(b)
    redraws = 0
    k = 0
    while k < b:
        idx = np.r_[rng.choice(t_idx, t_idx.size), rng.choice(c_idx, c_idx.size)]
        try:
            stats_[k] = fn(d.subset(idx), **kwargs).point
        except (RankDeficientError, InsufficientDataError):
            redraws += 1
            if redraws > max_redraws:
                raise DataError(f"gave up after {redraws} rank-deficient bootstrap resamples")
            continue
        k += 1
    alpha = (1 - level) / 2
    lo, hi = np.quantile(stats_, [alpha, 1 - alpha])
    return BootstrapInterval(float(lo), float(hi), fn(d, **kwargs).point, level, b, method, redraws)


@dataclass(frozen=True)
class ErrorDecomposition:
    r1: float
    r2: float
    r3: float
    tau_hat: float
    tau: float

    @property
    def total(self) -> float:
        return self.r1 + self.r2 + self.r3


def decompose_error(d: Dataset, truth: PopulationParams) -> ErrorDecomposition:
    """Split ``tau_hat_regression - tau`` into residual, slope-error and slope-difference parts.

    Covariates are first shifted by the true mean so that the population
    covariate mean is zero; intercepts are shifted to match.
    """
    if truth.beta_t.shape != (d.p,):
        raise DataError(f"truth has {truth.beta_t.shape[0]} slopes, dataset has {d.p} covariates")
    mu = truth.mu_x
    bt, bc = truth.beta_t, truth.beta_c
    b0t = truth.beta0_t + mu @ bt
    b0c = truth.beta0_c + mu @ bc
    ds = d.with_covariates(d.X - mu, d.names)
    XT, yT = ds.arm(True)
    XC, yC = ds.arm(False)
    fT, fC = fit_arms(ds)
    pT, pC = d.n_t / d.n, d.n_c / d.n
    xt, xc = XT.mean(axis=0), XC.mean(axis=0)
    r1 = (yT.mean() - (b0t + xt @ bt)) - (yC.mean() - (b0c + xc @ bc))
    r2 = -(xt - xc) @ (pC * (fT.slopes - bt) + pT * (fC.slopes - bc))
    r3 = (pT * xt + pC * xc) @ (bt - bc)
    tau_hat = ate_regression(d).point
    return ErrorDecomposition(float(r1), float(r2), float(r3), tau_hat, b0t - b0c)
