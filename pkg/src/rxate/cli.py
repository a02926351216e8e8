"""Covariate-adjusted ATE estimation from the command line.

Exit codes: 0 success, 1 usage error, 2 data or numerical error. Errors are
printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import secrets
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .design import (
    PropensitySpec,
    StratifiedDataset,
    ate_ipw_regression,
    ate_post_stratified,
    ate_stratified_naive,
)
from .estimators import (
    ate_diff_means,
    ate_known_mean,
    ate_regression,
    ate_regression_interacted,
)
from .io import SCHEMA_VERSION, ColumnSpec, Report, dumps, file_digest, load_csv, load_nsw
from .oracle import PopulationParams, r2_threshold, var_diff, var_regression, variance_gap
from .regression import DataError
from .simulation import (
    SIM_ESTIMATORS,
    SimulationError,
    calibrate_noise,
    paired_bootstrap_ci,
    paper_config,
    r2_sweep,
    run_monte_carlo,
)

FIT_METHODS = ("diff", "reg", "interacted", "known-mean", "ipw", "stratified", "post-stratified")
BOOT_METHODS = {"diff": "diff_means", "reg": "regression", "interacted": "regression_interacted"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix(text: str) -> np.ndarray:
    rows = [_floats(r) for r in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise UsageError("matrix rows must have equal length")
    return np.array(rows)


def _names(values) -> tuple:
    out = []
    for v in values or []:
        out += [s.strip() for s in v.split(",") if s.strip()]
    return tuple(out)


def _seed(args) -> int:
    return args.seed if args.seed is not None else secrets.randbits(64)


def _provenance(digest=None, seed=None) -> dict:
    return {"input_digest": digest, "seed": seed, "tool_version": __version__}


def _report(est, level: float, provenance: dict) -> Report:
    if math.isfinite(est.se):
        lo, hi = est.ci(level)
    else:
        lo = hi = float("nan")
    return Report(
        method=est.method,
        point=est.point,
        se=est.se,
        ci_low=lo,
        ci_high=hi,
        n_t=est.n_t,
        n_c=est.n_c,
        r_squared_combined=est.diagnostics.get("r_squared_combined"),
        warnings=est.warnings,
        provenance=provenance,
    )


def _emit_reports(reports, fmt: str, out):
    if fmt == "json":
        payload = asdict(reports[0]) if len(reports) == 1 else [asdict(r) for r in reports]
        out.write(dumps(payload))
        return
    buf = _io.StringIO()
    cols = ["method", "point", "se", "ci_low", "ci_high", "n_t", "n_c", "r_squared_combined"]
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in reports:
        wr.writerow([_fmt(getattr(r, c)) for c in cols])
    out.write(buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return "" if v is None else str(v)


def cmd_fit(args, out):
    m = args.method
    covs = _names(args.covariates)
    if m in ("stratified", "post-stratified"):
        if not args.stratum:
            raise UsageError(f"--method {m} requires --stratum")
        if covs:
            raise UsageError(f"--method {m} does not take --covariates")
    elif args.stratum:
        raise UsageError(f"--stratum only applies to stratified methods, not {m}")
    if m == "known-mean" and args.mu is None:
        raise UsageError("--method known-mean requires --mu")
    if m != "known-mean" and args.mu is not None:
        raise UsageError("--mu only applies to --method known-mean")
    if m == "ipw" and args.propensity is None and args.propensity_const is None:
        raise UsageError("--method ipw requires --propensity or --propensity-const")
    if args.propensity and args.propensity_const is not None:
        raise UsageError("give either --propensity or --propensity-const, not both")
    if m != "ipw" and (args.propensity or args.propensity_const is not None):
        raise UsageError("propensities only apply to --method ipw")

    spec = ColumnSpec(args.response, args.treatment, covs, args.stratum, args.propensity)
    data = load_csv(args.csv, spec)
    if m == "diff":
        est = ate_diff_means(data)
    elif m == "reg":
        est = ate_regression(data)
    elif m == "interacted":
        est = ate_regression_interacted(data)
    elif m == "known-mean":
        est = ate_known_mean(data, _floats(args.mu))
    elif m == "ipw":
        ps = PropensitySpec(args.propensity_const) if args.propensity_const is not None else None
        est = ate_ipw_regression(data, ps, mode=args.ipw_mode)
    elif m == "stratified":
        est = ate_stratified_naive(data)
    else:
        est = ate_post_stratified(data)
    _emit_reports([_report(est, args.level, _provenance(file_digest(args.csv)))], args.format, out)


def cmd_bootstrap(args, out):
    if bool(args.csv) == bool(args.nsw):
        raise UsageError("give exactly one of --csv or --nsw")
    if args.nsw:
        nsw = load_nsw()
        d, digest = nsw.dataset, nsw.digest
    else:
        d = load_csv(args.csv, ColumnSpec(args.response, args.treatment, _names(args.covariates)))
        if isinstance(d, StratifiedDataset):
            raise UsageError("bootstrap does not support stratified input")
        digest = file_digest(args.csv)
    seed = _seed(args)
    iv = paired_bootstrap_ci(d, BOOT_METHODS[args.method], b=args.reps, level=args.level, seed=seed)
    out.write(
        dumps(
            {
                "schema": SCHEMA_VERSION,
                "method": iv.method,
                "interval": "percentile",
                "point": iv.point,
                "ci_low": iv.low,
                "ci_high": iv.high,
                "level": iv.level,
                "replicates": iv.replicates,
                "redraws": iv.redraws,
                "n_t": d.n_t,
                "n_c": d.n_c,
                "provenance": _provenance(digest, seed),
            }
        )
    )


def cmd_oracle(args, out):
    if args.quantity == "r2-threshold":
        if args.n is None or args.p is None:
            raise UsageError("r2-threshold requires --n and --p")
        value = r2_threshold(args.n, args.p)
    else:
        need = ("beta_t", "beta_c", "sigma_x", "n_t", "n_c")
        missing = [k for k in need if getattr(args, k) is None]
        if missing:
            raise UsageError("missing " + ", ".join("--" + k.replace("_", "-") for k in missing))
        params = PopulationParams(
            beta_t=_floats(args.beta_t),
            beta_c=_floats(args.beta_c),
            sigma2_t=args.sigma2_t,
            sigma2_c=args.sigma2_c,
            varf_t=args.varf_t,
            varf_c=args.varf_c,
            sigma_x=_matrix(args.sigma_x),
            n_t=args.n_t,
            n_c=args.n_c,
        )
        fn = {"var-diff": var_diff, "var-reg": var_regression, "gap": variance_gap}[args.quantity]
        value = fn(params)
    out.write(dumps({"schema": SCHEMA_VERSION, "quantity": args.quantity, "value": value}))


def _sim_config(args, seed):
    if args.noise_sd is not None and args.noise_var is not None:
        raise UsageError("give either --noise-sd or --noise-var, not both")
    est = _names(args.estimators) or ("diff_means", "regression")
    bad = set(est) - set(SIM_ESTIMATORS)
    if bad:
        raise UsageError(f"unknown estimators {sorted(bad)}; choose from {list(SIM_ESTIMATORS)}")
    if args.noise_var is not None:
        noise, conv = args.noise_var, "variance"
    else:
        noise, conv = args.noise_sd, "sd"
    cfg = paper_config(
        noise=noise,
        noise_convention=conv,
        gamma_param=args.gamma_param,
        n_t=args.n_t,
        n_c=args.n_c,
        replications=args.reps,
        seed=seed,
        estimators=est,
        level=args.level,
    )
    if getattr(args, "calibrate_r2", None) is not None:
        if noise is not None:
            raise UsageError("--calibrate-r2 cannot be combined with an explicit noise level")
        sd = calibrate_noise(cfg, args.calibrate_r2, replications=min(args.reps, 2000))
        cfg = paper_config(noise=sd, gamma_param=args.gamma_param, n_t=args.n_t, n_c=args.n_c,
                           replications=args.reps, seed=seed, estimators=est, level=args.level)
    return cfg


def cmd_simulate(args, out):
    seed = _seed(args)
    cfg = _sim_config(args, seed)
    rep = run_monte_carlo(cfg, workers=args.workers)
    payload = {"schema": SCHEMA_VERSION, "dgp": cfg.dgp, "n_t": cfg.n_t, "n_c": cfg.n_c}
    payload.update(rep.to_dict())
    payload["provenance"] = _provenance(None, seed)
    out.write(dumps(payload))


def cmd_sweep(args, out):
    seed = _seed(args)
    cfg = _sim_config(args, seed)
    rows = r2_sweep(cfg, _floats(args.grid), workers=args.workers)
    if args.format == "csv":
        buf = _io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["noise", "mean_r2", "se_ratio"])
        for r in rows:
            wr.writerow([repr(r.noise), repr(r.mean_r2), repr(r.se_ratio)])
        out.write(buf.getvalue())
    else:
        out.write(dumps({"schema": SCHEMA_VERSION, "rows": [asdict(r) for r in rows],
                         "provenance": _provenance(None, seed)}))


def cmd_nsw_demo(args, out):
    nsw = load_nsw(args.path, fetch=args.fetch)
    d = nsw.dataset
    diff = ate_diff_means(d)
    reg = ate_regression(d)
    prov = _provenance(nsw.digest)
    payload = {
        "schema": SCHEMA_VERSION,
        "source": nsw.source,
        "reports": [asdict(_report(e, args.level, prov)) for e in (diff, reg)],
        "se_gain": 1.0 - reg.se / diff.se,
        "r_squared_combined": reg.diagnostics["r_squared_combined"],
    }
    out.write(dumps(payload))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rxate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rxate {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp, covariates=True):
        sp.add_argument("--csv", help="input CSV with a header row")
        sp.add_argument("--response", default="y")
        sp.add_argument("--treatment", default="w")
        if covariates:
            sp.add_argument("--covariates", action="append", help="comma-separated column names")
        sp.add_argument("--level", type=float, default=0.95)

    f = sub.add_parser("fit", help="estimate the ATE from a CSV file")
    data_args(f)
    f.add_argument("--method", choices=FIT_METHODS, required=True)
    f.add_argument("--stratum")
    f.add_argument("--propensity", help="column of known assignment probabilities")
    f.add_argument("--propensity-const", type=float)
    f.add_argument("--ipw-mode", choices=("reweight", "wls"), default="reweight")
    f.add_argument("--mu", help="known covariate means, comma-separated")
    f.add_argument("--format", choices=("json", "csv"), default="json")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bootstrap", help="paired bootstrap percentile interval")
    data_args(b)
    b.add_argument("--nsw", action="store_true", help="use the vendored NSW sample")
    b.add_argument("--method", choices=tuple(BOOT_METHODS), default="reg")
    b.add_argument("--reps", type=int, default=2000)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bootstrap)

    o = sub.add_parser("oracle", help="population variances and the R^2 threshold")
    o.add_argument("quantity", choices=("var-diff", "var-reg", "gap", "r2-threshold"))
    o.add_argument("--beta-t")
    o.add_argument("--beta-c")
    o.add_argument("--sigma-x", help="covariance matrix, rows separated by ';'")
    o.add_argument("--sigma2-t", type=float, default=0.0)
    o.add_argument("--sigma2-c", type=float, default=0.0)
    o.add_argument("--varf-t", type=float, default=0.0)
    o.add_argument("--varf-c", type=float, default=0.0)
    o.add_argument("--n-t", type=int)
    o.add_argument("--n-c", type=int)
    o.add_argument("--n", type=int)
    o.add_argument("--p", type=int)
    o.set_defaults(func=cmd_oracle)

    def sim_args(sp):
        sp.add_argument("--paper", action="store_true", help="lognormal/gamma design (the only built-in design)")
        sp.add_argument("--n-t", type=int, default=250)
        sp.add_argument("--n-c", type=int, default=250)
        sp.add_argument("--noise-sd", type=float)
        sp.add_argument("--noise-var", type=float)
        sp.add_argument("--gamma-param", choices=("rate", "scale"), default="rate")
        sp.add_argument("--reps", type=int, default=2000)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--estimators", action="append")
        sp.add_argument("--level", type=float, default=0.95)
        sp.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("simulate", help="Monte Carlo study of the estimators")
    sim_args(s)
    s.add_argument("--calibrate-r2", type=float, help="choose the noise sd hitting this mean R^2")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="mean R^2 against the SE ratio over a noise grid")
    sim_args(w)
    w.add_argument("--grid", required=True, help="comma-separated noise sds")
    w.add_argument("--format", choices=("csv", "json"), default="csv")
    w.set_defaults(func=cmd_sweep)

    n = sub.add_parser("nsw-demo", help="both estimators on the NSW sample")
    n.add_argument("--path", help="NSW file in the whitespace-delimited layout")
    n.add_argument("--fetch", action="store_true", help="download the published files")
    n.add_argument("--level", type=float, default=0.95)
    n.set_defaults(func=cmd_nsw_demo)
    return p


def _error(category: str, message: str, err) -> None:
    err.write(json.dumps({"schema": SCHEMA_VERSION, "error": {"category": category, "message": message}}) + "\n")


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        args.func(args, out)
    except UsageError as exc:
        _error("usage", str(exc), err)
        return 1
    except (DataError, SimulationError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        _error(type(exc).__name__, str(exc), err)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
