"""Command-line entry point: fit, test, cv, and simulate subcommands.

Input panels arrive as long-format CSV with columns
``entity, period, subperiod, variable, value``: the response uses variable
name ``y`` with subperiod 1, covariate lag j (1 = most recent) uses
subperiod j.  Settings come from a JSON config file (``--config``) merged
over built-in defaults, with flat dotted overrides (``--set cv.n_folds=5``);
unknown keys are rejected.  Fit, test, and cv write JSON artifacts carrying
``schema_version``; simulate writes the experiment CSV plus a text table.

Exit codes: 0 success, 1 input or config error, 2 numerical
non-convergence (the artifact is still written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys

import numpy as np

from .design import add_response_lags, build_midas_design, build_umidas_design, standardize
from .dictionary import build_dictionary
from .errors import NearSingularDesignError, SchemaError, SingularCovarianceError
from .estimators import CvConfig, cross_validate, fit_fixed_effects, fit_pooled
from .inference import HacConfig, NodewiseCv, granger_test, nodewise_precision
from .simulate import DgpConfig, ExperimentGrid, run_experiment
from .solver import PenaltyConfig, SolverConfig

SCHEMA_VERSION = 1
ESTIMATORS = ("pooled-sgl", "fe-sgl", "lasso-umidas")

# default config doubles as the schema: every legal key appears here
DEFAULT_CONFIG = {
    "design": {"legendre_degree": 3, "response_lags": 0},
    "penalty": {"lambda": None, "gamma": 1.0},
    "solver": {"max_iterations": 10000, "tolerance": 1e-8,
               "kkt_tolerance": None},
    "cv": {"n_folds": 10, "n_lambda": 15, "lambda_ratio": 0.05,
           "gamma_grid": [0.0, 0.25, 0.5, 0.75, 1.0]},
    "nodewise": {"n_folds": 5, "n_lambda": 12, "lambda_ratio": 0.03},
    "test": {"targets": [], "kernels": ["parzen"],
             "bandwidths": [10.0, 20.0, 30.0]},
    "simulate": {
        "models": [["sgl-midas", "pooled"], ["lasso-umidas", "pooled"]],
        "kernels": ["parzen"],
        "bandwidths": [10.0, 20.0, 30.0],
        "weight_scales": [0.0, 0.2, 0.25, 1.0 / 3.0],
        "replications": 500,
        "level": 0.05,
        "legendre_degree": 3,
        "response_lags": 1,
        "dgp": {"n_entities": 30, "n_periods": 50, "n_covariates": 21,
                "m": 12, "stride": 3, "rho_y": 0.15, "rho_x": 0.7,
                "sigma2_u": 4.0, "intercept_range": [-4.0, 4.0],
                "relevant_covariate": 0, "beta_shape": [3.0, 3.0],
                "common_intercept": True, "hf_burnin": 200,
                "lf_burnin": 50},
    },
}


def _merge_config(dst: dict, src: dict, prefix: str = "") -> None:
    for key, val in src.items():
        if key not in dst:
            raise SchemaError(f"unknown config key: {prefix}{key}")
        if isinstance(dst[key], dict):
            if not isinstance(val, dict):
                raise SchemaError(f"config key {prefix}{key} must be a section")
            _merge_config(dst[key], val, f"{prefix}{key}.")
        else:
            if isinstance(val, dict):
                raise SchemaError(f"config key {prefix}{key} is not a section")
            dst[key] = val


def _apply_set(cfg: dict, expr: str) -> None:
    key, sep, raw = expr.partition("=")
    if not sep:
        raise SchemaError(f"--set needs key=value, got {expr!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings (kernel names, paths) pass through
    node = cfg
    parts = key.strip().split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise SchemaError(f"unknown config key: {key.strip()}")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise SchemaError(f"unknown config key: {key.strip()}")
    if isinstance(node[leaf], dict):
        if not isinstance(value, dict):
            raise SchemaError(f"config key {key.strip()} is a section; "
                              "give it a JSON object")
        _merge_config(node[leaf], value, f"{key.strip()}.")
    else:
        node[leaf] = value


def resolve_config(config_path, set_exprs) -> dict:
    """Defaults, then the config file, then --set overrides, in that order."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path is not None:
        with open(config_path) as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"config file {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise SchemaError("config file must hold a JSON object")
        _merge_config(cfg, loaded)
    for expr in set_exprs or ():
        _apply_set(cfg, expr)
    return cfg


def read_panel_csv(path):
    """Parse the long-format panel schema into a PanelDataset.

    Strict by design: every malformed, duplicate, or missing cell is an
    error naming the offending line or cell.  Entities are ordered
    lexicographically, periods numerically.
    """
    from .design import Covariate, PanelDataset

    cells = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"entity", "period", "subperiod", "variable", "value"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise SchemaError(
                f"{path}: expected columns {sorted(expected)}, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            line = reader.line_num
            try:
                ent = row["entity"].strip()
                per = int(row["period"])
                sub = int(row["subperiod"])
                var = row["variable"].strip()
                val = float(row["value"])
            except (TypeError, ValueError, AttributeError):
                raise SchemaError(f"{path} line {line}: malformed row {row!r}")
            if not ent or not var:
                raise SchemaError(f"{path} line {line}: empty entity or variable")
            if not np.isfinite(val):
                raise SchemaError(f"{path} line {line}: non-finite value")
            if sub < 1:
                raise SchemaError(f"{path} line {line}: subperiod must be >= 1")
            key = (var, ent, per, sub)
            if key in cells:
                raise SchemaError(f"{path} line {line}: duplicate cell {key}")
            cells[key] = val
    if not cells:
        raise SchemaError(f"{path}: no data rows")

    variables = sorted({k[0] for k in cells})
    if "y" not in variables:
        raise SchemaError(f"{path}: response variable 'y' missing")
    entities = sorted({k[1] for k in cells})
    periods = sorted({k[2] for k in cells})
    lags = {}
    for var in variables:
        subs = sorted({k[3] for k in cells if k[0] == var})
        m = subs[-1]
        if subs != list(range(1, m + 1)):
            raise SchemaError(f"{path}: variable {var!r} has gaps in subperiods")
        if var == "y" and m != 1:
            raise SchemaError(f"{path}: response must use subperiod 1 only")
        lags[var] = m

    def cell(var, ent, per, sub):
        try:
            return cells[(var, ent, per, sub)]
        except KeyError:
            raise SchemaError(
                f"{path}: missing cell variable={var} entity={ent} "
                f"period={per} subperiod={sub}"
            )

    y = np.array([[cell("y", e, p, 1) for p in periods] for e in entities])
    covs = []
    for var in variables:
        if var == "y":
            continue
        m = lags[var]
        arr = np.empty((len(entities), len(periods), m))
        for i, e in enumerate(entities):
            for t, p in enumerate(periods):
                for j in range(m):
                    arr[i, t, j] = cell(var, e, p, j + 1)
        covs.append(Covariate(name=var, values=arr))
    return PanelDataset(y=y, covariates=tuple(covs))


def _build_problem(data, estimator: str, design_cfg: dict):
    """Estimator-specific design, standardized to unit column RMS."""
    if design_cfg["response_lags"]:
        data = add_response_lags(data, int(design_cfg["response_lags"]))
    if estimator == "lasso-umidas":
        prob = build_umidas_design(data, intercept="pooled")
    else:
        L = int(design_cfg["legendre_degree"]) + 1
        dicts = [build_dictionary(c.lags, L) for c in data.covariates]
        mode = "fixed_effects" if estimator == "fe-sgl" else "pooled"
        prob = build_midas_design(data, dicts, intercept=mode)
    return standardize(prob)


def _solver_config(cfg: dict) -> SolverConfig:
    sol = cfg["solver"]
    return SolverConfig(max_iterations=int(sol["max_iterations"]),
                        tolerance=float(sol["tolerance"]),
                        kkt_tolerance=(None if sol["kkt_tolerance"] is None
                                       else float(sol["kkt_tolerance"])))


def _cv_config(cfg: dict, gamma_grid=None) -> CvConfig:
    sec = cfg["cv"]
    grid = tuple(gamma_grid) if gamma_grid is not None else tuple(sec["gamma_grid"])
    return CvConfig(n_folds=int(sec["n_folds"]), n_lambda=int(sec["n_lambda"]),
                    lambda_ratio=float(sec["lambda_ratio"]), gamma_grid=grid)


def _resolve_penalty(args, cfg, problem, solver_cfg):
    """Penalty from flags, then config, then CV; returns (lam, gamma, source)."""
    gamma_flag = getattr(args, "gamma", None)
    lam_flag = getattr(args, "lam", None)
    if args.estimator == "lasso-umidas":
        if gamma_flag is not None and gamma_flag != 1.0:
            raise SchemaError("lasso-umidas requires gamma=1")
        gamma = 1.0
    else:
        gamma = gamma_flag if gamma_flag is not None else float(cfg["penalty"]["gamma"])
    lam = lam_flag if lam_flag is not None else cfg["penalty"]["lambda"]
    if lam is not None:
        source = "flag" if lam_flag is not None else "config"
        return float(lam), float(gamma), source
    if args.estimator == "lasso-umidas":
        grid = (1.0,)
    elif gamma_flag is not None:
        grid = (float(gamma_flag),)
    else:
        grid = None
    cvcfg = _cv_config(cfg, grid)
    lam, gamma, _ = cross_validate(problem, cvcfg, solver_cfg)
    return float(lam), float(gamma), "cv"


def _fit_problem(problem, estimator, lam, gamma, solver_cfg):
    pen = PenaltyConfig(lam=lam, gamma=gamma, groups=problem.groups)
    if estimator == "fe-sgl":
        return fit_fixed_effects(problem, pen, solver_cfg)
    return fit_pooled(problem, pen, solver_cfg)


def _fit_artifact(fit, problem, estimator, lam, gamma, source) -> dict:
    res = fit.residuals
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "estimator": estimator,
        "penalty": {"lambda": float(lam), "gamma": float(gamma),
                    "source": source},
        "converged": bool(fit.diagnostics.converged),
        "diagnostics": {
            "iterations": int(fit.diagnostics.iterations),
            "objective": float(fit.diagnostics.objective),
            "kkt_residual": float(fit.diagnostics.kkt_residual),
            "step_size": float(fit.diagnostics.step_size),
        },
        "n_entities": int(problem.n_entities),
        "n_periods": int(problem.n_periods),
        "intercepts": [float(v) for v in fit.intercepts],
        "coefficients": [
            {"label": problem.column_labels[j],
             "owner": problem.column_owners[j],
             "value": float(fit.slopes[j])}
            for j in range(problem.p)
        ],
        "residuals": {"rms": float(np.sqrt(np.mean(res**2))),
                      "max_abs": float(np.max(np.abs(res)))},
    }


def _write_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_fit(args, cfg) -> int:
    data = read_panel_csv(args.input)
    solver_cfg = _solver_config(cfg)
    problem = _build_problem(data, args.estimator, cfg["design"])
    lam, gamma, source = _resolve_penalty(args, cfg, problem, solver_cfg)
    fit = _fit_problem(problem, args.estimator, lam, gamma, solver_cfg)
    _write_json(args.output, _fit_artifact(fit, problem, args.estimator,
                                           lam, gamma, source))
    return 0 if fit.diagnostics.converged else 2


def cmd_cv(args, cfg) -> int:
    data = read_panel_csv(args.input)
    solver_cfg = _solver_config(cfg)
    problem = _build_problem(data, args.estimator, cfg["design"])
    if args.estimator == "lasso-umidas":
        grid = (1.0,)
    elif getattr(args, "gamma", None) is not None:
        grid = (float(args.gamma),)
    else:
        grid = None
    lam, gamma, table = cross_validate(problem, _cv_config(cfg, grid), solver_cfg)
    _write_json(args.output, {
        "schema_version": SCHEMA_VERSION,
        "command": "cv",
        "estimator": args.estimator,
        "best_lambda": float(lam),
        "best_gamma": float(gamma),
        "table": [{"gamma": float(r["gamma"]), "lambda": float(r["lam"]),
                   "mse": float(r["mse"])} for r in table],
    })
    return 0


def cmd_test(args, cfg) -> int:
    if args.estimator == "fe-sgl":
        raise SchemaError("the Granger test needs a pooled-intercept fit")
    data = read_panel_csv(args.input)
    solver_cfg = _solver_config(cfg)
    problem = _build_problem(data, args.estimator, cfg["design"])
    lam, gamma, source = _resolve_penalty(args, cfg, problem, solver_cfg)
    fit = _fit_problem(problem, args.estimator, lam, gamma, solver_cfg)

    targets = list(cfg["test"]["targets"])
    if not targets:
        raise SchemaError("test.targets must name at least one covariate")
    cols = {}
    for name in targets:
        try:
            cols[name] = problem.columns_for(name)
        except KeyError:
            raise SchemaError(f"unknown covariate {name!r}")
    kernels = [args.kernel] if args.kernel else list(cfg["test"]["kernels"])
    bandwidths = ([float(args.bandwidth)] if args.bandwidth is not None
                  else [float(b) for b in cfg["test"]["bandwidths"]])

    Z = np.hstack([np.ones((problem.n_obs, 1)), problem.X])
    rows = np.unique(np.concatenate([c for c in cols.values()])) + 1
    nodecfg = cfg["nodewise"]
    precision = nodewise_precision(
        Z, rows,
        NodewiseCv(n_folds=int(nodecfg["n_folds"]),
                   n_lambda=int(nodecfg["n_lambda"]),
                   lambda_ratio=float(nodecfg["lambda_ratio"])),
        n_entities=problem.n_entities, n_periods=problem.n_periods,
        solver_cfg=solver_cfg)

    cells = []
    for name in targets:
        for kern in kernels:
            for M in bandwidths:
                base = {"target": name, "kernel": kern, "bandwidth": float(M)}
                try:
                    rep = granger_test(fit, precision,
                                       HacConfig(kernel=kern, bandwidth=M),
                                       cols[name])
                except SingularCovarianceError as exc:
                    # report the dead cell, keep testing the others
                    cells.append({**base, "error": str(exc)})
                    continue
                cells.append({**base,
                              "statistic": float(rep.statistic),
                              "df": int(rep.df),
                              "p_value": float(rep.p_value),
                              "debiased": {problem.column_labels[j]: float(v)
                                           for j, v in zip(cols[name],
                                                           rep.debiased)}})
    _write_json(args.output, {
        "schema_version": SCHEMA_VERSION,
        "command": "test",
        "estimator": args.estimator,
        "penalty": {"lambda": float(lam), "gamma": float(gamma),
                    "source": source},
        "converged": bool(fit.diagnostics.converged),
        "cells": cells,
    })
    return 0 if fit.diagnostics.converged else 2


def cmd_simulate(args, cfg) -> int:
    if args.seed is None:
        raise SchemaError("simulate requires --seed; no silent nondeterminism")
    sim = cfg["simulate"]
    dgp_sec = dict(sim["dgp"])
    dgp = DgpConfig(
        n_entities=int(dgp_sec["n_entities"]),
        n_periods=int(dgp_sec["n_periods"]),
        n_covariates=int(dgp_sec["n_covariates"]),
        m=int(dgp_sec["m"]), stride=int(dgp_sec["stride"]),
        rho_y=float(dgp_sec["rho_y"]), rho_x=float(dgp_sec["rho_x"]),
        sigma2_u=float(dgp_sec["sigma2_u"]),
        intercept_range=tuple(float(v) for v in dgp_sec["intercept_range"]),
        relevant_covariate=int(dgp_sec["relevant_covariate"]),
        beta_shape=tuple(float(v) for v in dgp_sec["beta_shape"]),
        common_intercept=bool(dgp_sec["common_intercept"]),
        hf_burnin=int(dgp_sec["hf_burnin"]),
        lf_burnin=int(dgp_sec["lf_burnin"]),
    )
    grid = ExperimentGrid(
        models=tuple((str(m), str(p)) for m, p in sim["models"]),
        kernels=tuple(str(k) for k in sim["kernels"]),
        bandwidths=tuple(float(b) for b in sim["bandwidths"]),
        weight_scales=tuple(float(a) for a in sim["weight_scales"]),
        replications=int(sim["replications"]),
        base_seed=int(args.seed),
        level=float(sim["level"]),
        dgp=dgp,
        legendre_degree=int(sim["legendre_degree"]),
        response_lags=int(sim["response_lags"]),
        cv=_cv_config(cfg),
        nodewise=NodewiseCv(n_folds=int(cfg["nodewise"]["n_folds"]),
                            n_lambda=int(cfg["nodewise"]["n_lambda"]),
                            lambda_ratio=float(cfg["nodewise"]["lambda_ratio"])),
        solver=_solver_config(cfg),
    )
    result = run_experiment(grid, threads=max(1, int(args.threads or 1)))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(result.to_csv())
    sys.stdout.write(result.to_text())
    return 0


class _Parser(argparse.ArgumentParser):
    """Route usage errors through SchemaError so exit codes stay 0/1/2."""

    def error(self, message):
        raise SchemaError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable")
    common.add_argument("--output", default=None, help="artifact path (default stdout)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes for simulate replications")

    model = _Parser(add_help=False)
    model.add_argument("--input", required=True, help="panel CSV")
    model.add_argument("--estimator", choices=ESTIMATORS, default="pooled-sgl")
    model.add_argument("--gamma", type=float, default=None,
                       help="relative l1 weight in [0, 1]")
    model.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="penalty level; omit to tune by CV")

    parser = _Parser(prog="panelmidas",
                     description="sparse-group LASSO panel regressions "
                                 "with mixed-frequency designs")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_fit = sub.add_parser("fit", parents=[common, model],
                           help="estimate one model, write a JSON artifact")
    p_fit.set_defaults(func=cmd_fit)

    p_cv = sub.add_parser("cv", parents=[common, model],
                          help="tune (lambda, gamma) by blocked cross-validation")
    p_cv.set_defaults(func=cmd_cv)

    p_test = sub.add_parser("test", parents=[common, model],
                            help="HAC Wald tests for covariate groups")
    p_test.add_argument("--kernel", choices=("parzen", "qs"), default=None)
    p_test.add_argument("--bandwidth", type=float, default=None)
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="Monte Carlo rejection-frequency study")
    p_sim.add_argument("--seed", type=int, default=None, required=False)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
        cfg = resolve_config(args.config, args.set)
        return args.func(args, cfg)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
