"""Monte Carlo study of rejection frequencies for the group Granger test.

One replication draws a balanced panel whose response loads on a single
high-frequency covariate through scaled Beta(3,3) weights, fits each
requested estimator with cross-validated penalties, and records whether the
Wald test on the relevant covariate's coefficient group rejects at the
nominal level for every kernel/bandwidth pair.  Frequencies over
replications estimate empirical size (weight scale 0) and power.

Common random numbers: within a replication every weight scale reuses the
same intercepts, covariate chains, and shocks, so the signal strength is
the only thing that moves.  Replication seeds are spawned from one base
seed and results are reduced in replication order, which makes the output
identical for any worker count.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import signal as sp_signal

from .design import (Covariate, PanelDataset, add_response_lags,
                     build_midas_design, build_umidas_design, standardize)
from .dictionary import beta_weights, build_dictionary
from .errors import NearSingularDesignError, SingularCovarianceError
from .estimators import CvConfig, cross_validate, fit_pooled
from .inference import HacConfig, NodewiseCv, granger_test, nodewise_precision
from .solver import PenaltyConfig, SolverConfig

MODELS = ("sgl-midas", "lasso-umidas")
POOLINGS = ("pooled", "individual")


@dataclass(frozen=True)
class DgpConfig:
    """Panel data-generating process settings.

    The response of entity i in low-frequency period t is

        y_{i,t} = alpha_i + rho_y y_{i,t-1}
                  + weight_scale * (1/m) sum_j w_j x_{i, relevant, t, j}
                  + u_{i,t},      u ~ N(0, sigma2_u),

    where w tabulates the Beta density of ``beta_shape`` over the m
    high-frequency lags recorded for period t.  Every covariate is an
    independent AR(1) chain with coefficient rho_x at the high frequency;
    the low-frequency clock advances ``stride`` high-frequency steps per
    period while each period records the m most recent values, so windows
    overlap when m > stride.  Intercepts are drawn per entity from
    ``intercept_range`` (one shared draw with ``common_intercept``).
    """

    n_entities: int = 30
    n_periods: int = 50
    n_covariates: int = 21
    m: int = 12
    stride: int = 3
    rho_y: float = 0.15
    rho_x: float = 0.7
    sigma2_u: float = 4.0
    intercept_range: tuple = (-4.0, 4.0)
    weight_scale: float = 1.0 / 3.0
    relevant_covariate: int = 0
    beta_shape: tuple = (3.0, 3.0)
    seed: object = 0
    common_intercept: bool = False
    hf_burnin: int = 200
    lf_burnin: int = 50

    def __post_init__(self):
        for name in ("n_entities", "n_periods", "n_covariates", "m", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not (abs(self.rho_y) < 1 and abs(self.rho_x) < 1):
            raise ValueError("autoregressive coefficients must have magnitude < 1")
        if self.sigma2_u <= 0:
            raise ValueError("sigma2_u must be positive")
        lo, hi = self.intercept_range
        if not lo <= hi:
            raise ValueError("intercept_range must be ordered")
        if self.weight_scale < 0:
            raise ValueError("weight_scale must be nonnegative")
        if not 0 <= self.relevant_covariate < self.n_covariates:
            raise ValueError("relevant_covariate must index a covariate")
        if self.hf_burnin < self.m:
            raise ValueError("hf_burnin must cover at least m steps")
        if self.lf_burnin < 1:
            raise ValueError("lf_burnin must be at least 1")


def simulate_panel(cfg: DgpConfig) -> PanelDataset:
    """Draw one balanced panel from the configured process.

    The random draws happen in a fixed order (intercepts, then all
    covariate innovations in one block, then response shocks), so two
    configs differing only in ``weight_scale`` share every draw and their
    responses differ only through the signal term.
    """
    rng = np.random.default_rng(cfg.seed)
    N, T, K, m, st = (cfg.n_entities, cfg.n_periods, cfg.n_covariates,
                      cfg.m, cfg.stride)
    total = cfg.lf_burnin + T
    lhf = cfg.hf_burnin + total * st
    lo, hi = cfg.intercept_range
    if cfg.common_intercept:
        alphas = np.full(N, rng.uniform(lo, hi))
    else:
        alphas = rng.uniform(lo, hi, size=N)
    eps = rng.standard_normal((N, K, lhf))
    u = math.sqrt(cfg.sigma2_u) * rng.standard_normal((N, total))

    x = sp_signal.lfilter([1.0], [1.0, -cfg.rho_x], eps, axis=2)
    ends = cfg.hf_burnin + (np.arange(total) + 1) * st - 1
    win = ends[:, None] - np.arange(m)[None, :]  # lag j is j steps back
    w = beta_weights(m, cfg.beta_shape[0], cfg.beta_shape[1])
    rel = x[:, cfg.relevant_covariate, :]
    sig = cfg.weight_scale * (rel[:, win] @ w) / m

    y = np.zeros((N, total))
    prev = np.zeros(N)
    for t in range(total):
        prev = alphas + cfg.rho_y * prev + sig[:, t] + u[:, t]
        y[:, t] = prev
    kept = win[cfg.lf_burnin:]
    covs = tuple(
        Covariate(name=f"x{k}", values=x[:, k, :][:, kept]) for k in range(K)
    )
    return PanelDataset(y=y[:, cfg.lf_burnin:], covariates=covs)


@dataclass(frozen=True)
class ExperimentGrid:
    """Cross of models, kernels, bandwidths, and signal scales to evaluate."""

    models: tuple = (("sgl-midas", "pooled"), ("lasso-umidas", "pooled"))
    kernels: tuple = ("parzen",)
    bandwidths: tuple = (10.0, 20.0, 30.0)
    weight_scales: tuple = (0.0, 0.2, 0.25, 1.0 / 3.0)
    replications: int = 500
    base_seed: int = 0
    level: float = 0.05
    dgp: DgpConfig = field(default_factory=DgpConfig)
    legendre_degree: int = 3
    response_lags: int = 1
    cv: CvConfig = field(default_factory=lambda: CvConfig(
        n_folds=10, n_lambda=15, lambda_ratio=0.05))
    nodewise: NodewiseCv = field(default_factory=lambda: NodewiseCv(
        n_folds=5, n_lambda=12, lambda_ratio=0.03))
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(
        tolerance=1e-6, kkt_tolerance=1e-5))

    def __post_init__(self):
        for model, pooling in self.models:
            if model not in MODELS or pooling not in POOLINGS:
                raise ValueError(
                    f"model cells must come from {MODELS} x {POOLINGS}, "
                    f"got ({model!r}, {pooling!r})"
                )
        if len(self.models) == 0 or len(self.kernels) == 0 \
                or len(self.bandwidths) == 0 or len(self.weight_scales) == 0:
            raise ValueError("grid axes must be non-empty")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.legendre_degree < 0:
            raise ValueError("legendre_degree must be nonnegative")
        if self.response_lags < 0:
            raise ValueError("response_lags must be nonnegative")

    def cell_keys(self):
        """Deterministic cell order: model block, then a, kernel, M_T."""
        keys = []
        for model, pooling in self.models:
            for a in self.weight_scales:
                for kern in self.kernels:
                    for M in self.bandwidths:
                        keys.append((model, pooling, float(a), kern, float(M)))
        return keys


CELL_DTYPE = np.dtype([
    ("model", "U16"), ("pooling", "U12"), ("weight_scale", "f8"),
    ("kernel", "U8"), ("bandwidth", "f8"), ("reject_freq", "f8"),
    ("mc_se", "f8"), ("n_reject", "i8"), ("n_success", "i8"),
    ("n_failures", "i8"), ("flagged", "?"),
])


@dataclass(frozen=True)
class ExperimentResult:
    """Per-cell rejection frequencies with Monte Carlo standard errors."""

    cells: np.ndarray
    replications: int
    base_seed: int
    level: float

    def to_csv(self) -> str:
        """Long format: one row per cell per statistic."""
        buf = io.StringIO()
        buf.write("model,pooling,weight_scale,kernel,bandwidth,statistic,value\n")
        for row in self.cells:
            head = (f"{row['model']},{row['pooling']},"
                    f"{row['weight_scale']:.10g},{row['kernel']},"
                    f"{row['bandwidth']:.10g}")
            buf.write(f"{head},reject_freq,{row['reject_freq']:.10g}\n")
            buf.write(f"{head},mc_se,{row['mc_se']:.10g}\n")
            buf.write(f"{head},n_failures,{int(row['n_failures'])}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        """Bandwidth-by-scale rejection table per model and kernel."""
        scales = sorted(set(float(v) for v in self.cells["weight_scale"]))
        lines = [f"rejection frequencies at level {self.level:g} "
                 f"({self.replications} replications, seed {self.base_seed})"]
        blocks = []
        for row in self.cells:
            key = (str(row["model"]), str(row["pooling"]), str(row["kernel"]))
            if key not in blocks:
                blocks.append(key)
        for model, pooling, kern in blocks:
            lines.append("")
            lines.append(f"{model}, {pooling}, kernel={kern}")
            header = "  M_T \\ a " + "".join(f"{a:>9.4g}" for a in scales)
            lines.append(header)
            sel = ((self.cells["model"] == model)
                   & (self.cells["pooling"] == pooling)
                   & (self.cells["kernel"] == kern))
            for M in sorted(set(float(v) for v in self.cells["bandwidth"][sel])):
                vals = []
                for a in scales:
                    pick = sel & (self.cells["bandwidth"] == M) \
                        & (self.cells["weight_scale"] == a)
                    if np.any(pick):
                        vals.append(f"{float(self.cells['reject_freq'][pick][0]):>9.3f}")
                    else:
                        vals.append(" " * 9)
                flag = "*" if np.any(self.cells["flagged"][sel
                        & (self.cells["bandwidth"] == M)]) else " "
                lines.append(f"  {M:>7.4g}{flag}" + "".join(vals))
        lines.append("")
        lines.append("* cell with more than 1% failed replications")
        return "\n".join(lines) + "\n"


def _first_entity(data: PanelDataset) -> PanelDataset:
    return PanelDataset(
        y=data.y[:1],
        covariates=tuple(Covariate(name=c.name, values=c.values[:1])
                         for c in data.covariates),
    )


def _fit_and_precision(grid: ExperimentGrid, data: PanelDataset, model: str):
    """CV-tuned pooled fit plus nodewise precision rows for the target group."""
    lagged = (add_response_lags(data, grid.response_lags)
              if grid.response_lags else data)
    if model == "sgl-midas":
        d = build_dictionary(grid.dgp.m, grid.legendre_degree + 1)
        prob = build_midas_design(lagged, d, intercept="pooled")
        cvcfg = grid.cv
    else:
        prob = build_umidas_design(lagged, intercept="pooled")
        cvcfg = replace(grid.cv, gamma_grid=(1.0,))
    prob = standardize(prob)
    lam, gamma, _ = cross_validate(prob, cvcfg, grid.solver)
    pen = PenaltyConfig(lam=lam, gamma=gamma, groups=prob.groups)
    fit = fit_pooled(prob, pen, grid.solver)
    cols = prob.columns_for(f"x{grid.dgp.relevant_covariate}")
    Z = np.hstack([np.ones((prob.n_obs, 1)), prob.X])
    prec = nodewise_precision(Z, cols + 1, grid.nodewise,
                              n_entities=prob.n_entities,
                              n_periods=prob.n_periods,
                              solver_cfg=grid.solver)
    return fit, prec, cols


def _run_replication(grid: ExperimentGrid, child_seed) -> np.ndarray:
    """One replication: int8 per cell, 1 reject / 0 accept / -1 failure."""
    keys = grid.cell_keys()
    where = {key: j for j, key in enumerate(keys)}
    out = np.full(len(keys), -1, dtype=np.int8)
    panels = {}
    for a in grid.weight_scales:
        # extra leading periods feed the response lags, so the estimation
        # sample keeps exactly n_periods observations per entity
        cfg = replace(grid.dgp, weight_scale=float(a), seed=child_seed,
                      n_periods=grid.dgp.n_periods + grid.response_lags)
        panels[float(a)] = simulate_panel(cfg)
    for model, pooling in grid.models:
        for a in grid.weight_scales:
            data = panels[float(a)]
            if pooling == "individual":
                data = _first_entity(data)
            try:
                fit, prec, cols = _fit_and_precision(grid, data, model)
            except (ValueError, NearSingularDesignError,
                    np.linalg.LinAlgError):
                continue
            if not fit.diagnostics.converged:
                continue
            for kern in grid.kernels:
                for M in grid.bandwidths:
                    idx = where[(model, pooling, float(a), kern, float(M))]
                    try:
                        rep = granger_test(fit, prec,
                                           HacConfig(kernel=kern, bandwidth=M),
                                           cols)
                        out[idx] = 1 if rep.p_value < grid.level else 0
                    except SingularCovarianceError:
                        out[idx] = -1
    return out


def run_experiment(grid: ExperimentGrid, threads: int = 1) -> ExperimentResult:
    """Monte Carlo rejection frequencies over the whole grid.

    Replication seeds are children of ``base_seed``; results are reduced in
    replication order, so any ``threads`` value produces the same table.
    Failed replications (non-convergence, singular covariance) are excluded
    from a cell's frequency but counted, and cells with more than 1%
    failures are flagged.
    """
    children = np.random.SeedSequence(grid.base_seed).spawn(grid.replications)
    if threads <= 1:
        rows = [_run_replication(grid, c) for c in children]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_replication, [grid] * len(children),
                                 children, chunksize=1))
    flat = np.stack(rows)  # (R, n_cells), replication order
    keys = grid.cell_keys()
    cells = np.zeros(len(keys), dtype=CELL_DTYPE)
    R = grid.replications
    for j, (model, pooling, a, kern, M) in enumerate(keys):
        col = flat[:, j]
        n_success = int(np.sum(col >= 0))
        n_reject = int(np.sum(col == 1))
        freq = n_reject / n_success if n_success else float("nan")
        se = (math.sqrt(freq * (1.0 - freq) / n_success)
              if n_success else float("nan"))
        n_fail = R - n_success
        cells[j] = (model, pooling, a, kern, M, freq, se, n_reject,
                    n_success, n_fail, n_fail > 0.01 * R)
    return ExperimentResult(cells=cells, replications=R,
                            base_seed=grid.base_seed, level=grid.level)
