"""Panel sparse-group LASSO estimators and time-blocked cross-validation.

Three fitting routines share one return type: a pooled fit (single
unpenalized intercept), a fixed-effects fit (one unpenalized intercept per
entity, computed on within-transformed data by default), and an
unrestricted-lag LASSO fit.  ``cross_validate`` tunes (lambda, gamma) by
splitting the time axis of the panel into adjacent blocks, standardizing
each training set separately, and scoring held-out mean squared error.

Non-convergence of the underlying solver is surfaced through the
``diagnostics`` field of the fit, never raised; callers that need a hard
failure can check ``fit.diagnostics.converged``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .design import (DesignProblem, PanelDataset, build_umidas_design,
                     standardize, unstack, within_transform)
from .solver import (PenaltyConfig, SolverConfig, SolverResult, _kernel_layout,
                     _power_step, lambda_grid, lambda_max, solve)


@dataclass(frozen=True)
class SgLassoFit:
    """Fitted panel regression with its penalty and solver diagnostics.

    ``slopes`` are reported against the columns as originally built, i.e.
    the solver's standardized coefficients divided by the problem's
    cumulative ``column_scales``.  ``residuals`` refer to the problem's own
    response: ``yvec - fitted`` where fitted values combine the intercept
    term(s) with ``X @ (slopes * column_scales)``.
    """

    intercepts: np.ndarray
    slopes: np.ndarray
    penalty: PenaltyConfig
    residuals: np.ndarray
    diagnostics: SolverResult
    problem: DesignProblem

    @property
    def fitted_values(self) -> np.ndarray:
        return self.problem.yvec - self.residuals

    @property
    def standardized_slopes(self) -> np.ndarray:
        """Coefficients on the scale the solver actually worked on."""
        return self.slopes * self.problem.column_scales


@dataclass(frozen=True)
class CvConfig:
    """Grid and fold settings for time-blocked cross-validation."""

    n_folds: int = 10
    n_lambda: int = 15
    lambda_ratio: float = 0.05
    gamma_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    scoring: str = "mse"

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be at least 1")
        if not 0.0 < self.lambda_ratio < 1.0:
            raise ValueError("lambda_ratio must lie in (0, 1)")
        if len(self.gamma_grid) == 0:
            raise ValueError("gamma_grid must not be empty")
        if any(not 0.0 <= g <= 1.0 for g in self.gamma_grid):
            raise ValueError("gamma values must lie in [0, 1]")
        if self.scoring != "mse":
            raise ValueError("scoring must be 'mse'")
        object.__setattr__(self, "gamma_grid",
                           tuple(float(g) for g in self.gamma_grid))


def _expand_intercepts(intercepts: np.ndarray, problem: DesignProblem) -> np.ndarray:
    """Per-row intercept contribution for the problem's intercept mode."""
    if problem.intercept_mode == "none":
        return np.zeros(problem.n_obs)
    if problem.intercept_mode == "pooled":
        return np.full(problem.n_obs, float(intercepts[0]))
    return np.repeat(intercepts, problem.n_periods)


def _package_fit(problem, penalty, res, intercepts) -> SgLassoFit:
    fitted = problem.X @ res.slopes + _expand_intercepts(intercepts, problem)
    return SgLassoFit(
        intercepts=np.asarray(intercepts, dtype=float),
        slopes=res.slopes / problem.column_scales,
        penalty=penalty,
        residuals=problem.yvec - fitted,
        diagnostics=res,
        problem=problem,
    )


def fit_pooled(
    problem: DesignProblem,
    penalty: PenaltyConfig,
    solver_cfg: Optional[SolverConfig] = None,
) -> SgLassoFit:
    """Pooled panel fit: one intercept shared by every entity.

    The problem is fitted exactly as given; standardize beforehand if the
    penalty should act on unit-norm columns.  Slopes are mapped back to the
    original column scale in the returned fit.
    """
    if problem.intercept_mode != "pooled":
        raise ValueError(
            f"pooled fit needs intercept_mode 'pooled', got "
            f"{problem.intercept_mode!r}"
        )
    res = solve(problem, penalty, solver_cfg)
    return _package_fit(problem, penalty, res, res.intercepts)


def fit_fixed_effects(
    problem: DesignProblem,
    penalty: PenaltyConfig,
    solver_cfg: Optional[SolverConfig] = None,
    method: str = "within",
) -> SgLassoFit:
    """Fixed-effects panel fit: one unpenalized intercept per entity.

    ``method="within"`` (default) solves the entity-demeaned problem for
    the slopes and recovers each intercept as the entity mean of
    ``y - X @ slopes``; ``method="joint"`` optimizes intercepts and slopes
    together.  Both routes minimize the same objective.
    """
    if problem.intercept_mode != "fixed_effects":
        raise ValueError(
            f"fixed-effects fit needs intercept_mode 'fixed_effects', got "
            f"{problem.intercept_mode!r}"
        )
    if method not in ("within", "joint"):
        raise ValueError(f"method must be 'within' or 'joint', got {method!r}")
    if method == "joint":
        res = solve(problem, penalty, solver_cfg)
        return _package_fit(problem, penalty, res, res.intercepts)
    res = solve(within_transform(problem), penalty, solver_cfg)
    partial = problem.yvec - problem.X @ res.slopes
    alphas = unstack(partial, problem.n_entities, problem.n_periods).mean(axis=1)
    return _package_fit(problem, penalty, res, alphas)


def fit_lasso_umidas(
    data: PanelDataset,
    lam: float,
    solver_cfg: Optional[SolverConfig] = None,
) -> SgLassoFit:
    """Unrestricted-lag LASSO fit: every lag is its own penalized column.

    Builds the raw-lag design (each covariate contributes m_k columns,
    scaled by 1/m_k) and runs the pooled fit with gamma = 1, so the penalty
    is a plain l1 norm over singleton groups.
    """
    problem = build_umidas_design(data, intercept="pooled")
    penalty = PenaltyConfig(lam=lam, gamma=1.0, groups=problem.groups)
    return fit_pooled(problem, penalty, solver_cfg)


def time_folds(n_periods: int, n_folds: int):
    """Adjacent time blocks covering 0..n_periods-1, longest blocks first."""
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    if n_periods < n_folds:
        raise ValueError(
            f"{n_folds} folds need at least one period each, panel has "
            f"{n_periods}"
        )
    return [blk for blk in np.array_split(np.arange(n_periods), n_folds)]


def _fold_rows(fold: np.ndarray, n_entities: int, n_periods: int) -> np.ndarray:
    """Stacked row indices of the given periods, every entity."""
    offs = np.arange(n_entities, dtype=np.int64) * n_periods
    return (offs[:, None] + fold[None, :]).reshape(-1)


def _train_arrays(problem: DesignProblem, test_fold: np.ndarray):
    """Training X, y and per-entity training means for one fold.

    Returns (Xt, yt, xbar, ybar) where the means are over training periods
    of each entity (used by the fixed-effects transform and predictions);
    for pooled problems xbar/ybar hold grand means instead.
    """
    N, T = problem.n_entities, problem.n_periods
    keep = np.ones(T, dtype=bool)
    keep[test_fold] = False
    X3 = problem.X.reshape(N, T, problem.p)
    y2 = problem.yvec.reshape(N, T)
    Xt = X3[:, keep, :]
    yt = y2[:, keep]
    if problem.intercept_mode == "fixed_effects":
        xbar = Xt.mean(axis=1)
        ybar = yt.mean(axis=1)
    else:
        xbar = np.broadcast_to(Xt.reshape(-1, problem.p).mean(axis=0), (N, problem.p))
        ybar = np.broadcast_to(yt.reshape(-1).mean(), (N,))
    return Xt, yt, np.ascontiguousarray(xbar), np.ascontiguousarray(ybar)


def _grid_anchor(problem: DesignProblem) -> DesignProblem:
    """Full-sample problem transformed the way every training fold will be."""
    if problem.intercept_mode == "fixed_effects":
        return standardize(within_transform(problem))
    return standardize(problem)


def _grid_for(anchor: DesignProblem, gamma: float, cv: CvConfig) -> np.ndarray:
    pen = PenaltyConfig(lam=1.0, gamma=gamma, groups=anchor.groups)
    return lambda_grid(lambda_max(anchor, pen), cv.n_lambda, cv.lambda_ratio)


def cross_validate(
    problem: DesignProblem,
    cv: Optional[CvConfig] = None,
    solver_cfg: Optional[SolverConfig] = None,
):
    """Tune (lambda, gamma) by cross-validation over adjacent time blocks.

    Folds partition the period axis; a fold's block is held out for every
    entity simultaneously.  Each training set is within-transformed (for
    fixed-effects problems) and standardized on its own rows, then the
    full lambda path is solved per gamma with warm starts.  Held-out
    predictions reuse the training-period intercepts of each entity.  The
    lambda grids are anchored at the full-sample ``lambda_max`` per gamma.

    Returns ``(best_lambda, best_gamma, table)`` where ``table`` is a
    structured array with fields ``gamma``, ``lam``, ``mse`` (mean of the
    per-fold mean squared errors).  Ties are broken toward larger lambda,
    then larger gamma.
    """
    cv = cv if cv is not None else CvConfig()
    cfg = solver_cfg if solver_cfg is not None else SolverConfig()
    folds = time_folds(problem.n_periods, cv.n_folds)
    N, p = problem.n_entities, problem.p
    demean = problem.intercept_mode == "fixed_effects"
    pooled = problem.intercept_mode == "pooled"
    n_int = 1 if pooled else 0

    gammas = [float(g) for g in cv.gamma_grid]
    anchor = _grid_anchor(problem)
    grids = [_grid_for(anchor, g, cv) for g in gammas]
    sse = np.zeros((len(gammas), cv.n_lambda))
    fold_weight = 1.0 / len(folds)
    gptr, gidx, free_idx = _kernel_layout(problem.groups, n_int, False)

    for fold in folds:
        Xt, yt, xbar, ybar = _train_arrays(problem, fold)
        if demean:
            Xt = Xt - xbar[:, None, :]
            yt = yt - ybar[:, None]
        Xt = Xt.reshape(-1, p)
        yt = yt.reshape(-1)
        norms = np.sqrt(np.mean(Xt**2, axis=0))
        dead = np.flatnonzero(norms == 0.0)
        if dead.size:
            names = ", ".join(problem.column_labels[j] for j in dead[:5])
            raise ValueError(f"zero-norm training column(s) in a fold: {names}")
        Xt = Xt / norms
        Z = np.hstack([np.ones((Xt.shape[0], 1)), Xt]) if pooled else Xt
        G = Z.T @ Z
        c = Z.T @ yt
        y2 = float(yt @ yt)
        n_tr = float(yt.size)
        eta0 = (cfg.initial_step if cfg.initial_step is not None
                else _power_step(G, n_tr))
        rows_te = _fold_rows(fold, N, problem.n_periods)
        X_te = problem.X[rows_te]
        y_te = problem.yvec[rows_te]
        ent_te = np.repeat(np.arange(N), fold.size)
        for k, gamma in enumerate(gammas):
            theta0 = np.zeros(Z.shape[1])
            if pooled:
                theta0[0] = yt.mean()
            thetas, _, _, _, _ = _kernels.path_gram_kernel(
                G, c, y2, n_tr, grids[k], gamma, gptr, gidx, free_idx, theta0,
                cfg.max_iterations, cfg.tolerance, cfg.resolved_kkt_tolerance,
                eta0, cfg.step_shrink, cfg.sufficient_decrease,
                cfg.acceleration,
            )
            for a in range(cv.n_lambda):
                beta = thetas[a][n_int:] / norms
                pred = X_te @ beta
                if pooled:
                    pred = pred + thetas[a][0]
                elif demean:
                    # training-period effect of the test row's own entity
                    alpha = ybar - xbar @ beta
                    pred = pred + alpha[ent_te]
                err = y_te - pred
                sse[k, a] += fold_weight * float(err @ err) / err.size

    table = np.empty(len(gammas) * cv.n_lambda,
                     dtype=[("gamma", "f8"), ("lam", "f8"), ("mse", "f8")])
    pos = 0
    for k, gamma in enumerate(gammas):
        for a in range(cv.n_lambda):
            table[pos] = (gamma, grids[k][a], sse[k, a])
            pos += 1
    order = np.lexsort((-table["gamma"], -table["lam"], table["mse"]))
    best = table[order[0]]
    return float(best["lam"]), float(best["gamma"]), table
