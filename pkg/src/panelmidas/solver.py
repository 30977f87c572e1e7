"""Proximal-gradient solver for sparse-group penalized least squares.

Minimizes

    |y - Z theta|^2 / n  +  2 lambda Omega(b),
    Omega(b) = gamma |b|_1 + (1 - gamma) sum_G |b_G|_2,

where ``theta`` stacks unpenalized intercept coefficients (none, a single
pooled one, or one per entity) before the penalized slopes ``b``.  The
sparse-group proximal operator is exact (soft-threshold, then group
shrinkage), the step comes from a backtracking line search, and momentum
acceleration restarts on any objective increase.  A solve only reports
``converged=True`` once the relative objective change falls below
``tolerance`` and the KKT residual falls below the KKT tolerance.

Reductions over coordinates run in ascending index order and mat-vecs go
through the platform BLAS, so repeated solves on the same problem are
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from . import _kernels
from .design import DesignProblem, GroupStructure


@dataclass(frozen=True)
class PenaltyConfig:
    """Sparse-group penalty: strength ``lam``, mix ``gamma``, grouping.

    ``gamma=1`` is the plain LASSO, ``gamma=0`` the group LASSO.  Intercept
    coefficients are unpenalized unless ``penalize_intercept`` is set, which
    is only meaningful for a single pooled intercept (it then enters the
    penalty as its own singleton group).
    """

    lam: float
    gamma: float
    groups: GroupStructure
    penalize_intercept: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lambda must be finite and nonnegative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    def penalized_mask(self, n_intercepts: int) -> np.ndarray:
        """Boolean mask over the stacked coefficient vector."""
        mask = np.ones(n_intercepts + self.groups.p, dtype=bool)
        mask[:n_intercepts] = bool(self.penalize_intercept) and n_intercepts == 1
        return mask


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 10_000
    tolerance: float = 1e-8
    kkt_tolerance: Optional[float] = None  # default max(10 * tolerance, 1e-6)
    initial_step: Optional[float] = None   # default n / |Z|_F^2
    step_shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    acceleration: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.kkt_tolerance is not None and self.kkt_tolerance <= 0:
            raise ValueError("kkt_tolerance must be positive")
        if not 0.0 < self.step_shrink < 1.0:
            raise ValueError("step_shrink must lie in (0, 1)")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise ValueError("sufficient_decrease must lie in (0, 1)")
        if self.initial_step is not None and self.initial_step <= 0:
            raise ValueError("initial_step must be positive")

    @property
    def resolved_kkt_tolerance(self) -> float:
        if self.kkt_tolerance is not None:
            return self.kkt_tolerance
        return max(10.0 * self.tolerance, 1e-6)


@dataclass(frozen=True)
class SolverResult:
    """Stacked solution [intercepts..., slopes...] plus run diagnostics.

    ``objective`` is the full penalized value |y - Z theta|^2 / n +
    2 lambda Omega evaluated at the returned point.
    """

    coefficients: np.ndarray
    n_intercepts: int
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    step_size: float

    @property
    def intercepts(self) -> np.ndarray:
        return self.coefficients[:self.n_intercepts]

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[self.n_intercepts:]


def penalty_value(b, penalty: PenaltyConfig) -> float:
    """Omega(b) = gamma |b|_1 + (1-gamma) sum of group l2 norms."""
    b = np.asarray(b, dtype=float)
    if b.shape != (penalty.groups.p,):
        raise ValueError(
            f"coefficient vector has shape {b.shape}, groups cover {penalty.groups.p}"
        )
    l2 = sum(math.sqrt(float(np.sum(b[g] ** 2))) for g in penalty.groups.partition)
    return penalty.gamma * float(np.sum(np.abs(b))) + (1.0 - penalty.gamma) * l2


def prox_sg(v, eta_lambda: float, gamma: float, groups: GroupStructure) -> np.ndarray:
    """Exact prox of ``eta_lambda * (gamma l1 + (1-gamma) group l2)`` at v.

    Minimizes ``0.5 |z - v|^2 + eta_lambda * (gamma |z|_1 +
    (1-gamma) sum_G |z_G|_2)``; zeros are produced exactly.
    """
    if eta_lambda < 0:
        raise ValueError("threshold must be nonnegative")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    out = np.array(v, dtype=float, copy=True)
    if out.shape != (groups.p,):
        raise ValueError(f"vector of length {out.size} does not match group cover")
    ptr, idx = groups.flat_indices()
    _kernels.prox_sg_kernel(out, float(eta_lambda), float(gamma), ptr, idx)
    return out


def _intercept_block(problem: DesignProblem) -> np.ndarray:
    if problem.intercept_mode == "none":
        return np.empty((problem.n_obs, 0))
    if problem.intercept_mode == "pooled":
        return np.ones((problem.n_obs, 1))
    return np.kron(np.eye(problem.n_entities), np.ones((problem.n_periods, 1)))


def _kernel_layout(groups: GroupStructure, n_intercepts: int, penalize_intercept: bool):
    """(gptr, gidx, free_idx) over the stacked coefficient vector."""
    ptr, idx = groups.flat_indices()
    idx = idx + n_intercepts
    if penalize_intercept:
        if n_intercepts != 1:
            raise ValueError(
                "penalize_intercept requires exactly one pooled intercept"
            )
        ptr = np.concatenate([[0], ptr + 1]).astype(np.int64)
        idx = np.concatenate([[0], idx]).astype(np.int64)
        free = np.empty(0, dtype=np.int64)
    else:
        free = np.arange(n_intercepts, dtype=np.int64)
    return ptr, idx, free


def _default_step(G: np.ndarray, n: float) -> float:
    tr = float(np.trace(G))
    return n / tr if tr > 0 else 1.0


def _power_step(G: np.ndarray, n: float) -> float:
    """n / |G|_2 via a few power iterations; backtracking absorbs the slack."""
    q = G.shape[0]
    if q == 0:
        return 1.0
    v = np.full(q, 1.0 / math.sqrt(q))
    sigma = 0.0
    for _ in range(12):
        w = G @ v
        sigma = float(np.linalg.norm(w))
        if sigma <= 0:
            return 1.0
        v = w / sigma
    return n / sigma


def solve(
    problem: DesignProblem,
    penalty: PenaltyConfig,
    config: Optional[SolverConfig] = None,
    warm_start=None,
) -> SolverResult:
    """Solve the penalized problem; see the module docstring for the objective.

    ``warm_start`` is a full stacked coefficient vector.  Non-convergence is
    reported through ``converged=False``, never raised.
    """
    cfg = config if config is not None else SolverConfig()
    if penalty.groups.p != problem.p:
        raise ValueError("penalty groups do not match the design columns")
    B = _intercept_block(problem)
    n_int = B.shape[1]
    Z = np.hstack([B, problem.X]) if n_int else problem.X
    q = Z.shape[1]
    G = Z.T @ Z
    c = Z.T @ problem.yvec
    y2 = float(problem.yvec @ problem.yvec)
    n = float(problem.n_obs)
    gptr, gidx, free_idx = _kernel_layout(problem.groups, n_int,
                                          penalty.penalize_intercept)
    if warm_start is None:
        theta = np.zeros(q)
        if n_int and not penalty.penalize_intercept:
            theta[:n_int] = _zero_slope_intercepts(problem)
    else:
        theta = np.array(warm_start, dtype=float, copy=True)
        if theta.shape != (q,):
            raise ValueError(f"warm start has shape {theta.shape}, expected ({q},)")
    eta0 = cfg.initial_step if cfg.initial_step is not None else _default_step(G, n)
    obj, iters, conv, kkt, eta = _kernels.solve_gram_kernel(
        G, c, y2, n, float(penalty.lam), float(penalty.gamma), gptr, gidx,
        free_idx, theta, cfg.max_iterations, cfg.tolerance,
        cfg.resolved_kkt_tolerance, eta0, cfg.step_shrink,
        cfg.sufficient_decrease, cfg.acceleration,
    )
    return SolverResult(
        coefficients=theta, n_intercepts=n_int, objective=float(obj),
        iterations=int(iters), converged=bool(conv), kkt_residual=float(kkt),
        step_size=float(eta),
    )


def _soft(u: np.ndarray, t: float) -> np.ndarray:
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def _group_threshold(u: np.ndarray, gamma: float) -> float:
    """Smallest lam with |soft(u, gamma lam)|_2 <= (1-gamma) lam."""
    top = float(np.max(np.abs(u))) if u.size else 0.0
    if top == 0.0:
        return 0.0
    if gamma >= 1.0:
        return top
    if gamma <= 0.0:
        return float(np.linalg.norm(u))
    hi = math.sqrt(u.size) * top

    def h(lam):
        return float(np.linalg.norm(_soft(u, gamma * lam))) - (1.0 - gamma) * lam

    if h(hi) > 0:  # guard against rounding at the bracket edge
        hi *= 1.0 + 1e-12
    return float(optimize.brentq(h, 0.0, hi, xtol=1e-15 * max(hi, 1.0),
                                 rtol=8.9e-16))


def _zero_slope_intercepts(problem: DesignProblem) -> np.ndarray:
    """Normal-equation intercepts of the b=0 problem (means of y)."""
    if problem.intercept_mode == "pooled":
        return np.array([problem.yvec.mean()])
    if problem.intercept_mode == "fixed_effects":
        return problem.yvec.reshape(problem.n_entities,
                                    problem.n_periods).mean(axis=1)
    return np.empty(0)


def lambda_max(problem: DesignProblem, penalty: PenaltyConfig) -> float:
    """Smallest lambda at which every penalized coefficient is exactly zero.

    Unpenalized intercepts are partialled out first (their normal equations
    at b=0 just remove means), then the zero solution is optimal once
    lambda dominates the groupwise dual norm of Z'(residual)/n.  The value
    is rounded up by a relative 1e-12 so that the all-zero solution lies
    strictly inside the optimality region despite floating-point noise.
    """
    n = float(problem.n_obs)
    y = problem.yvec
    if penalty.penalize_intercept:
        if problem.intercept_mode != "pooled":
            raise ValueError("penalize_intercept requires a pooled intercept")
        u_int = np.array([float(np.sum(y)) / n])
        u = problem.X.T @ y / n
        best = _group_threshold(u_int, penalty.gamma)
        for g in penalty.groups.partition:
            best = max(best, _group_threshold(u[g], penalty.gamma))
        return best * (1.0 + 1e-12)
    if problem.intercept_mode == "pooled":
        r = y - y.mean()
    elif problem.intercept_mode == "fixed_effects":
        ym = y.reshape(problem.n_entities, problem.n_periods)
        r = (ym - ym.mean(axis=1, keepdims=True)).reshape(-1)
    else:
        r = y
    u = problem.X.T @ r / n
    best = 0.0
    for g in penalty.groups.partition:
        best = max(best, _group_threshold(u[g], penalty.gamma))
    return best * (1.0 + 1e-12)


def lambda_grid(lmax: float, n_lambda: int, ratio: float) -> np.ndarray:
    """Descending geometric grid from lmax to ratio * lmax."""
    if n_lambda < 1:
        raise ValueError("n_lambda must be at least 1")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    if lmax <= 0:
        return np.zeros(n_lambda)
    return lmax * ratio ** (np.arange(n_lambda) / max(n_lambda - 1, 1))


def lambda_path(
    problem: DesignProblem,
    penalty_template: PenaltyConfig,
    n_lambda: int = 20,
    ratio: float = 0.01,
    config: Optional[SolverConfig] = None,
):
    """Warm-started solves on the descending grid from ``lambda_max``.

    Returns a list of (lambda, SolverResult) pairs; ``penalty_template.lam``
    is ignored.
    """
    cfg = config if config is not None else SolverConfig()
    grid = lambda_grid(lambda_max(problem, penalty_template), n_lambda, ratio)
    B = _intercept_block(problem)
    n_int = B.shape[1]
    Z = np.hstack([B, problem.X]) if n_int else problem.X
    G = Z.T @ Z
    c = Z.T @ problem.yvec
    y2 = float(problem.yvec @ problem.yvec)
    n = float(problem.n_obs)
    gptr, gidx, free_idx = _kernel_layout(problem.groups, n_int,
                                          penalty_template.penalize_intercept)
    eta0 = cfg.initial_step if cfg.initial_step is not None else _default_step(G, n)
    theta0 = np.zeros(Z.shape[1])
    if n_int and not penalty_template.penalize_intercept:
        theta0[:n_int] = _zero_slope_intercepts(problem)
    thetas, objs, its, convs, kkts = _kernels.path_gram_kernel(
        G, c, y2, n, grid, float(penalty_template.gamma), gptr, gidx, free_idx,
        theta0, cfg.max_iterations, cfg.tolerance,
        cfg.resolved_kkt_tolerance, eta0, cfg.step_shrink,
        cfg.sufficient_decrease, cfg.acceleration,
    )
    out = []
    for k, lam in enumerate(grid):
        out.append((float(lam), SolverResult(
            coefficients=thetas[k], n_intercepts=n_int, objective=float(objs[k]),
            iterations=int(its[k]), converged=bool(convs[k]),
            kkt_residual=float(kkts[k]), step_size=float("nan"),
        )))
    return out
