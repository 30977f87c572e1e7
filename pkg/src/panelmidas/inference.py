"""Debiased inference for pooled panel fits.

The pipeline follows the usual debiased-LASSO recipe adapted to panels:
nodewise LASSO regressions approximate rows of the precision matrix of the
augmented design z_{i,t} = (1, x_{i,t}')'; the penalized estimate is
bias-corrected with the precision rows; a pooled HAC long-run variance over
per-entity score series feeds a chi-square Wald test that a whole coefficient
group is zero.

Conventions worth stating once: the nodewise residual variance is
sigma2_j = |Z_j - Z_{-j} mu|^2 / NT + lambda_j |mu|_1 with the penalty term
entering at coefficient 1 even though the nodewise objective carries
2 lambda_j; the asymmetry is deliberate and pinned by tests.  Wald statistics
are formed on the standardized design scale (the scale the precision matrix
and HAC variance live on); reported debiased coefficients are mapped back to
the original column scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import _kernels
from .errors import NearSingularDesignError, SingularCovarianceError
from .estimators import SgLassoFit, time_folds
from .solver import SolverConfig

KERNELS = ("parzen", "qs")


@dataclass(frozen=True)
class HacConfig:
    kernel: str
    bandwidth: float

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError("bandwidth must be a positive real")


@dataclass(frozen=True)
class NodewiseCv:
    """Time-blocked CV settings for the per-column nodewise penalties."""

    n_folds: int = 5
    n_lambda: int = 8
    lambda_ratio: float = 0.1

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be at least 1")
        if not 0.0 < self.lambda_ratio < 1.0:
            raise ValueError("lambda_ratio must lie in (0, 1)")


@dataclass(frozen=True)
class PrecisionEstimate:
    """Rows of the approximate precision matrix of the augmented design.

    ``theta_rows[r]`` approximates row ``indices[r]`` of the inverse of
    Z'Z/NT: entry 1/sigma2 at the row's own column and -mu_k/sigma2
    elsewhere.
    """

    theta_rows: np.ndarray
    sigma2: np.ndarray
    nodewise_lambdas: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_rows",
                           np.asarray(self.theta_rows, dtype=float))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float))
        object.__setattr__(self, "nodewise_lambdas",
                           np.asarray(self.nodewise_lambdas, dtype=float))
        object.__setattr__(self, "indices",
                           np.asarray(self.indices, dtype=np.int64))
        if not np.all(self.sigma2 > 0):
            raise ValueError("sigma2 entries must be positive")


@dataclass(frozen=True)
class InferenceReport:
    """Debiased group estimate with its Wald test."""

    group: str
    debiased: np.ndarray
    covariance: np.ndarray
    statistic: float
    df: int
    p_value: float
    hac: HacConfig
    indices: np.ndarray


def _lasso_gram_path(Gsub, csub, y2, n, grid, theta0, eta0, cfg):
    """gamma=1 path on a precomputed sub-Gram; singleton layout."""
    p = Gsub.shape[0]
    gptr = np.arange(p + 1, dtype=np.int64)
    gidx = np.arange(p, dtype=np.int64)
    free = np.empty(0, dtype=np.int64)
    return _kernels.path_gram_kernel(
        Gsub, csub, y2, n, grid, 1.0, gptr, gidx, free, theta0,
        cfg.max_iterations, cfg.tolerance, cfg.resolved_kkt_tolerance,
        eta0, cfg.step_shrink, cfg.sufficient_decrease, cfg.acceleration,
    )


def _nodewise_grid(cmax_over_n: float, rule: NodewiseCv) -> np.ndarray:
    from .solver import lambda_grid
    return lambda_grid(cmax_over_n, rule.n_lambda, rule.lambda_ratio)


def nodewise_precision(
    Zdesign: np.ndarray,
    target_rows,
    lambda_rule: Union[float, Sequence[float], NodewiseCv],
    n_entities: Optional[int] = None,
    n_periods: Optional[int] = None,
    solver_cfg: Optional[SolverConfig] = None,
) -> PrecisionEstimate:
    """Nodewise LASSO rows of the precision matrix of ``Zdesign``.

    Each target column j is regressed on all other columns with an l1
    penalty (no extra intercept: the augmented design already carries its
    constant column).  ``lambda_rule`` is a fixed penalty (scalar or one
    value per row) or a ``NodewiseCv``, in which case adjacent time blocks
    are held out exactly as in the main cross-validation; that requires
    ``n_entities``/``n_periods`` to locate the blocks in the stacked rows.

    The residual variance of row j is |Z_j - Z_{-j} mu|^2/NT plus
    lambda_j |mu|_1 at coefficient 1 (see the module docstring); rows with
    sigma2 <= 1e-12 raise ``NearSingularDesignError``.
    """
    Z = np.ascontiguousarray(Zdesign, dtype=float)
    if Z.ndim != 2:
        raise ValueError("Zdesign must be a 2-d array")
    nt, q = Z.shape
    idx = np.asarray(target_rows, dtype=np.int64).reshape(-1)
    if idx.size == 0 or np.any(idx < 0) or np.any(idx >= q):
        raise ValueError("target rows must be valid column indices of Zdesign")
    cfg = solver_cfg if solver_cfg is not None else SolverConfig()
    n = float(nt)

    G = Z.T @ Z
    sigma_max = _spectral_norm(G)

    if isinstance(lambda_rule, NodewiseCv):
        if n_entities is None or n_periods is None:
            raise ValueError("nodewise CV needs n_entities and n_periods")
        if n_entities * n_periods != nt:
            raise ValueError("n_entities * n_periods must equal the row count")
        lambdas = _nodewise_cv_lambdas(Z, idx, lambda_rule, n_entities,
                                       n_periods, G, sigma_max, cfg)
    else:
        arr = np.asarray(lambda_rule, dtype=float)
        if arr.ndim == 0:
            lambdas = np.full(idx.size, float(arr))
        elif arr.shape == (idx.size,):
            lambdas = arr.copy()
        else:
            raise ValueError("lambda_rule must be scalar, per-row, or NodewiseCv")
        if np.any(lambdas < 0):
            raise ValueError("nodewise penalties must be nonnegative")

    others = [np.concatenate([np.arange(j), np.arange(j + 1, q)]) for j in idx]
    theta_rows = np.zeros((idx.size, q))
    sigma2 = np.zeros(idx.size)
    for r, j in enumerate(idx):
        oth = others[r]
        Gsub = np.ascontiguousarray(G[np.ix_(oth, oth)])
        csub = np.ascontiguousarray(G[oth, j])
        y2 = float(G[j, j])
        grid = np.array([lambdas[r]])
        theta0 = np.zeros(q - 1)
        eta0 = n / sigma_max if sigma_max > 0 else 1.0
        thetas, _, _, _, _ = _lasso_gram_path(Gsub, csub, y2, n, grid,
                                              theta0, eta0, cfg)
        mu = thetas[0]
        rss = (y2 - 2.0 * float(csub @ mu) + float(mu @ (Gsub @ mu))) / n
        s2 = rss + lambdas[r] * float(np.sum(np.abs(mu)))
        if s2 <= 1e-12:
            raise NearSingularDesignError(
                f"nodewise residual variance {s2:.3e} at column {int(j)}; "
                f"design is numerically collinear"
            )
        sigma2[r] = s2
        theta_rows[r, j] = 1.0 / s2
        theta_rows[r, oth] = -mu / s2
    return PrecisionEstimate(theta_rows=theta_rows, sigma2=sigma2,
                             nodewise_lambdas=lambdas, indices=idx)


def _spectral_norm(G: np.ndarray) -> float:
    q = G.shape[0]
    if q == 0:
        return 0.0
    v = np.full(q, 1.0 / math.sqrt(q))
    sigma = 0.0
    for _ in range(12):
        w = G @ v
        sigma = float(np.linalg.norm(w))
        if sigma <= 0:
            return 0.0
        v = w / sigma
    return sigma


def _nodewise_cv_lambdas(Z, idx, rule: NodewiseCv, N, T, G, sigma_max, cfg):
    """Per-row penalties by held-out prediction error over time blocks.

    All fold quantities reduce to sub-Grams of the fold's rows, so no
    per-row design copies are made.  Ties go to the larger penalty.
    """
    nt, q = Z.shape
    folds = time_folds(T, rule.n_folds)
    grids = np.zeros((idx.size, rule.n_lambda))
    for r, j in enumerate(idx):
        cmax = float(np.max(np.abs(np.delete(G[:, j], j)))) / nt
        grids[r] = _nodewise_grid(cmax * (1.0 + 1e-12), rule)
    mse = np.zeros((idx.size, rule.n_lambda))
    for blk in folds:
        rows = (np.arange(N, dtype=np.int64)[:, None] * T + blk[None, :]).reshape(-1)
        Zte = Z[rows]
        Gte = Zte.T @ Zte
        Gtr = G - Gte
        n_tr = float(nt - rows.size)
        for r, j in enumerate(idx):
            oth = np.concatenate([np.arange(j), np.arange(j + 1, q)])
            Gsub = np.ascontiguousarray(Gtr[np.ix_(oth, oth)])
            csub = np.ascontiguousarray(Gtr[oth, j])
            y2 = float(Gtr[j, j])
            theta0 = np.zeros(q - 1)
            eta0 = n_tr / sigma_max if sigma_max > 0 else 1.0
            thetas, _, _, _, _ = _lasso_gram_path(Gsub, csub, y2, n_tr,
                                                  grids[r], theta0, eta0, cfg)
            Hsub = Gte[np.ix_(oth, oth)]
            hvec = Gte[oth, j]
            h0 = float(Gte[j, j])
            for a in range(rule.n_lambda):
                mu = thetas[a]
                sse = h0 - 2.0 * float(hvec @ mu) + float(mu @ (Hsub @ mu))
                mse[r, a] += sse / rows.size
    lambdas = np.zeros(idx.size)
    for r in range(idx.size):
        order = np.lexsort((-grids[r], mse[r]))
        lambdas[r] = grids[r][order[0]]
    return lambdas


def debias(fit: SgLassoFit, precision: PrecisionEstimate,
           Zdesign: np.ndarray) -> np.ndarray:
    """Bias-corrected coefficients for the precision rows, original scale.

    Computes rho_G + Theta_G Z'(y - Z rho) / NT on the scale the design was
    fitted on, then divides by the cumulative column scales so the output
    is comparable with ``fit.slopes`` (the intercept column's scale is 1).
    """
    prob = fit.problem
    Z = np.asarray(Zdesign, dtype=float)
    q = prob.p + 1
    if Z.shape != (prob.n_obs, q):
        raise ValueError(
            f"Zdesign has shape {Z.shape}, fit expects ({prob.n_obs}, {q})"
        )
    if precision.theta_rows.shape[1] != q:
        raise ValueError("precision rows do not match the design width")
    rho = np.concatenate([fit.intercepts, fit.standardized_slopes])
    correction = precision.theta_rows @ (Z.T @ fit.residuals) / prob.n_obs
    debiased_std = rho[precision.indices] + correction
    zscales = np.concatenate([[1.0], prob.column_scales])
    return debiased_std / zscales[precision.indices]


def kernel_weight(kernel: str, x: float) -> float:
    """HAC lag weight: Parzen or Quadratic Spectral, K(0)=1.

    Parzen: 1 - 6x^2 + 6|x|^3 on |x| <= 1/2, 2(1-|x|)^3 on 1/2 < |x| <= 1,
    zero beyond.  Quadratic Spectral: 3(sin z - z cos z)/z^3 with
    z = 6 pi x / 5, evaluated by series for small |x| to avoid cancellation.
    """
    if kernel not in KERNELS:
        raise ValueError(f"kernel must be one of {KERNELS}, got {kernel!r}")
    ax = abs(float(x))
    if kernel == "parzen":
        if ax <= 0.5:
            return 1.0 - 6.0 * ax * ax + 6.0 * ax ** 3
        if ax <= 1.0:
            return 2.0 * (1.0 - ax) ** 3
        return 0.0
    if ax < 1e-2:
        z2 = (1.2 * math.pi * ax) ** 2
        return 1.0 - z2 / 10.0 + z2 * z2 / 280.0 - z2 ** 3 / 15120.0
    z = 1.2 * math.pi * ax
    return 3.0 * (math.sin(z) - z * math.cos(z)) / z ** 3


def hac_lrv(residuals: np.ndarray, scores: np.ndarray,
            precision: PrecisionEstimate, hac: HacConfig) -> np.ndarray:
    """Pooled HAC long-run variance of the projected scores.

    residuals: (N, T) fitted residuals per entity; scores: (N, T, q) design
    rows z_{i,t}.  Per entity the lag-k autocovariance of
    s_{i,t} = Theta_G z_{i,t} u_{i,t} is averaged over t with a 1/T factor,
    weighted by the kernel at k/M_T, paired with its transpose at -k, and
    the result is averaged over entities in index order.
    """
    U = np.asarray(residuals, dtype=float)
    Zr = np.asarray(scores, dtype=float)
    if U.ndim != 2 or Zr.ndim != 3 or Zr.shape[:2] != U.shape:
        raise ValueError("residuals must be (N, T) and scores (N, T, q)")
    if Zr.shape[2] != precision.theta_rows.shape[1]:
        raise ValueError("scores width does not match precision rows")
    N, T = U.shape
    g = precision.theta_rows.shape[0]
    if hac.bandwidth >= T:
        warnings.warn(
            f"bandwidth {hac.bandwidth} is not below T={T}; every lag "
            f"receives weight", RuntimeWarning)
    if hac.kernel == "parzen":
        kmax = min(T - 1, int(math.ceil(hac.bandwidth)))
    else:
        kmax = T - 1
    weights = np.array([kernel_weight(hac.kernel, k / hac.bandwidth)
                        for k in range(kmax + 1)])
    out = np.zeros((g, g))
    for i in range(N):
        S = (Zr[i] @ precision.theta_rows.T) * U[i][:, None]
        acc = S.T @ S / T
        for k in range(1, kmax + 1):
            w = weights[k]
            if w == 0.0:
                continue
            gk = S[:T - k].T @ S[k:] / T
            acc += w * (gk + gk.T)
        out += acc
    out /= N
    return (out + out.T) / 2.0


def granger_test(fit: SgLassoFit, precision: PrecisionEstimate,
                 hac: HacConfig, group) -> InferenceReport:
    """Wald test that every coefficient in one penalty group is zero.

    ``group`` is a group label of the fit's problem or an explicit array of
    slope-column indices.  The statistic is NT d' Xi^{-1} d with d the
    debiased group estimate on the standardized scale and Xi the pooled HAC
    long-run variance; the reference distribution is chi-square with |G|
    degrees of freedom.
    """
    prob = fit.problem
    if prob.intercept_mode != "pooled":
        raise ValueError("debiased inference is defined for pooled fits only")
    if isinstance(group, str):
        try:
            k = prob.groups.labels.index(group)
        except ValueError:
            raise KeyError(f"no penalty group named {group!r}") from None
        cols = prob.groups.partition[k]
        label = group
    else:
        cols = np.asarray(group, dtype=np.int64).reshape(-1)
        label = ",".join(str(int(j)) for j in cols)
    zidx = cols + 1  # intercept column sits first in the augmented design
    pos = _locate(precision.indices, zidx)
    sub = PrecisionEstimate(
        theta_rows=precision.theta_rows[pos],
        sigma2=precision.sigma2[pos],
        nodewise_lambdas=precision.nodewise_lambdas[pos],
        indices=zidx,
    )
    Z = np.hstack([np.ones((prob.n_obs, 1)), prob.X])
    rho = np.concatenate([fit.intercepts, fit.standardized_slopes])
    corr = sub.theta_rows @ (Z.T @ fit.residuals) / prob.n_obs
    d_std = rho[zidx] + corr
    zscales = np.concatenate([[1.0], prob.column_scales])

    U = fit.residuals.reshape(prob.n_entities, prob.n_periods)
    Zr = Z.reshape(prob.n_entities, prob.n_periods, prob.p + 1)
    xi = hac_lrv(U, Zr, sub, hac)
    cond = np.linalg.cond(xi)
    if not np.isfinite(cond) or cond >= 1e12:
        raise SingularCovarianceError(
            f"HAC covariance for group {label!r} has condition number "
            f"{cond:.3e}"
        )
    stat = float(prob.n_obs) * float(d_std @ np.linalg.solve(xi, d_std))
    stat = max(stat, 0.0)
    df = int(zidx.size)
    return InferenceReport(
        group=label,
        debiased=d_std / zscales[zidx],
        covariance=xi,
        statistic=stat,
        df=df,
        p_value=float(stats.chi2.sf(stat, df)),
        hac=hac,
        indices=zidx,
    )


def _locate(have: np.ndarray, want: np.ndarray) -> np.ndarray:
    pos = np.zeros(want.size, dtype=np.int64)
    for r, j in enumerate(want):
        hits = np.flatnonzero(have == j)
        if hits.size == 0:
            raise ValueError(
                f"precision estimate has no row for design column {int(j)}"
            )
        pos[r] = hits[0]
    return pos
