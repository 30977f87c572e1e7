"""Panel containers and design-matrix assembly for mixed-frequency regressions.

Observations are stacked entity-major: the row for entity ``i`` and
low-frequency period ``t`` (both zero-based) is ``i * T + t``.  A design
problem carries its grouping structure and intercept handling with it so
that solvers and estimators never have to re-derive either.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .dictionary import MidasDictionary

INTERCEPT_MODES = ("pooled", "fixed_effects", "none")


@dataclass(frozen=True)
class Covariate:
    """One high-frequency covariate observed over the panel.

    ``values[i, t, j]`` is the covariate ``j`` high-frequency steps before
    the end of low-frequency period ``t``, so ``j = 0`` is the most recent
    sub-period inside ``t`` and larger ``j`` reaches further back.
    """

    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError(f"covariate {self.name!r} needs (entities, periods, lags)")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"covariate {self.name!r} contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def lags(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel: response ``y[i, t]`` plus high-frequency covariates."""

    y: np.ndarray
    covariates: tuple
    response_lags: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2:
            raise ValueError("response must be (entities, periods)")
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")
        object.__setattr__(self, "y", y)
        covs = tuple(self.covariates)
        names = [c.name for c in covs]
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique")
        for c in covs:
            if c.values.shape[:2] != y.shape:
                raise ValueError(
                    f"covariate {c.name!r} has panel shape {c.values.shape[:2]}, "
                    f"response has {y.shape}"
                )
        object.__setattr__(self, "covariates", covs)
        if self.response_lags is not None:
            r = np.asarray(self.response_lags, dtype=float)
            if r.ndim != 3 or r.shape[:2] != y.shape:
                raise ValueError("response lags must be (entities, periods, n_lags)")
            if not np.all(np.isfinite(r)):
                raise ValueError("response lags contain non-finite values")
            object.__setattr__(self, "response_lags", r)

    @property
    def n_entities(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def include_lagged_response(self) -> bool:
        return self.response_lags is not None

    @property
    def n_response_lags(self) -> int:
        return 0 if self.response_lags is None else self.response_lags.shape[2]


@dataclass(frozen=True)
class GroupStructure:
    """Partition of the penalized coefficients into labeled groups."""

    partition: tuple
    labels: tuple

    def __post_init__(self):
        parts = tuple(np.asarray(g, dtype=np.int64) for g in self.partition)
        if len(parts) != len(self.labels):
            raise ValueError("one label per group required")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("group labels must be unique")
        if any(g.size == 0 for g in parts):
            raise ValueError("empty groups are not allowed")
        all_idx = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        p = all_idx.size
        cover = np.sort(all_idx)
        if p and not np.array_equal(cover, np.arange(p)):
            raise ValueError("groups must partition the coefficient indices 0..p-1")
        object.__setattr__(self, "partition", parts)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_groups(self) -> int:
        return len(self.partition)

    @property
    def p(self) -> int:
        return int(sum(g.size for g in self.partition))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.partition], dtype=np.int64)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], labels: Sequence[str]) -> "GroupStructure":
        """Consecutive blocks of the given sizes."""
        edges = np.concatenate([[0], np.cumsum(np.asarray(sizes, dtype=np.int64))])
        parts = tuple(np.arange(edges[k], edges[k + 1]) for k in range(len(sizes)))
        return cls(partition=parts, labels=tuple(labels))

    def flat_indices(self):
        """CSR-style (ptr, idx) arrays for numeric kernels."""
        ptr = np.zeros(self.n_groups + 1, dtype=np.int64)
        np.cumsum(self.sizes, out=ptr[1:])
        idx = (np.concatenate(self.partition) if self.partition
               else np.empty(0, dtype=np.int64))
        return ptr, idx


@dataclass(frozen=True)
class DesignProblem:
    """Stacked regression problem with grouping and intercept metadata.

    ``column_scales`` records the cumulative rescaling applied to each
    column: multiplying column ``j`` of ``X`` by ``column_scales[j]``
    recovers the column as originally built.
    """

    yvec: np.ndarray
    X: np.ndarray
    groups: GroupStructure
    intercept_mode: str
    n_entities: int
    n_periods: int
    column_scales: np.ndarray = None
    column_owners: tuple = None
    column_labels: tuple = None

    def __post_init__(self):
        y = np.asarray(self.yvec, dtype=float)
        X = np.ascontiguousarray(self.X, dtype=float)
        n, p = X.shape
        if y.shape != (n,):
            raise ValueError(f"response has shape {y.shape}, design has {n} rows")
        if n != self.n_entities * self.n_periods:
            raise ValueError("row count must equal n_entities * n_periods")
        if self.groups.p != p:
            raise ValueError(f"groups cover {self.groups.p} columns, design has {p}")
        if self.intercept_mode not in INTERCEPT_MODES:
            raise ValueError(f"intercept_mode must be one of {INTERCEPT_MODES}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("design contains non-finite values")
        object.__setattr__(self, "yvec", y)
        object.__setattr__(self, "X", X)
        scales = (np.ones(p) if self.column_scales is None
                  else np.asarray(self.column_scales, dtype=float))
        if scales.shape != (p,) or not np.all(scales > 0):
            raise ValueError("column_scales must be positive, one per column")
        object.__setattr__(self, "column_scales", scales)
        owners = (tuple("" for _ in range(p)) if self.column_owners is None
                  else tuple(self.column_owners))
        labels = (tuple(f"b{j}" for j in range(p)) if self.column_labels is None
                  else tuple(self.column_labels))
        if len(owners) != p or len(labels) != p:
            raise ValueError("column metadata must have one entry per column")
        object.__setattr__(self, "column_owners", owners)
        object.__setattr__(self, "column_labels", labels)

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def columns_for(self, owner: str) -> np.ndarray:
        """Indices of the columns built from the named covariate."""
        idx = np.array([j for j, o in enumerate(self.column_owners) if o == owner],
                       dtype=np.int64)
        if idx.size == 0:
            raise KeyError(f"no design columns belong to {owner!r}")
        return idx


def unstack(vec: np.ndarray, n_entities: int, n_periods: int) -> np.ndarray:
    """Inverse of entity-major stacking: (N*T,) -> (N, T)."""
    vec = np.asarray(vec)
    if vec.shape != (n_entities * n_periods,):
        raise ValueError("vector length must be n_entities * n_periods")
    return vec.reshape(n_entities, n_periods)


def _lag_block(data: PanelDataset):
    """Columns, labels and singleton groups for the lagged response."""
    q = data.n_response_lags
    if q == 0:
        return np.empty((data.n_entities * data.n_periods, 0)), [], []
    block = data.response_lags.reshape(-1, q)
    labels = [f"y.lag{j + 1}" for j in range(q)]
    return block, labels, labels


def build_midas_design(
    data: PanelDataset,
    dictionaries: Union[MidasDictionary, Sequence[MidasDictionary]],
    intercept: str = "pooled",
) -> DesignProblem:
    """Assemble the dictionary-compressed design.

    Each covariate's lag array (T x m_k per entity) is multiplied by its
    dictionary to give L_k columns forming one penalty group.  Lagged
    response columns, when present, come first as singleton groups.

    Args:
        data: balanced panel.
        dictionaries: one dictionary per covariate, or a single dictionary
            shared by all covariates with equal lag counts.
        intercept: "pooled", "fixed_effects" or "none"; stored on the
            problem for the solver and estimators to act on.
    """
    if isinstance(dictionaries, MidasDictionary):
        dicts = [dictionaries] * len(data.covariates)
    else:
        dicts = list(dictionaries)
    if len(dicts) != len(data.covariates):
        raise ValueError("need one dictionary per covariate")
    lag_cols, lag_labels, lag_groups = _lag_block(data)
    blocks = [lag_cols]
    labels = list(lag_labels)
    owners = list(lag_labels)
    group_labels = list(lag_groups)
    sizes = [1] * len(lag_groups)
    for cov, d in zip(data.covariates, dicts):
        if d.m != cov.lags:
            raise ValueError(
                f"dictionary for {cov.name!r} covers {d.m} lags, data has {cov.lags}"
            )
        flat = cov.values.reshape(-1, cov.lags)
        blocks.append(flat @ d.W)
        labels.extend(f"{cov.name}.leg{l}" for l in range(d.L))
        owners.extend([cov.name] * d.L)
        group_labels.append(cov.name)
        sizes.append(d.L)
    X = np.hstack(blocks)
    return DesignProblem(
        yvec=data.y.reshape(-1),
        X=X,
        groups=GroupStructure.from_sizes(sizes, group_labels),
        intercept_mode=intercept,
        n_entities=data.n_entities,
        n_periods=data.n_periods,
        column_owners=tuple(owners),
        column_labels=tuple(labels),
    )


def build_umidas_design(data: PanelDataset, intercept: str = "pooled") -> DesignProblem:
    """Assemble the unrestricted design: every lag is its own column.

    Lag columns carry the same ``1 / m_k`` aggregation factor the
    dictionary columns do, so the two designs live on a common scale;
    all groups are singletons (plain LASSO structure).
    """
    lag_cols, lag_labels, lag_groups = _lag_block(data)
    blocks = [lag_cols]
    labels = list(lag_labels)
    owners = list(lag_labels)
    for cov in data.covariates:
        blocks.append(cov.values.reshape(-1, cov.lags) / cov.lags)
        labels.extend(f"{cov.name}.lag{j + 1}" for j in range(cov.lags))
        owners.extend([cov.name] * cov.lags)
    X = np.hstack(blocks)
    return DesignProblem(
        yvec=data.y.reshape(-1),
        X=X,
        groups=GroupStructure.from_sizes([1] * X.shape[1], labels),
        intercept_mode=intercept,
        n_entities=data.n_entities,
        n_periods=data.n_periods,
        column_owners=tuple(owners),
        column_labels=tuple(labels),
    )


def standardize(problem: DesignProblem) -> DesignProblem:
    """Rescale every column to unit root-mean-square norm.

    The applied scales multiply into ``column_scales`` so the cumulative
    record always maps back to the originally built design.  Raises on a
    zero-norm column, naming it.
    """
    norms = np.sqrt(np.mean(problem.X**2, axis=0))
    dead = np.flatnonzero(norms == 0.0)
    if dead.size:
        names = ", ".join(problem.column_labels[j] for j in dead[:5])
        raise ValueError(f"zero-norm design column(s): {names}")
    return replace(
        problem,
        X=problem.X / norms,
        column_scales=problem.column_scales * norms,
    )


def within_transform(problem: DesignProblem) -> DesignProblem:
    """Subtract entity means from the response and every design column.

    Only valid for a fixed-effects problem; the result has
    ``intercept_mode == "none"`` because the entity intercepts are exactly
    absorbed by the demeaning.
    """
    if problem.intercept_mode != "fixed_effects":
        raise ValueError(
            f"within transform needs a fixed-effects problem, got "
            f"{problem.intercept_mode!r}"
        )
    N, T = problem.n_entities, problem.n_periods
    y = problem.yvec.reshape(N, T)
    y = (y - y.mean(axis=1, keepdims=True)).reshape(-1)
    X = problem.X.reshape(N, T, problem.p)
    X = (X - X.mean(axis=1, keepdims=True)).reshape(N * T, problem.p)
    return replace(problem, yvec=y, X=X, intercept_mode="none")


def add_response_lags(data: PanelDataset, q: int) -> PanelDataset:
    """Attach ``q`` lags of the response, consuming the first ``q`` periods.

    Covariate arrays are truncated to the same remaining periods.  The
    panel must not already carry response lags.
    """
    if q < 1:
        raise ValueError("lag count must be at least 1")
    if data.include_lagged_response:
        raise ValueError("panel already has response lags")
    T = data.n_periods
    if T - q < 1:
        raise ValueError(f"{q} lags leave no usable periods out of {T}")
    lags = np.stack([data.y[:, q - j - 1:T - j - 1] for j in range(q)], axis=2)
    return PanelDataset(
        y=data.y[:, q:],
        covariates=tuple(
            Covariate(name=c.name, values=c.values[:, q:, :]) for c in data.covariates
        ),
        response_lags=lags,
    )
