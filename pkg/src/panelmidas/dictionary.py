"""Weight dictionaries for mixed-frequency lag polynomials.

A low-frequency observation aggregates ``m`` high-frequency lags of a
covariate through a weight function on [0, 1].  Instead of estimating all
``m`` lag coefficients freely, the lag polynomial is expanded in a small
dictionary ``W`` of shape ``(m, L)``: column ``l`` tabulates a basis
function at the lag fractions ``(j - 1) / m`` and carries the ``1 / m``
aggregation factor.  Shifted Legendre polynomials are the default basis;
beta densities generate benchmark weight shapes for simulations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class MidasDictionary:
    """Lag-polynomial dictionary: ``m`` high-frequency lags, ``L`` basis columns."""

    m: int
    L: int
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.shape != (self.m, self.L):
            raise ValueError(
                f"dictionary matrix has shape {W.shape}, expected ({self.m}, {self.L})"
            )
        if not np.all(np.isfinite(W)):
            raise ValueError("dictionary matrix contains non-finite entries")
        object.__setattr__(self, "W", W)


def legendre_value(l: int, s):
    """Evaluate the shifted Legendre polynomial of degree ``l`` on [0, 1].

    Shifted to [0, 1] from the usual [-1, 1] domain, so the degree-one
    polynomial is ``2 s - 1``.  Computed by the three-term recurrence
    ``(k + 1) P_{k+1} = (2 k + 1)(2 s - 1) P_k - k P_{k-1}``, which is
    numerically stable for the small degrees used here.

    Args:
        l: polynomial degree, nonnegative.
        s: lag fraction(s) in [0, 1]; scalar or array.

    Returns:
        Polynomial value(s), matching the shape of ``s``.
    """
    if l != int(l) or l < 0:
        raise ValueError("polynomial degree must be a nonnegative integer")
    l = int(l)
    s_arr = np.asarray(s, dtype=float)
    if s_arr.size and (s_arr.min() < 0.0 or s_arr.max() > 1.0):
        raise ValueError("lag fractions must lie in [0, 1]")
    x = 2.0 * s_arr - 1.0
    p_prev = np.ones_like(x)
    if l == 0:
        return float(p_prev) if np.isscalar(s) else p_prev
    p = x
    for k in range(1, l):
        p, p_prev = ((2 * k + 1) * x * p - k * p_prev) / (k + 1), p
    return float(p) if np.isscalar(s) else p


def build_dictionary(m: int, L: int) -> MidasDictionary:
    """Build the shifted-Legendre dictionary with ``L`` columns over ``m`` lags.

    Entry ``W[j - 1, l]`` is the degree-``l`` shifted Legendre polynomial at
    lag fraction ``(j - 1) / m``, divided by ``m``.  Columns are close to
    orthogonal under the discrete inner product: ``m * W.T @ W`` approaches
    ``diag(1, 1/3, 1/5, ...)`` as ``m`` grows.
    """
    if m < 1:
        raise ValueError("number of high-frequency lags must be at least 1")
    if L < 1 or L > m:
        raise ValueError(f"dictionary size L={L} must satisfy 1 <= L <= m={m}")
    s = np.arange(m, dtype=float) / m
    W = np.column_stack([legendre_value(l, s) for l in range(L)]) / m
    return MidasDictionary(m=m, L=L, W=W)


def beta_weights(m: int, p1: float, p2: float, scale: float = 1.0,
                 grid: str = "inclusive") -> np.ndarray:
    """Tabulate a scaled Beta(p1, p2) density on a lag grid of length ``m``.

    The default ``grid="inclusive"`` places points at ``(j - 1) / (m - 1)``
    so both endpoints are hit (a single point sits at 0.5 when ``m == 1``);
    ``grid="left"`` uses ``(j - 1) / m`` instead.  The output is the raw
    density times ``scale``; any ``1 / m`` aggregation factor is the
    caller's concern.
    """
    if m < 1:
        raise ValueError("number of lags must be at least 1")
    if p1 <= 0 or p2 <= 0:
        raise ValueError("beta shape parameters must be positive")
    if grid == "inclusive":
        s = np.full(1, 0.5) if m == 1 else np.arange(m, dtype=float) / (m - 1)
    elif grid == "left":
        s = np.arange(m, dtype=float) / m
    else:
        raise ValueError(f"unknown grid rule {grid!r}")
    w = scale * stats.beta.pdf(s, p1, p2)
    if not np.all(np.isfinite(w)):
        raise ValueError("beta density is unbounded at a grid point")
    return w
