"""Numba inner loops for the proximal-gradient solver, in Gram form.

The quadratic part of the objective is carried through the Gram matrix
``G = Z'Z``, moments ``c = Z'y`` and ``y2 = y'y``:

    f(theta) = (y2 - 2 c'theta + theta'G theta) / n

so an iteration costs one (q, q) mat-vec regardless of the sample size,
and cross-validation can reuse per-fold Grams across a whole penalty
grid.  Groups are passed CSR-style (``gptr``, ``gidx``) over penalized
coordinates; ``free_idx`` lists unpenalized coordinates.  All scalar
reductions run in ascending index order, so results are deterministic
for a fixed BLAS configuration.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def prox_sg_kernel(z, eta_lambda, gamma, gptr, gidx):
    """In-place prox of eta_lambda * (gamma l1 + (1-gamma) group l2).

    Per group: elementwise soft-threshold at gamma * eta_lambda, then
    shrink the group toward zero by the l2 threshold (1 - gamma) *
    eta_lambda.  Coordinates outside every group are left untouched.
    """
    gt = gamma * eta_lambda
    ct = (1.0 - gamma) * eta_lambda
    for g in range(gptr.shape[0] - 1):
        lo = gptr[g]
        hi = gptr[g + 1]
        nrm2 = 0.0
        for a in range(lo, hi):
            j = gidx[a]
            v = z[j]
            av = abs(v) - gt
            if av <= 0.0:
                z[j] = 0.0
            else:
                z[j] = av if v > 0.0 else -av
                nrm2 += av * av
        if ct > 0.0:
            nrm = np.sqrt(nrm2)
            if nrm <= ct:
                for a in range(lo, hi):
                    z[gidx[a]] = 0.0
            else:
                f = 1.0 - ct / nrm
                for a in range(lo, hi):
                    z[gidx[a]] *= f


@njit(cache=True)
def penalty_kernel(theta, gamma, gptr, gidx):
    """Omega(theta) over the grouped coordinates."""
    l1 = 0.0
    l2 = 0.0
    for g in range(gptr.shape[0] - 1):
        nrm2 = 0.0
        for a in range(gptr[g], gptr[g + 1]):
            v = theta[gidx[a]]
            l1 += abs(v)
            nrm2 += v * v
        l2 += np.sqrt(nrm2)
    return gamma * l1 + (1.0 - gamma) * l2


@njit(cache=True)
def kkt_kernel(gv, theta, lam, gamma, gptr, gidx, free_idx):
    """Max subgradient-condition violation at theta.

    ``gv`` is the negative half-gradient Z'(y - Z theta) / n.  Stationarity
    requires gv_j = 0 on free coordinates, gv_G inside the penalty
    subdifferential on zero groups, and equality with the (unique)
    subgradient on active coordinates.
    """
    worst = 0.0
    for a in range(free_idx.shape[0]):
        v = abs(gv[free_idx[a]])
        if v > worst:
            worst = v
    gl = gamma * lam
    cl = (1.0 - gamma) * lam
    for g in range(gptr.shape[0] - 1):
        lo = gptr[g]
        hi = gptr[g + 1]
        bn2 = 0.0
        for a in range(lo, hi):
            v = theta[gidx[a]]
            bn2 += v * v
        if bn2 == 0.0:
            sn2 = 0.0
            for a in range(lo, hi):
                s = abs(gv[gidx[a]]) - gl
                if s > 0.0:
                    sn2 += s * s
            v = np.sqrt(sn2) - cl
            if v > worst:
                worst = v
        else:
            bn = np.sqrt(bn2)
            for a in range(lo, hi):
                j = gidx[a]
                b = theta[j]
                if b != 0.0:
                    sgn = 1.0 if b > 0.0 else -1.0
                    v = abs(gv[j] - gl * sgn - cl * b / bn)
                else:
                    v = abs(gv[j]) - gl
                if v > worst:
                    worst = v
    return worst


@njit(cache=True)
def solve_gram_kernel(G, c, y2, n, lam, gamma, gptr, gidx, free_idx, theta,
                      max_iter, tol, kkt_tol, eta0, shrink, suff, accel):
    """Accelerated proximal gradient on the Gram-form objective.

    Mutates ``theta`` in place; returns (objective, iterations, converged,
    kkt_residual, step).  Momentum restarts whenever the extrapolated step
    would increase the objective, so runs with ``accel=False`` are exactly
    monotone.  Convergence needs the relative objective change below
    ``tol`` and the KKT residual below ``kkt_tol``.
    """
    q = theta.shape[0]
    eta = eta0
    theta_prev = theta.copy()
    Gtheta = np.dot(G, theta)
    Gtheta_prev = Gtheta.copy()
    fcur = (y2 - 2.0 * np.dot(c, theta) + np.dot(theta, Gtheta)) / n
    Fcur = fcur + 2.0 * lam * penalty_kernel(theta, gamma, gptr, gidx)
    tmom = 1.0
    iters = 0
    converged = False
    kkt = -1.0
    w = np.empty(q)
    grad = np.empty(q)
    cand = np.empty(q)
    Gcand = np.empty(q)
    gv = np.empty(q)
    for _ in range(max_iter):
        iters += 1
        if accel:
            tnext = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tmom * tmom))
            beta = (tmom - 1.0) / tnext
        else:
            tnext = 1.0
            beta = 0.0
        Fnew = Fcur
        for trial in range(2):
            if trial == 1:
                beta = 0.0
                tnext = 1.0
            cw = 0.0
            wGw = 0.0
            for j in range(q):
                wj = theta[j] + beta * (theta[j] - theta_prev[j])
                w[j] = wj
                gw = Gtheta[j] + beta * (Gtheta[j] - Gtheta_prev[j])
                grad[j] = 2.0 * (gw - c[j]) / n
                cw += c[j] * wj
                wGw += wj * gw
            fw = (y2 - 2.0 * cw + wGw) / n
            # cancellation noise floor of the quadratic evaluations
            slack = 1e-12 * (abs(fw) + y2 / n + 1.0)
            while True:
                for j in range(q):
                    cand[j] = w[j] - eta * grad[j]
                prox_sg_kernel(cand, 2.0 * eta * lam, gamma, gptr, gidx)
                Gc = np.dot(G, cand)
                for j in range(q):
                    Gcand[j] = Gc[j]
                cc = 0.0
                cGc = 0.0
                dg = 0.0
                dn2 = 0.0
                for j in range(q):
                    cc += c[j] * cand[j]
                    cGc += cand[j] * Gcand[j]
                    d = cand[j] - w[j]
                    dg += grad[j] * d
                    dn2 += d * d
                fc = (y2 - 2.0 * cc + cGc) / n
                if fc <= fw + dg + (1.0 - suff) * dn2 / (2.0 * eta) + slack:
                    break
                if dn2 <= 1e-28 * (1.0 + dn2):
                    break  # numerically a fixed point; nothing to gain by shrinking
                eta *= shrink
                if eta < 1e-30:
                    break
            Fnew = fc + 2.0 * lam * penalty_kernel(cand, gamma, gptr, gidx)
            if beta == 0.0 or Fnew <= Fcur + slack:
                break
            tmom = 1.0  # momentum overshot: redo this step unaccelerated
        for j in range(q):
            theta_prev[j] = theta[j]
            Gtheta_prev[j] = Gtheta[j]
            theta[j] = cand[j]
            Gtheta[j] = Gcand[j]
        rel = abs(Fcur - Fnew) / max(1.0, abs(Fcur))
        Fcur = Fnew
        tmom = tnext
        if rel < tol:
            for j in range(q):
                gv[j] = (c[j] - Gtheta[j]) / n
            kkt = kkt_kernel(gv, theta, lam, gamma, gptr, gidx, free_idx)
            if kkt < kkt_tol:
                converged = True
                break
    if not converged:
        for j in range(q):
            gv[j] = (c[j] - Gtheta[j]) / n
        kkt = kkt_kernel(gv, theta, lam, gamma, gptr, gidx, free_idx)
    return Fcur, iters, converged, kkt, eta


@njit(cache=True)
def path_gram_kernel(G, c, y2, n, lambdas, gamma, gptr, gidx, free_idx,
                     theta0, max_iter, tol, kkt_tol, eta0, shrink, suff, accel):
    """Warm-started solves along a descending lambda grid."""
    nl = lambdas.shape[0]
    q = theta0.shape[0]
    thetas = np.empty((nl, q))
    objs = np.empty(nl)
    its = np.empty(nl, dtype=np.int64)
    convs = np.empty(nl, dtype=np.uint8)
    kkts = np.empty(nl)
    theta = theta0.copy()
    eta = eta0
    for li in range(nl):
        obj, it_, conv, kkt, eta = solve_gram_kernel(
            G, c, y2, n, lambdas[li], gamma, gptr, gidx, free_idx, theta,
            max_iter, tol, kkt_tol, eta, shrink, suff, accel,
        )
        thetas[li, :] = theta
        objs[li] = obj
        its[li] = it_
        convs[li] = 1 if conv else 0
        kkts[li] = kkt
    return thetas, objs, its, convs, kkts
