"""Compiled active-set kernel for ``min 0.5||x - z||^2`` over ``g(x) <= -eps``.

Row ``j`` is ``C[j] @ x + beta[j] * sqrt(x^T W x + MU) - h[j]``.  The kernel
runs a primal active-set loop whose subproblems are solved by Newton's method
on the equality-constrained KKT system, and it returns an explicit KKT
certificate.  Status 0 means certified; anything else sends the caller to the
interior-point fallback.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

MU = 1e-16


@njit(cache=True)
def _solve_inplace(K, r, n):
    """Gaussian elimination with partial pivoting; returns False when singular."""
    for col in range(n):
        piv = col
        best = abs(K[col, col])
        for row in range(col + 1, n):
            v = abs(K[row, col])
            if v > best:
                best = v
                piv = row
        if best < 1e-300:
            return False
        if piv != col:
            for c in range(n):
                tmp = K[col, c]
                K[col, c] = K[piv, c]
                K[piv, c] = tmp
            tmp = r[col]
            r[col] = r[piv]
            r[piv] = tmp
        inv = 1.0 / K[col, col]
        for row in range(col + 1, n):
            f = K[row, col] * inv
            if f != 0.0:
                for c in range(col, n):
                    K[row, c] -= f * K[col, c]
                r[row] -= f * r[col]
    for row in range(n - 1, -1, -1):
        acc = r[row]
        for c in range(row + 1, n):
            acc -= K[row, c] * r[c]
        r[row] = acc / K[row, row]
        if not math.isfinite(r[row]):
            return False
    return True


@njit(cache=True)
def _norm_parts(W, conic, x, Wx, mu=MU):
    d = x.shape[0]
    if not conic:
        return 1.0
    q = 0.0
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += W[i, j] * x[j]
        Wx[i] = acc
        q += x[i] * acc
    return math.sqrt(max(q, 0.0) + mu)


@njit(cache=True)
def constraint_values(C, h, beta, W, conic, x, smoothed=True):
    """``g(x)``; the smoothed norm over-estimates the exact one."""
    M, d = C.shape
    Wx = np.empty(d)
    n = _norm_parts(W, conic, x, Wx, MU if smoothed else 0.0)
    g = np.empty(M)
    for j in range(M):
        acc = -h[j]
        for i in range(d):
            acc += C[j, i] * x[i]
        if conic:
            acc += beta[j] * n
        g[j] = acc
    return g


@njit(cache=True)
def _newton(C, h, beta, W, conic, eps, z, S, k, x0, max_iter, scale):
    d = z.shape[0]
    x = x0.copy()
    mu = np.zeros(k)
    Wx = np.empty(d)
    G = np.empty((k, d))
    nk = d + k
    K = np.empty((nk, nk))
    r = np.empty(nk)
    for it in range(1, max_iter + 1):
        n = _norm_parts(W, conic, x, Wx)
        for a in range(k):
            j = S[a]
            for i in range(d):
                G[a, i] = C[j, i]
                if conic:
                    G[a, i] += beta[j] * Wx[i] / n
        if it == 1 and k > 0:
            # least-squares multipliers: (G G^T) mu = G (z - x)
            GG = np.empty((k, k))
            rr = np.empty(k)
            for a in range(k):
                acc = 0.0
                for i in range(d):
                    acc += G[a, i] * (z[i] - x[i])
                rr[a] = acc
                for b in range(k):
                    s = 0.0
                    for i in range(d):
                        s += G[a, i] * G[b, i]
                    GG[a, b] = s + (1e-14 if a == b else 0.0)
            if _solve_inplace(GG, rr, k):
                for a in range(k):
                    mu[a] = rr[a]
        wsum = 0.0
        if conic:
            for a in range(k):
                wsum += mu[a] * beta[S[a]]
        for i in range(d):
            for j in range(d):
                v = 1.0 if i == j else 0.0
                if conic and wsum != 0.0:
                    v += wsum * (W[i, j] / n - Wx[i] * Wx[j] / (n * n * n))
                K[i, j] = v
        max_r2 = 0.0
        for i in range(d):
            acc = x[i] - z[i]
            for a in range(k):
                acc += G[a, i] * mu[a]
            r[i] = -acc
        for a in range(k):
            j = S[a]
            acc = -h[j] + eps
            for i in range(d):
                acc += C[j, i] * x[i]
            if conic:
                acc += beta[j] * n
            r[d + a] = -acc
            if abs(acc) > max_r2:
                max_r2 = abs(acc)
            for i in range(d):
                K[i, d + a] = G[a, i]
                K[d + a, i] = G[a, i]
            for b in range(k):
                K[d + a, d + b] = 0.0
        if not _solve_inplace(K, r, nk):
            return x, mu, it, False
        step = 0.0
        xmax = 0.0
        for i in range(d):
            x[i] += r[i]
            if abs(r[i]) > step:
                step = abs(r[i])
            if abs(x[i]) > xmax:
                xmax = abs(x[i])
        for a in range(k):
            mu[a] += r[d + a]
        if step <= 1e-13 * (1.0 + xmax) and max_r2 <= 1e-12 * scale:
            return x, mu, it, True
    return x, mu, max_iter, False


@njit(cache=True)
def project_active_set(C, h, beta, W, conic, eps, z, x0, S0, diameter, eps_opt, max_changes):
    """Returns ``(x, active_mask, gap, iterations, status)``."""
    M, d = C.shape
    scale = 1.0
    for j in range(M):
        if abs(h[j]) + 1.0 > scale:
            scale = abs(h[j]) + 1.0
    tol_g = 1e-13 * scale
    active = np.zeros(M, dtype=np.bool_)
    for j in range(S0.shape[0]):
        active[S0[j]] = True
    x = x0.copy()
    total = 0
    S = np.empty(d, dtype=np.int64)
    for change in range(max_changes):
        k = 0
        for j in range(M):
            if active[j]:
                if k >= d:
                    return x, active, np.inf, total, 2
                S[k] = j
                k += 1
        xn, mu, it, ok = _newton(C, h, beta, W, conic, eps, z, S, k, x, 30, scale)
        total += it
        if not ok:
            return xn, active, np.inf, total, 1
        g = constraint_values(C, h, beta, W, conic, xn)
        worst = -1
        worst_v = tol_g
        for j in range(M):
            if not active[j] and g[j] + eps > worst_v:
                worst_v = g[j] + eps
                worst = j
        neg = -1
        mu_max = 0.0
        for a in range(k):
            if abs(mu[a]) > mu_max:
                mu_max = abs(mu[a])
        neg_v = -1e-10 * (1.0 + mu_max)
        for a in range(k):
            if mu[a] < neg_v:
                neg_v = mu[a]
                neg = S[a]
        if worst < 0 and neg < 0:
            # certificate: stationarity residual times diameter plus complementarity
            Wx = np.empty(d)
            n = _norm_parts(W, conic, xn, Wx)
            res = 0.0
            for i in range(d):
                acc = xn[i] - z[i]
                for a in range(k):
                    j = S[a]
                    gi = C[j, i]
                    if conic:
                        gi += beta[j] * Wx[i] / n
                    acc += gi * mu[a]
                res += acc * acc
            comp = 0.0
            for a in range(k):
                comp += abs(mu[a]) * abs(g[S[a]] + eps)
            gap = math.sqrt(res) * diameter + comp
            if gap <= eps_opt:
                return xn, active, gap, total, 0
            return xn, active, gap, total, 3
        x = xn
        if neg >= 0:
            active[neg] = False
        else:
            active[worst] = True
    return x, active, np.inf, total, 4
