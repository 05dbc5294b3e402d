"""Numeric hot kernels.

Every kernel exists twice: a pure-numpy implementation (suffix ``_np``) and a
numba-compiled twin. The public, unsuffixed names are bound at import time:
numba is used when it imports cleanly and the environment variable
``STREAMFED_NO_NUMBA`` is unset; otherwise the numpy path is used. Both paths
compute the same values (the numba twins are compiled from the same
loop-structured source wherever bitwise agreement matters).

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "logistic_losses",
    "logistic_grad_weighted",
    "squared_losses",
    "squared_grad_weighted",
    "project_simplex",
    "psi_terms",
    "psi_subgrad_arrays",
    "minimize_psi_loop",
    "centered_coefficient_deviation",
]


def _logistic_losses_np(theta, X, y):
    # log(1 + exp(-s)) + (1-y)*s  ==  -y*s + log(1+exp(s)), stable form
    s = X @ theta
    out = np.logaddexp(0.0, -s) + (1.0 - y) * s
    return out


def _logistic_grad_weighted_np(theta, X, y, w):
    s = X @ theta
    sig = 1.0 / (1.0 + np.exp(-s))
    return X.T @ (w * (sig - y))


def _squared_losses_np(theta, X, y):
    r = X @ theta - y
    return 0.5 * r * r


def _squared_grad_weighted_np(theta, X, y, w):
    r = X @ theta - y
    return X.T @ (w * r)


def _project_simplex_np(v):
    # sort-and-threshold Euclidean projection onto {p >= 0, sum p = 1}
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    cond = u - css / ks > 0.0
    k = np.nonzero(cond)[0][-1]
    tau = css[k] / (k + 1.0)
    return np.maximum(v - tau, 0.0)


def _psi_terms_np(p, n, m_hist):
    fresh_sq = 0.0
    neff_sq = 0.0
    for m in range(p.size):
        neff_sq += p[m] * p[m] / n[m]
        if m >= m_hist:
            fresh_sq += p[m] * p[m]
    return np.sqrt(fresh_sq), np.sqrt(neff_sq)


def _psi_subgrad_arrays_np(p, n, m_hist, c1, c2):
    # zero vector is the chosen subgradient for a term whose radical is 0
    fresh_rad, neff_rad = _psi_terms_np(p, n, m_hist)
    g = np.zeros_like(p)
    if c1 > 0.0 and fresh_rad > 0.0:
        g[m_hist:] += c1 * p[m_hist:] / fresh_rad
    if c2 > 0.0 and neff_rad > 0.0:
        g += c2 * (p / n) / neff_rad
    return g


def _minimize_psi_loop_np(p0, n, m_hist, c1, c2, tol, max_iters, window):
    p = p0.copy()
    fresh_rad, neff_rad = _psi_terms_np(p, n, m_hist)
    best_val = c1 * fresh_rad + c2 * neff_rad
    best_p = p.copy()
    eta0 = 1.0 / (c1 + c2)
    since_improved = 0
    iters = 0
    for k in range(1, max_iters + 1):
        g = _psi_subgrad_arrays_np(p, n, m_hist, c1, c2)
        p = _project_simplex_np(p - (eta0 / np.sqrt(k)) * g)
        fresh_rad, neff_rad = _psi_terms_np(p, n, m_hist)
        val = c1 * fresh_rad + c2 * neff_rad
        iters = k
        if val < best_val - tol:
            best_val = val
            best_p = p.copy()
            since_improved = 0
        else:
            if val < best_val:
                best_val = val
                best_p = p.copy()
            since_improved += 1
            if since_improved >= window:
                break
    return best_p, best_val, iters


def _centered_coefficient_deviation_np(A, q):
    """Deviation delta[i, t] = sum_t' q[t'] * (A[i, t] - A[i, t']).

    Equals A[:, t] - A @ q in exact arithmetic (when sum q = 1) but cancels
    bitwise when a row is constant, which the stationary-weights invariants
    rely on. Rows detected constant are skipped at zero cost.
    """
    n_rows, n_cols = A.shape
    out = np.zeros_like(A)
    for i in range(n_rows):
        row = A[i]
        lo = row.min()
        hi = row.max()
        if lo == hi:
            continue
        # centered accumulation, one O(T) pass per round
        for t in range(n_cols):
            out[i, t] = np.dot(q, row[t] - row)
    return out


USING_NUMBA = False

if not os.environ.get("STREAMFED_NO_NUMBA"):
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False

if USING_NUMBA:

    @njit(cache=True)
    def _logistic_losses_nb(theta, X, y):
        n = X.shape[0]
        out = np.empty(n)
        for i in range(n):
            s = np.dot(X[i], theta)
            out[i] = np.logaddexp(0.0, -s) + (1.0 - y[i]) * s
        return out

    @njit(cache=True)
    def _logistic_grad_weighted_nb(theta, X, y, w):
        d = theta.size
        g = np.zeros(d)
        for i in range(X.shape[0]):
            s = np.dot(X[i], theta)
            coef = w[i] * (1.0 / (1.0 + np.exp(-s)) - y[i])
            for j in range(d):
                g[j] += coef * X[i, j]
        return g

    @njit(cache=True)
    def _squared_losses_nb(theta, X, y):
        n = X.shape[0]
        out = np.empty(n)
        for i in range(n):
            r = np.dot(X[i], theta) - y[i]
            out[i] = 0.5 * r * r
        return out

    @njit(cache=True)
    def _squared_grad_weighted_nb(theta, X, y, w):
        d = theta.size
        g = np.zeros(d)
        for i in range(X.shape[0]):
            coef = w[i] * (np.dot(X[i], theta) - y[i])
            for j in range(d):
                g[j] += coef * X[i, j]
        return g

    @njit(cache=True)
    def _project_simplex_nb(v):
        u = np.sort(v)[::-1]
        css = np.cumsum(u) - 1.0
        k = 0
        for i in range(v.size):
            if u[i] - css[i] / (i + 1.0) > 0.0:
                k = i
        tau = css[k] / (k + 1.0)
        out = v - tau
        for i in range(out.size):
            if out[i] < 0.0:
                out[i] = 0.0
        return out

    @njit(cache=True)
    def _psi_terms_nb(p, n, m_hist):
        fresh_sq = 0.0
        neff_sq = 0.0
        for m in range(p.size):
            neff_sq += p[m] * p[m] / n[m]
            if m >= m_hist:
                fresh_sq += p[m] * p[m]
        return np.sqrt(fresh_sq), np.sqrt(neff_sq)

    @njit(cache=True)
    def _psi_subgrad_arrays_nb(p, n, m_hist, c1, c2):
        fresh_rad, neff_rad = _psi_terms_nb(p, n, m_hist)
        g = np.zeros_like(p)
        if c1 > 0.0 and fresh_rad > 0.0:
            for m in range(m_hist, p.size):
                g[m] += c1 * p[m] / fresh_rad
        if c2 > 0.0 and neff_rad > 0.0:
            for m in range(p.size):
                g[m] += c2 * (p[m] / n[m]) / neff_rad
        return g

    @njit(cache=True)
    def _minimize_psi_loop_nb(p0, n, m_hist, c1, c2, tol, max_iters, window):
        p = p0.copy()
        fresh_rad, neff_rad = _psi_terms_nb(p, n, m_hist)
        best_val = c1 * fresh_rad + c2 * neff_rad
        best_p = p.copy()
        eta0 = 1.0 / (c1 + c2)
        since_improved = 0
        iters = 0
        for k in range(1, max_iters + 1):
            g = _psi_subgrad_arrays_nb(p, n, m_hist, c1, c2)
            p = _project_simplex_nb(p - (eta0 / np.sqrt(k)) * g)
            fresh_rad, neff_rad = _psi_terms_nb(p, n, m_hist)
            val = c1 * fresh_rad + c2 * neff_rad
            iters = k
            if val < best_val - tol:
                best_val = val
                best_p = p.copy()
                since_improved = 0
            else:
                if val < best_val:
                    best_val = val
                    best_p = p.copy()
                since_improved += 1
                if since_improved >= window:
                    break
        return best_p, best_val, iters

    @njit(cache=True)
    def _centered_coefficient_deviation_nb(A, q):
        n_rows, n_cols = A.shape
        out = np.zeros_like(A)
        for i in range(n_rows):
            lo = A[i, 0]
            hi = A[i, 0]
            for t in range(1, n_cols):
                if A[i, t] < lo:
                    lo = A[i, t]
                if A[i, t] > hi:
                    hi = A[i, t]
            if lo == hi:
                continue
            for t in range(n_cols):
                acc = 0.0
                for s in range(n_cols):
                    acc += q[s] * (A[i, t] - A[i, s])
                out[i, t] = acc
        return out

    logistic_losses = _logistic_losses_nb
    logistic_grad_weighted = _logistic_grad_weighted_nb
    squared_losses = _squared_losses_nb
    squared_grad_weighted = _squared_grad_weighted_nb
    project_simplex = _project_simplex_nb
    psi_terms = _psi_terms_nb
    psi_subgrad_arrays = _psi_subgrad_arrays_nb
    minimize_psi_loop = _minimize_psi_loop_nb
    centered_coefficient_deviation = _centered_coefficient_deviation_nb
else:
    logistic_losses = _logistic_losses_np
    logistic_grad_weighted = _logistic_grad_weighted_np
    squared_losses = _squared_losses_np
    squared_grad_weighted = _squared_grad_weighted_np
    project_simplex = _project_simplex_np
    psi_terms = _psi_terms_np
    psi_subgrad_arrays = _psi_subgrad_arrays_np
    minimize_psi_loop = _minimize_psi_loop_np
    centered_coefficient_deviation = _centered_coefficient_deviation_np
