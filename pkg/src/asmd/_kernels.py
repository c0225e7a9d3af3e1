"""Compiled row scans for linear max-type constraints.

Every constraint value ``<alpha_j, x> + beta_j`` is computed by the same
sequential loop, so the full scan and the short-circuit scan see bit-identical
component values.  Work is proportional to the number of rows visited.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def row_value(alpha, beta, j, x):
    s = 0.0
    row = alpha[j]
    for i in range(x.shape[0]):
        s += row[i] * x[i]
    return s + beta[j]


@numba.njit(cache=True, nogil=True)
def all_values(alpha, beta, x):
    m = alpha.shape[0]
    out = np.empty(m)
    for j in range(m):
        out[j] = row_value(alpha, beta, j, x)
    return out


@numba.njit(cache=True, nogil=True)
def scan_max(alpha, beta, x):
    """Return ``(j, g_j(x))`` for the smallest index attaining the max."""
    best_j = 0
    best = row_value(alpha, beta, 0, x)
    for j in range(1, alpha.shape[0]):
        v = row_value(alpha, beta, j, x)
        if v > best:
            best = v
            best_j = j
    return best_j, best


@numba.njit(cache=True, nogil=True)
def scan_first(alpha, beta, x, eps):
    """Visit rows in order and stop at the first value above ``eps``.

    Returns ``(j, visited, value)``: ``j = -1`` when no row exceeds ``eps``,
    in which case ``value`` is the maximum over all rows; otherwise ``value``
    is ``g_j(x)``.
    """
    best = -np.inf
    m = alpha.shape[0]
    for j in range(m):
        v = row_value(alpha, beta, j, x)
        if v > eps:
            return j, j + 1, v
        if v > best:
            best = v
    return -1, m, best


@numba.njit(cache=True, nogil=True)
def ball_step(x, p, h, radius):
    """``x - h p`` radially projected onto the ball of the given radius."""
    n = x.shape[0]
    u = np.empty(n)
    s = 0.0
    for i in range(n):
        u[i] = x[i] - h * p[i]
        s += u[i] * u[i]
    nrm = np.sqrt(s)
    if nrm > radius:
        scale = radius / nrm
        for i in range(n):
            u[i] *= scale
    return u
