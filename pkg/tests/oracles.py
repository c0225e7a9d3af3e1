"""Brute-force reference computations shared by the tests."""

import numpy as np


def zoom_argmin(fun, feasible, center, span, points=41, levels=60, clip=None):
    """Minimize ``fun`` over a 2-D region by repeatedly refined grids.

    Each level evaluates a ``points x points`` grid of half-width ``span``
    around the incumbent, keeps the best feasible point and halves the span,
    so the next grid still covers ten old spacings.  ``clip`` (optional)
    maps grid points into the region before the feasibility filter.  ``fun``
    and ``feasible`` take an array of shape ``(k, 2)``.
    """
    best = np.asarray(center, dtype=float)
    t = np.linspace(-1.0, 1.0, points)
    for _ in range(levels):
        gx, gy = np.meshgrid(best[0] + span * t, best[1] + span * t, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        if clip is not None:
            pts = clip(pts)
        pts = pts[feasible(pts)]
        if len(pts):
            best = pts[np.argmin(fun(pts))]
        span /= 2.0
    return best


def ball_mirror_by_grid(x, p, radius=1.0):
    """``argmin_{||u|| <= r} <p, u> + 0.5 ||u - x||^2`` in 2-D by grid search.

    Two searches, keeping the better result: a Cartesian zoom over interior
    points, and a zoom over the angle on the boundary circle (so boundary
    optima are found on the circle itself, not approached from inside).
    """
    def fun(u):
        return u @ p + 0.5 * np.sum((u - x) ** 2, axis=1)

    inside = zoom_argmin(fun, lambda u: np.sum(u * u, axis=1) <= radius**2, np.zeros(2), radius)

    def circle(th):
        return radius * np.column_stack([np.cos(th), np.sin(th)])

    th = np.linspace(-np.pi, np.pi, 721)
    best = th[np.argmin(fun(circle(th)))]
    span = 2 * np.pi / 720
    for _ in range(60):
        th = best + span * np.linspace(-1, 1, 41)
        best = th[np.argmin(fun(circle(th)))]
        span /= 2.0
    edge = circle(np.array([best]))[0]
    return inside if fun(inside[None, :])[0] <= fun(edge[None, :])[0] else edge


def simplex_mirror_by_grid(x, p):
    """``argmin_{u in simplex} <p, u> + KL(u || x)`` for n = 3 by grid search."""
    def full(v):
        return np.column_stack([v, 1.0 - v.sum(axis=1)])

    def fun(v):
        u = full(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            kl = np.where(u > 0, u * np.log(u / x), 0.0).sum(axis=1)
        return u @ p + kl

    feasible = lambda v: (v.min(axis=1) >= 0) & (v.sum(axis=1) <= 1.0)
    v = zoom_argmin(fun, feasible, np.array([1 / 3, 1 / 3]), 0.5)
    return full(v[None, :])[0]


def simplex_grid(n, resolution):
    """All points ``k / resolution`` of the probability simplex for n = 2 or 3."""
    if n == 2:
        i = np.arange(resolution + 1)
        return np.column_stack([i, resolution - i]) / resolution
    rows = [(i, j, resolution - i - j) for i in range(resolution + 1) for j in range(resolution + 1 - i)]
    return np.array(rows, dtype=float) / resolution
