"""Proximal setups: distance-generating functions, Bregman divergences and
the mirror step ``Mirr_x(p) = argmin_{u in Q} <p, u> + V_x(u)``.

Three feasible sets are supported, each with a closed-form mirror step:

* :class:`EuclideanBall` -- ``d(x) = 0.5 ||x||^2``, radial projection.
* :class:`EuclideanBox` -- ``d(x) = 0.5 ||x||^2``, componentwise clamp.
* :class:`EntropySimplex` -- ``d(x) = sum x_i log x_i``, multiplicative weights.

Setups are immutable.  All methods are pure functions of their arguments.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import kl_div, xlogy

from . import _kernels
from .errors import DimensionError, DomainError, InfeasiblePointError

#: Feasibility tolerance.  Points outside the set by at most this much are
#: silently re-projected; anything larger is an error.
FEAS_TOL = 1e-9
#: Floor applied to simplex coordinates before taking logarithms.
LOG_FLOOR = 1e-300


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class ProxSetup(ABC):
    """Distance-generating function on a closed convex set ``Q``.

    Attributes
    ----------
    kind : str
        One of ``"euclidean-ball"``, ``"euclidean-box"``, ``"entropy-simplex"``.
    dimension : int
        Ambient dimension ``n``.
    theta0 : float
        Constant with ``sup V_x(y) <= theta0**2`` over the set (see each
        subclass for how the default is chosen).
    """

    kind: str = ""

    def __init__(self, dimension: int, theta0: float):
        if dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if not theta0 > 0:
            raise ValueError("theta0 must be positive")
        self.dimension = int(dimension)
        self.theta0 = float(theta0)

    def __setattr__(self, name, value):
        if name in self.__dict__:
            raise AttributeError(f"{type(self).__name__} is immutable")
        super().__setattr__(name, value)

    @abstractmethod
    def d(self, x: np.ndarray) -> float:
        """Distance-generating function."""

    @abstractmethod
    def grad_d(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the distance-generating function."""

    @abstractmethod
    def bregman(self, x: np.ndarray, y: np.ndarray) -> float:
        """``V_x(y) = d(y) - d(x) - <grad d(x), y - x>``."""

    @abstractmethod
    def mirr(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Mirror step ``argmin_{u in Q} <p, u> + V_x(u)``."""

    def mirr_scaled(self, x: np.ndarray, p: np.ndarray, h: float) -> np.ndarray:
        """``mirr(x, h * p)`` without validation, for use in solver loops."""
        return self.mirr(x, h * p)

    @abstractmethod
    def violation(self, x: np.ndarray) -> float:
        """Distance-like measure of how far ``x`` lies outside ``Q`` (0 inside)."""

    @abstractmethod
    def project(self, x: np.ndarray) -> np.ndarray:
        """Map a nearly-feasible point back into ``Q``."""

    @abstractmethod
    def random_point(self, rng) -> np.ndarray:
        """A random feasible point."""

    def boundary_point(self, rng) -> np.ndarray:
        """A random point on the relative boundary (defaults to any point)."""
        return self.random_point(rng)

    def dual_norm(self, p: np.ndarray) -> float:
        # every setup here is 1-strongly convex w.r.t. the l2 norm
        return math.sqrt(float(np.dot(p, p)))

    def params(self) -> dict:
        """JSON-friendly constructor parameters."""
        return {"kind": self.kind, "dimension": self.dimension, "theta0": self.theta0}

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return x.shape == (self.dimension,) and bool(np.all(np.isfinite(x))) and self.violation(x) <= tol

    def check(self, x) -> np.ndarray:
        """Return ``x`` as a feasible float array.

        Drift up to :data:`FEAS_TOL` is projected away; larger violations raise
        :class:`InfeasiblePointError`.
        """
        x = np.array(x, dtype=np.float64)
        if x.shape != (self.dimension,):
            raise DimensionError(f"expected a point of shape ({self.dimension},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InfeasiblePointError("point has non-finite coordinates")
        v = self.violation(x)
        if v > FEAS_TOL:
            raise InfeasiblePointError(f"point violates {self.kind} by {v:.3e} > {FEAS_TOL:g}")
        if v > 0:
            x = self.project(x)
        return x

    def _dims(self, *arrays):
        for a in arrays:
            if np.shape(a) != (self.dimension,):
                raise DimensionError(f"expected shape ({self.dimension},), got {np.shape(a)}")


class EuclideanBall(ProxSetup):
    """Ball ``||x||_2 <= radius`` with ``d(x) = 0.5 ||x||_2^2``.

    The default ``theta0 = sqrt(2) * radius`` comes from
    ``0.5 ||x - y||^2 <= ||x||^2 + ||y||^2 <= 2 radius^2``.
    """

    kind = "euclidean-ball"

    def __init__(self, dimension: int, radius: float = 1.0, theta0: float | None = None):
        if not radius > 0:
            raise ValueError("radius must be positive")
        super().__init__(dimension, math.sqrt(2.0) * radius if theta0 is None else theta0)
        self.radius = float(radius)

    def __repr__(self):
        return f"EuclideanBall(dimension={self.dimension}, radius={self.radius}, theta0={self.theta0})"

    def params(self):
        return {**super().params(), "radius": self.radius}

    def d(self, x):
        return 0.5 * float(np.dot(x, x))

    def grad_d(self, x):
        return np.asarray(x, dtype=np.float64)

    def bregman(self, x, y):
        diff = np.asarray(x, dtype=np.float64) - y
        return 0.5 * float(np.dot(diff, diff))

    def mirr(self, x, p):
        u = x - p
        nrm = math.sqrt(float(np.dot(u, u)))
        if nrm > self.radius:
            u *= self.radius / nrm
        return u

    def mirr_scaled(self, x, p, h):
        return _kernels.ball_step(x, p, h, self.radius)

    def violation(self, x):
        return max(0.0, float(np.linalg.norm(x)) - self.radius)

    def project(self, x):
        x = np.array(x, dtype=np.float64)
        nrm = float(np.linalg.norm(x))
        return x * (self.radius / nrm) if nrm > self.radius else x

    def random_point(self, rng):
        direction = self.boundary_point(rng)
        return direction * rng.uniform() ** (1.0 / self.dimension)

    def boundary_point(self, rng):
        z = rng.normal(self.dimension)
        return z * (self.radius / np.linalg.norm(z))


class EuclideanBox(ProxSetup):
    """Box ``lower <= x <= upper`` with ``d(x) = 0.5 ||x||_2^2``.

    The default ``theta0 = ||upper - lower||_2 / sqrt(2)`` is the exact
    supremum of ``0.5 ||x - y||^2`` over the box.
    """

    kind = "euclidean-box"

    def __init__(self, lower, upper, theta0: float | None = None):
        lower, upper = _frozen(lower), _frozen(upper)
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise DimensionError("lower and upper must be 1-d arrays of equal length")
        if np.any(lower > upper):
            raise ValueError("lower must not exceed upper")
        if theta0 is None:
            theta0 = float(np.linalg.norm(upper - lower)) / math.sqrt(2.0)
        super().__init__(lower.size, theta0)
        self.lower = lower
        self.upper = upper

    def __repr__(self):
        return f"EuclideanBox(dimension={self.dimension}, theta0={self.theta0})"

    def params(self):
        return {**super().params(), "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def d(self, x):
        return 0.5 * float(np.dot(x, x))

    def grad_d(self, x):
        return np.asarray(x, dtype=np.float64)

    def bregman(self, x, y):
        diff = np.asarray(x, dtype=np.float64) - y
        return 0.5 * float(np.dot(diff, diff))

    def mirr(self, x, p):
        return np.clip(x - p, self.lower, self.upper)

    def violation(self, x):
        return float(max(0.0, np.max(self.lower - x), np.max(x - self.upper)))

    def project(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), self.lower, self.upper)

    def random_point(self, rng):
        return self.lower + (self.upper - self.lower) * rng.uniform(self.dimension)

    def boundary_point(self, rng):
        corner = rng.uniform(self.dimension) < 0.5
        return np.where(corner, self.lower, self.upper)


class EntropySimplex(ProxSetup):
    """Probability simplex with the negative entropy ``d(x) = sum x_i log x_i``.

    ``V_x(y)`` is the Kullback-Leibler divergence ``KL(y || x)``, which is
    unbounded as ``x`` approaches the boundary; the default
    ``theta0 = sqrt(log n)`` bounds ``V_x(y)`` only for ``x`` the barycenter.
    """

    kind = "entropy-simplex"

    def __init__(self, dimension: int, theta0: float | None = None):
        if theta0 is None:
            theta0 = math.sqrt(math.log(dimension)) if dimension > 1 else 1.0
        super().__init__(dimension, theta0)

    def __repr__(self):
        return f"EntropySimplex(dimension={self.dimension}, theta0={self.theta0})"

    def d(self, x):
        return float(np.sum(xlogy(x, x)))

    def grad_d(self, x):
        return np.log(np.maximum(x, LOG_FLOOR)) + 1.0

    def bregman(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if np.any(x <= 0):
            raise DomainError("entropy Bregman divergence needs x > 0 componentwise")
        return max(0.0, float(np.sum(kl_div(y, x))))

    def mirr(self, x, p):
        z = np.log(np.maximum(x, LOG_FLOOR)) - p
        z -= z.max()
        u = np.exp(z)
        u /= u.sum()
        return u

    def violation(self, x):
        x = np.asarray(x, dtype=np.float64)
        return float(max(0.0, -x.min(), abs(x.sum() - 1.0)))

    def project(self, x):
        x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
        return x / x.sum()

    def random_point(self, rng):
        # Dirichlet(1, ..., 1): normalized exponentials, kept strictly interior
        e = np.maximum(rng.exponential(self.dimension), 1e-12)
        return e / e.sum()

    def barycenter(self) -> np.ndarray:
        return np.full(self.dimension, 1.0 / self.dimension)


def setup_from_params(params: dict) -> ProxSetup:
    """Inverse of :meth:`ProxSetup.params`."""
    kind = params["kind"]
    if kind == EuclideanBall.kind:
        return EuclideanBall(params["dimension"], params.get("radius", 1.0), params.get("theta0"))
    if kind == EuclideanBox.kind:
        return EuclideanBox(params["lower"], params["upper"], params.get("theta0"))
    if kind == EntropySimplex.kind:
        return EntropySimplex(params["dimension"], params.get("theta0"))
    raise ValueError(f"unknown prox setup kind {kind!r}")


def bregman(setup: ProxSetup, x, y) -> float:
    """Bregman divergence ``V_x(y)`` of ``setup``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    setup._dims(x, y)
    return setup.bregman(x, y)


def mirr(setup: ProxSetup, x, p) -> np.ndarray:
    """Mirror step from the feasible point ``x`` along the dual vector ``p``."""
    x = setup.check(x)
    p = np.asarray(p, dtype=np.float64)
    setup._dims(p)
    if not np.all(np.isfinite(p)):
        raise ValueError("dual vector has non-finite entries")
    return setup.mirr(x, p)


@dataclass(frozen=True)
class Theta0Report:
    """Outcome of a sampled check of ``sup V_x(y) <= theta0**2``."""

    max_divergence: float
    theta0_sq: float
    samples: int
    passed: bool


def check_theta0(setup: ProxSetup, samples: int, rng) -> Theta0Report:
    """Sample feasible pairs and compare the largest ``V_x(y)`` to ``theta0**2``.

    Half of the pairs are drawn on the boundary (where the supremum of the
    Euclidean divergences is attained), the rest from the interior.  This can
    only refute a bound, never prove one.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    worst = 0.0
    for k in range(samples):
        draw = setup.boundary_point if k % 2 == 0 else setup.random_point
        worst = max(worst, setup.bregman(draw(rng), draw(rng)))
    theta0_sq = setup.theta0**2
    return Theta0Report(worst, theta0_sq, samples, worst <= theta0_sq)
