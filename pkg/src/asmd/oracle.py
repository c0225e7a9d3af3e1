"""First-order oracles.

Objectives expose exact values, a stochastic subgradient drawn from a caller
owned :class:`~asmd.rng.RngStream`, and (when cheap) the exact subgradient.
Each declares ``lipschitz_bound``: an almost-sure bound on the l2 norm of
every stochastic subgradient it can return.

Constraint oracles describe ``g(x) = max_j g_j(x)`` component by component,
with exact values and stochastic subgradients of single components.
Component indices are 0-based.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from functools import partial

import numpy as np

from . import _kernels
from .errors import DimensionError, InfeasiblePointError
from .prox import FEAS_TOL


def _matrix(a, name, ndim=2) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    if a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    a.setflags(write=False)
    return a


class ObjectiveOracle(ABC):
    """Convex objective ``f`` with a stochastic subgradient oracle."""

    #: whether :meth:`exact_subgrad` is implemented
    has_exact_subgrad = True

    dimension: int
    lipschitz_bound: float

    @abstractmethod
    def value(self, x: np.ndarray) -> float:
        """Exact value ``f(x)``."""

    @abstractmethod
    def stochastic_subgrad(self, x: np.ndarray, rng) -> np.ndarray:
        """Unbiased estimate of a subgradient of ``f`` at ``x``."""

    def exact_subgrad(self, x: np.ndarray) -> np.ndarray:
        """The subgradient whose expectation ``stochastic_subgrad`` matches."""
        raise NotImplementedError(f"{type(self).__name__} has no exact subgradient")

    def values(self, xs: np.ndarray) -> np.ndarray:
        """``f`` at each row of ``xs``."""
        return np.array([self.value(x) for x in xs])

    def _check_x(self, x):
        if np.shape(x) != (self.dimension,):
            raise DimensionError(f"expected x of shape ({self.dimension},), got {np.shape(x)}")


class _FiniteSum(ObjectiveOracle):
    """Shared sampling logic for averages of ``count`` components."""

    count: int
    batch_size: int = 1

    def _component_subgrad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stochastic_subgrad(self, x, rng):
        if self.batch_size == 1:
            return self._component_subgrad(rng.index(self.count), x)
        g = np.zeros(self.dimension)
        for _ in range(self.batch_size):
            g += self._component_subgrad(rng.index(self.count), x)
        return g / self.batch_size


class AbsLinearObjective(_FiniteSum):
    """``f(x) = (1/N) sum_i |<a_i, x> - b_i|``.

    One draw samples ``i`` uniformly and returns ``sign(<a_i, x> - b_i) a_i``
    (with ``sign(0) = 0``).  ``lipschitz_bound = max_i ||a_i||``.
    """

    def __init__(self, a, b, batch_size: int = 1):
        a = _matrix(a, "a")
        b = _matrix(b, "b", ndim=1)
        if a.shape[0] != b.shape[0] or a.shape[0] < 1:
            raise DimensionError(f"a has {a.shape[0]} rows but b has {b.shape[0]} entries")
        self.a, self.b = a, b
        self.count, self.dimension = a.shape
        self.batch_size = int(batch_size)
        self.lipschitz_bound = float(np.max(np.linalg.norm(a, axis=1)))

    def value(self, x):
        self._check_x(x)
        return float(np.mean(np.abs(self.a @ x - self.b)))

    def values(self, xs):
        return np.mean(np.abs(xs @ self.a.T - self.b), axis=1)

    def _component_subgrad(self, i, x):
        r = float(np.dot(self.a[i], x)) - self.b[i]
        if r > 0:
            return self.a[i].copy()
        if r < 0:
            return -self.a[i]
        return np.zeros(self.dimension)

    def exact_subgrad(self, x):
        self._check_x(x)
        return np.sign(self.a @ x - self.b) @ self.a / self.count


class QuadraticSumObjective(_FiniteSum):
    """``f(x) = (1/N) sum_i 0.5 <C_i x, x>`` with each ``C_i`` symmetrized.

    ``lipschitz_bound = max_i ||C_i||_2 * radius``, valid on the ball of the
    given radius.
    """

    def __init__(self, c, radius: float = 1.0, batch_size: int = 1):
        c = np.array(c, dtype=np.float64)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise DimensionError(f"C must have shape (N, n, n), got {c.shape}")
        c = 0.5 * (c + c.transpose(0, 2, 1))
        c.setflags(write=False)
        self.c = c
        self.count, self.dimension = c.shape[0], c.shape[1]
        self.batch_size = int(batch_size)
        self.radius = float(radius)
        self._mean = c.mean(axis=0)
        spectral = [np.max(np.abs(np.linalg.eigvalsh(ci))) for ci in c]
        self.lipschitz_bound = float(max(spectral)) * self.radius

    def value(self, x):
        self._check_x(x)
        return 0.5 * float(x @ self._mean @ x)

    def values(self, xs):
        return 0.5 * np.einsum("ki,ij,kj->k", xs, self._mean, xs)

    def _component_subgrad(self, i, x):
        return self.c[i] @ x

    def exact_subgrad(self, x):
        self._check_x(x)
        return self._mean @ x


class SumOfNormsObjective(_FiniteSum):
    """``f(x) = sum_k ||x - A_k||_2`` (a plain sum, not an average).

    A draw samples ``k`` uniformly and returns ``N (x - A_k) / ||x - A_k||``,
    or zero when ``x = A_k``; hence ``lipschitz_bound = N``.
    """

    def __init__(self, anchors, batch_size: int = 1):
        anchors = _matrix(anchors, "anchors")
        if anchors.shape[0] < 1:
            raise DimensionError("need at least one anchor")
        self.anchors = anchors
        self.count, self.dimension = anchors.shape
        self.batch_size = int(batch_size)
        self.lipschitz_bound = float(self.count)

    def value(self, x):
        self._check_x(x)
        return float(np.sum(np.linalg.norm(x - self.anchors, axis=1)))

    def values(self, xs):
        out = np.zeros(len(xs))
        for anchor in self.anchors:
            out += np.linalg.norm(xs - anchor, axis=1)
        return out

    def _component_subgrad(self, i, x):
        d = x - self.anchors[i]
        nrm = math.sqrt(float(np.dot(d, d)))
        if nrm == 0.0:
            return np.zeros(self.dimension)
        d *= self.count / nrm
        return d

    def exact_subgrad(self, x):
        self._check_x(x)
        d = x - self.anchors
        nrm = np.linalg.norm(d, axis=1)
        safe = np.where(nrm > 0, nrm, 1.0)
        return np.sum(np.where(nrm[:, None] > 0, d / safe[:, None], 0.0), axis=0)


class SimplexColumnSampler(ObjectiveOracle):
    """``f(x) = 0.5 <A x, x>`` on the probability simplex.

    ``A`` is symmetrized at construction.  A draw picks ``xi`` with
    probabilities ``x_1, ..., x_n`` and returns column ``A[:, xi]``; its mean
    is ``A x``, the gradient.  ``lipschitz_bound`` is the largest column norm.
    """

    def __init__(self, a):
        a = np.array(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"A must be square, got shape {a.shape}")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.a = a
        self.dimension = a.shape[0]
        self.lipschitz_bound = float(np.max(np.linalg.norm(a, axis=0)))

    def value(self, x):
        self._check_x(x)
        return 0.5 * float(x @ self.a @ x)

    def values(self, xs):
        return 0.5 * np.einsum("ki,ij,kj->k", xs, self.a, xs)

    def stochastic_subgrad(self, x, rng):
        self._check_x(x)
        if x.min() < -FEAS_TOL or abs(x.sum() - 1.0) > FEAS_TOL:
            raise InfeasiblePointError("column sampling needs x on the probability simplex")
        xi = rng.categorical(np.maximum(x, 0.0))
        # symmetric: row xi is column xi, and rows are contiguous
        return self.a[xi].copy()

    def exact_subgrad(self, x):
        self._check_x(x)
        return self.a @ x


class ExactSubgradients(ObjectiveOracle):
    """Deterministic view of an objective: every draw is the exact subgradient."""

    def __init__(self, inner: ObjectiveOracle):
        if not inner.has_exact_subgrad:
            raise ValueError("wrapped oracle has no exact subgradient")
        self.inner = inner
        self.dimension = inner.dimension
        self.lipschitz_bound = inner.lipschitz_bound

    def value(self, x):
        return self.inner.value(x)

    def values(self, xs):
        return self.inner.values(xs)

    def stochastic_subgrad(self, x, rng):
        return self.inner.exact_subgrad(x)

    def exact_subgrad(self, x):
        return self.inner.exact_subgrad(x)


class ConstraintOracle(ABC):
    """Max-type constraint ``g(x) = max_j g_j(x)`` over ``count`` components.

    Subclasses implement :meth:`value` and :meth:`stochastic_subgrad`; the
    scans below fall back to evaluating components one at a time.
    """

    count: int
    dimension: int
    lipschitz_bound: float

    @abstractmethod
    def value(self, j: int, x: np.ndarray) -> float:
        """Exact value of component ``j``."""

    @abstractmethod
    def stochastic_subgrad(self, j: int, x: np.ndarray, rng) -> np.ndarray:
        """Unbiased subgradient estimate of component ``j``."""

    def exact_subgrad(self, j: int, x: np.ndarray) -> np.ndarray:
        """A subgradient of component ``j`` (the mean of the stochastic one)."""
        raise NotImplementedError(f"{type(self).__name__} has no exact subgradient")

    def _check_j(self, j):
        if not 0 <= j < self.count:
            raise IndexError(f"constraint index {j} out of range for {self.count} components")

    def values(self, x) -> np.ndarray:
        return np.array([self.value(j, x) for j in range(self.count)])

    def max_value(self, x) -> float:
        return self.scan_max(x)[1]

    def first_violated(self, x, eps: float) -> int | None:
        """Smallest ``j`` with ``g_j(x) > eps``, or ``None``."""
        j, _, _ = self.scan_first(x, eps)
        return None if j < 0 else j

    def scan_max(self, x) -> tuple[int, float]:
        """``(j, g(x))`` with ``j`` the smallest index attaining the max."""
        best_j, best = 0, self.value(0, x)
        for j in range(1, self.count):
            v = self.value(j, x)
            if v > best:
                best_j, best = j, v
        return best_j, best

    def scanners(self):
        """``(scan_first, scan_max)`` callables for trusted inputs.

        The solver uses these in its inner loop; subclasses may return
        versions that skip argument validation.
        """
        return self.scan_first, self.scan_max

    def scan_first(self, x, eps: float) -> tuple[int, int, float]:
        """Short-circuit scan; see :func:`asmd._kernels.scan_first`."""
        best = -math.inf
        for j in range(self.count):
            v = self.value(j, x)
            if v > eps:
                return j, j + 1, v
            best = max(best, v)
        return -1, self.count, best


class LinearMaxConstraints(ConstraintOracle):
    """Components ``g_j(x) = <alpha_j, x> + beta_j``.

    Subgradients are exact (``alpha_j``) and ``lipschitz_bound`` is
    ``max_j ||alpha_j||``.
    """

    def __init__(self, alpha, beta):
        alpha = np.ascontiguousarray(_matrix(alpha, "alpha"))
        beta = _matrix(beta, "beta", ndim=1)
        if alpha.shape[0] != beta.shape[0] or alpha.shape[0] < 1:
            raise DimensionError(f"alpha has {alpha.shape[0]} rows but beta has {beta.shape[0]} entries")
        alpha.setflags(write=False)
        self.alpha, self.beta = alpha, beta
        self.count, self.dimension = alpha.shape
        self.lipschitz_bound = float(np.max(np.linalg.norm(alpha, axis=1)))

    def _x(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dimension,):
            raise DimensionError(f"expected x of shape ({self.dimension},), got {x.shape}")
        return x

    def value(self, j, x):
        self._check_j(j)
        return _kernels.row_value(self.alpha, self.beta, j, self._x(x))

    def values(self, x):
        return _kernels.all_values(self.alpha, self.beta, self._x(x))

    def scan_max(self, x):
        j, v = _kernels.scan_max(self.alpha, self.beta, self._x(x))
        return int(j), float(v)

    def scan_first(self, x, eps):
        j, visited, v = _kernels.scan_first(self.alpha, self.beta, self._x(x), float(eps))
        return int(j), int(visited), float(v)

    def scanners(self):
        return (partial(_kernels.scan_first, self.alpha, self.beta),
                partial(_kernels.scan_max, self.alpha, self.beta))

    def stochastic_subgrad(self, j, x, rng):
        self._check_j(j)
        return self.alpha[j]

    def exact_subgrad(self, j, x):
        self._check_j(j)
        return self.alpha[j].copy()
