"""Adaptive stochastic mirror descent for ``min f(x)`` s.t. ``g(x) <= 0``, ``x in Q``.

Two variants share one loop:

* ``standard`` evaluates every constraint component to decide whether the
  step is productive and, on non-productive steps, moves along the
  subgradient of the component attaining the max (smallest index on ties).
* ``modified`` scans the components in index order and stops at the first one
  exceeding ``epsilon``; that component's subgradient drives the step.

Step sizes are ``h_k = theta0 / sqrt(sum_{t<=k} M_t^2)`` with ``M_t`` the l2
norm of the drawn subgradient.  The run stops once
``N >= (2 theta0 / epsilon) sqrt(sum_{t<N} M_t^2)`` and returns the average of
the iterates at which productive steps were taken.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .errors import DimensionError, NoProductiveStepsError, OracleBoundError
from .oracle import ConstraintOracle, ObjectiveOracle
from .prox import EntropySimplex, ProxSetup
from .rng import RngStream

ALGORITHMS = ("standard", "modified")

#: Relative slack in the stopping comparison, so that the rule fires on exact
#: equality despite rounding in ``theta0**2`` (e.g. ``sqrt(2)**2``).
STOP_RTOL = 1e-12
#: Default cap on iterations when the oracles' bounds are unknown.
FALLBACK_CAP = 10_000_000
DEFAULT_TRACE_LIMIT = 100_000


def theoretical_bound(lipschitz_f: float, lipschitz_g: float, theta0: float, epsilon: float) -> int:
    """Worst-case iteration count ``ceil(4 max(M_f^2, M_g^2) theta0^2 / epsilon^2)``."""
    for name, v in (("theta0", theta0), ("epsilon", epsilon),
                    ("max(lipschitz_f, lipschitz_g)", max(lipschitz_f, lipschitz_g))):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if min(lipschitz_f, lipschitz_g) < 0:
        raise ValueError("Lipschitz bounds must be nonnegative")
    x = 4.0 * max(lipschitz_f, lipschitz_g) ** 2 * theta0**2 / epsilon**2
    return max(1, math.ceil(x * (1.0 - STOP_RTOL)))


def stopping_rule_holds(n: int, sum_sq: float, theta0: float, epsilon: float) -> bool:
    """``n >= (2 theta0 / epsilon) * sqrt(sum_sq)``, compared in squares."""
    return n * n >= (2.0 * theta0 / epsilon) ** 2 * sum_sq * (1.0 - STOP_RTOL)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one run.

    ``theta0=None`` takes the setup's constant and ``start=None`` the default
    start for the setup (barycenter of a simplex, ``(1/sqrt(n), ...)`` scaled
    by the radius for a ball, box midpoint otherwise).  ``max_iterations=None``
    means ``10 * theoretical_bound`` from the oracles' declared bounds.
    """

    epsilon: float
    theta0: float | None = None
    start: np.ndarray | None = None
    max_iterations: int | None = None
    seed: int = 0
    algorithm: str = "modified"
    trace_limit: int = DEFAULT_TRACE_LIMIT
    store_iterates: bool = False
    record_objective: bool = False
    check_bounds: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.theta0 is not None and not self.theta0 > 0:
            raise ValueError("theta0 must be positive")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.trace_limit < 1:
            raise ValueError("trace_limit must be positive")


@dataclass
class OracleCounters:
    objective_subgrad_calls: int = 0
    constraint_value_evals: int = 0
    constraint_subgrad_calls: int = 0


@dataclass(frozen=True)
class StepRecord:
    index: int
    productive: bool
    violated_index: int | None
    subgrad_norm: float
    step_size: float
    objective_value: float
    constraint_value: float
    objective_subgrad_calls: int
    constraint_value_evals: int
    constraint_subgrad_calls: int

    @property
    def kind(self) -> str:
        return "productive" if self.productive else "non-productive"


TRACE_COLUMNS = (
    "index", "kind", "violated_index", "subgrad_norm", "step_size", "objective_value",
    "constraint_value", "objective_subgrad_calls", "constraint_value_evals",
    "constraint_subgrad_calls",
)


class Trace:
    """Per-step records, thinned by stride doubling past ``limit`` entries.

    Step ``k`` is kept iff ``k % stride == 0``.  ``stride`` starts at 1 and
    doubles whenever more than ``limit`` records are held, so a run of
    ``N <= limit`` steps is recorded in full.

    ``constraint_value`` is ``g(x^k)`` except on non-productive steps of the
    modified algorithm, where only ``g_j(x^k)`` for the first violated ``j``
    is known (a lower bound on ``g(x^k)`` that still exceeds ``epsilon``).
    ``objective_value`` is NaN unless the run recorded objective values.
    ``iterates`` holds ``x^0, ..., x^N`` when requested and not thinned.
    """

    def __init__(self, limit: int = DEFAULT_TRACE_LIMIT, store_iterates: bool = False):
        self.limit = limit
        self.stride = 1
        self._cols: dict[str, list] = {name: [] for name in (
            "index", "productive", "violated", "subgrad_norm", "step_size", "objective_value",
            "constraint_value", "obj_calls", "con_evals", "con_sub")}
        self._iterates: list | None = [] if store_iterates else None

    @property
    def thinned(self) -> bool:
        return self.stride > 1

    @property
    def iterates(self) -> np.ndarray | None:
        if self._iterates is None:
            return None
        return np.array(self._iterates)

    def __len__(self):
        return len(self._cols["index"])

    def _thin(self):
        self.stride *= 2
        for name, col in self._cols.items():
            self._cols[name] = col[::2]
        self._iterates = None

    def column(self, name: str) -> np.ndarray:
        """One field as an array; names as in the constructor's storage."""
        return np.array(self._cols[name])

    def records(self) -> Iterator[StepRecord]:
        c = self._cols
        for i in range(len(self)):
            v = c["violated"][i]
            yield StepRecord(c["index"][i], c["productive"][i], None if v < 0 else v,
                             c["subgrad_norm"][i], c["step_size"][i], c["objective_value"][i],
                             c["constraint_value"][i], c["obj_calls"][i], c["con_evals"][i],
                             c["con_sub"][i])

    __iter__ = records

    def to_csv(self, handle=None) -> str:
        """Write records as CSV (floats in shortest round-trip form).

        Iterates, when present, go in extra columns ``x0, x1, ...`` holding
        ``x^k``; a final row with ``kind = final`` carries ``x^N``.
        """
        out = handle if handle is not None else io.StringIO()
        its = self.iterates
        n = 0 if its is None else its.shape[1]
        w = csv.writer(out, lineterminator="\n")
        w.writerow(list(TRACE_COLUMNS) + [f"x{i}" for i in range(n)])
        for r in self.records():
            row = [r.index, r.kind, "" if r.violated_index is None else r.violated_index,
                   repr(r.subgrad_norm), repr(r.step_size), repr(r.objective_value),
                   repr(r.constraint_value), r.objective_subgrad_calls, r.constraint_value_evals,
                   r.constraint_subgrad_calls]
            if its is not None:
                row += [repr(float(v)) for v in its[r.index]]
            w.writerow(row)
        if its is not None:
            w.writerow([len(its) - 1, "final"] + [""] * (len(TRACE_COLUMNS) - 2)
                       + [repr(float(v)) for v in its[-1]])
        return out.getvalue() if handle is None else ""

    @classmethod
    def from_csv(cls, text: str, limit: int = DEFAULT_TRACE_LIMIT) -> "Trace":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        ncols = len(TRACE_COLUMNS)
        has_x = len(header) > ncols
        tr = cls(limit=limit, store_iterates=has_x)
        idx = [int(r[0]) for r in body if r[1] != "final"]
        if len(idx) > 1:
            tr.stride = idx[1] - idx[0]
        for r in body:
            if r[1] == "final":
                tr._iterates.append(np.array([float(v) for v in r[ncols:]]))
                continue
            c = tr._cols
            c["index"].append(int(r[0]))
            c["productive"].append(r[1] == "productive")
            c["violated"].append(int(r[2]) if r[2] else -1)
            c["subgrad_norm"].append(float(r[3]))
            c["step_size"].append(float(r[4]))
            c["objective_value"].append(float(r[5]))
            c["constraint_value"].append(float(r[6]))
            c["obj_calls"].append(int(r[7]))
            c["con_evals"].append(int(r[8]))
            c["con_sub"].append(int(r[9]))
            if has_x:
                tr._iterates.append(np.array([float(v) for v in r[ncols:]]))
        return tr


@dataclass
class Solution:
    """Output of a run plus the certificates needed to audit it."""

    x_bar: np.ndarray | None
    iterations: int
    productive_count: int
    nonproductive_count: int
    objective_value_at_xbar: float
    constraint_value_at_xbar: float
    stopped_by: str
    trace: Trace
    totals: OracleCounters
    wall_time: float
    algorithm: str
    epsilon: float
    theta0: float
    seed: int
    sum_sq: float
    last_subgrad_norm: float
    max_subgrad_norm_f: float
    max_subgrad_norm_g: float
    lipschitz_f: float
    lipschitz_g: float
    theoretical_bound: int
    exact: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """JSON-friendly summary (the trace is serialized separately)."""
        d = {k: v for k, v in asdict(self).items() if k not in ("trace", "x_bar")}
        d["x_bar"] = None if self.x_bar is None else [float(v) for v in self.x_bar]
        return d


def default_start(setup: ProxSetup) -> np.ndarray:
    if isinstance(setup, EntropySimplex):
        return setup.barycenter()
    if setup.kind == "euclidean-ball":
        return np.full(setup.dimension, setup.radius / math.sqrt(setup.dimension))
    return 0.5 * (setup.lower + setup.upper)


def _prepare(setup, f, g, cfg):
    n = setup.dimension
    if f.dimension != n or g.dimension != n:
        raise DimensionError(f"setup has dimension {n}, objective {f.dimension}, constraints {g.dimension}")
    theta0 = setup.theta0 if cfg.theta0 is None else float(cfg.theta0)
    if theta0 < setup.theta0 * (1.0 - STOP_RTOL):
        raise ValueError(f"theta0={theta0} is below the setup's constant {setup.theta0}")
    x0 = setup.check(default_start(setup) if cfg.start is None else cfg.start)
    bound = theoretical_bound(f.lipschitz_bound, g.lipschitz_bound, theta0, cfg.epsilon)
    cap = cfg.max_iterations
    if cap is None:
        cap = 10 * bound if math.isfinite(f.lipschitz_bound + g.lipschitz_bound) else FALLBACK_CAP
    return theta0, x0, bound, cap


def _run(setup: ProxSetup, f: ObjectiveOracle, g: ConstraintOracle, cfg: SolverConfig,
         modified: bool) -> Solution:
    theta0, x, bound, cap = _prepare(setup, f, g, cfg)
    eps = cfg.epsilon
    m = g.count
    rng = RngStream(cfg.seed)
    rng_f = rng.split("objective")
    rng_g = rng.split("constraint")
    coef = (2.0 * theta0 / eps) ** 2 * (1.0 - STOP_RTOL)
    batch = getattr(f, "batch_size", 1)
    tol_f = f.lipschitz_bound * (1 + 1e-12) + 1e-12
    tol_g = g.lipschitz_bound * (1 + 1e-12) + 1e-12
    check_bounds = cfg.check_bounds
    record_obj = cfg.record_objective

    trace = Trace(cfg.trace_limit, cfg.store_iterates)
    c = trace._cols
    c_index, c_prod, c_viol = c["index"], c["productive"], c["violated"]
    c_norm, c_h, c_fv, c_gv = c["subgrad_norm"], c["step_size"], c["objective_value"], c["constraint_value"]
    c_fc, c_ge, c_gs = c["obj_calls"], c["con_evals"], c["con_sub"]
    iterates = trace._iterates
    if iterates is not None:
        iterates.append(x.copy())

    totals = OracleCounters()
    xsum = np.zeros(setup.dimension)
    n_prod = 0
    sum_sq = 0.0
    max_f = max_g = 0.0
    M = 0.0
    stride = 1
    N = 0
    stopped_by = "cap"
    mirr_scaled = setup.mirr_scaled
    scan_first, scan_max = g.scanners()
    nan = math.nan
    # load compiled kernels before the clock starts; scans have no side effects
    scan_first(x, eps)
    scan_max(x)

    t0 = time.perf_counter()
    while True:
        if modified:
            j, visited, gval = scan_first(x, eps)
            productive = j < 0
        else:
            j, gval = scan_max(x)
            visited = m
            productive = gval <= eps
        totals.constraint_value_evals += visited

        if productive:
            p = f.stochastic_subgrad(x, rng_f)
            totals.objective_subgrad_calls += batch
            xsum += x
            n_prod += 1
            M = math.sqrt(float(np.dot(p, p)))
            if M > max_f:
                max_f = M
                if check_bounds and M > tol_f:
                    raise OracleBoundError(f"objective subgradient norm {M} exceeds declared bound {f.lipschitz_bound}")
        else:
            p = g.stochastic_subgrad(j, x, rng_g)
            totals.constraint_subgrad_calls += 1
            M = math.sqrt(float(np.dot(p, p)))
            if M > max_g:
                max_g = M
                if check_bounds and M > tol_g:
                    raise OracleBoundError(f"constraint subgradient norm {M} exceeds declared bound {g.lipschitz_bound}")

        sum_sq += M * M
        if sum_sq > 0.0:
            h = theta0 / math.sqrt(sum_sq)
            x_next = mirr_scaled(x, p, h)
        else:
            # zero displacement for any finite step size
            h = 0.0
            x_next = x

        if N % stride == 0:
            c_index.append(N)
            c_prod.append(productive)
            c_viol.append(-1 if productive else j)
            c_norm.append(M)
            c_h.append(h)
            c_fv.append(f.value(x) if record_obj else nan)
            c_gv.append(gval)
            c_fc.append(batch if productive else 0)
            c_ge.append(visited)
            c_gs.append(0 if productive else 1)
            if len(c_index) > trace.limit:
                trace._thin()
                stride = trace.stride
                c_index, c_prod, c_viol = c["index"], c["productive"], c["violated"]
                c_norm, c_h, c_fv, c_gv = c["subgrad_norm"], c["step_size"], c["objective_value"], c["constraint_value"]
                c_fc, c_ge, c_gs = c["obj_calls"], c["con_evals"], c["con_sub"]
                iterates = None
        x = x_next
        N += 1
        if iterates is not None:
            iterates.append(x.copy())

        if N * N >= coef * sum_sq:
            stopped_by = "criterion"
            break
        if N >= cap:
            break
    wall = time.perf_counter() - t0

    if n_prod == 0:
        if stopped_by == "criterion":
            raise NoProductiveStepsError(
                f"stopping rule met after {N} steps with no productive step: "
                f"g(x) > {eps} at every iterate (constraints likely infeasible on Q)",
                iterations=N, nonproductive=N, sum_sq=sum_sq)
        x_bar, f_bar, g_bar = None, nan, nan
    else:
        x_bar = xsum / n_prod
        f_bar = f.value(x_bar)
        g_bar = g.max_value(x_bar)

    return Solution(
        x_bar=x_bar, iterations=N, productive_count=n_prod, nonproductive_count=N - n_prod,
        objective_value_at_xbar=f_bar, constraint_value_at_xbar=g_bar, stopped_by=stopped_by,
        trace=trace, totals=totals, wall_time=wall, algorithm="modified" if modified else "standard",
        epsilon=eps, theta0=theta0, seed=cfg.seed, sum_sq=sum_sq, last_subgrad_norm=M,
        max_subgrad_norm_f=max_f, max_subgrad_norm_g=max_g, lipschitz_f=f.lipschitz_bound,
        lipschitz_g=g.lipschitz_bound, theoretical_bound=bound,
        exact=type(f).__name__ == "ExactSubgradients",
    )


def run_standard(setup: ProxSetup, f: ObjectiveOracle, g: ConstraintOracle, cfg: SolverConfig) -> Solution:
    """Adaptive stochastic mirror descent using the full max-type constraint."""
    return _run(setup, f, g, cfg, modified=False)


def run_modified(setup: ProxSetup, f: ObjectiveOracle, g: ConstraintOracle, cfg: SolverConfig) -> Solution:
    """Variant that uses the first violated constraint on non-productive steps."""
    return _run(setup, f, g, cfg, modified=True)


def solve(setup: ProxSetup, f: ObjectiveOracle, g: ConstraintOracle, cfg: SolverConfig) -> Solution:
    """Dispatch on ``cfg.algorithm``."""
    return _run(setup, f, g, cfg, modified=cfg.algorithm == "modified")
