"""Independent checks of solver output.

* :func:`grid_search_reference` finds a reference optimum of a tiny instance
  (``n <= 3``) by exhaustive evaluation on a grid.
* :func:`audit_solution` re-derives feasibility, the iteration bound and the
  stopping-rule arithmetic from the instance instead of trusting the run.
* :func:`audit_lemma1` replays a deterministic trace and checks the one-step
  mirror-descent inequality at every step.
* :func:`expectation_audit` estimates ``E f(x_bar) - f*`` over many seeds.

Reports list one check per line (name, status, measured, threshold) and
serialize to JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, EmptyFeasibleGridError, MismatchError, TraceThinnedError
from .prox import FEAS_TOL, EntropySimplex, EuclideanBall, EuclideanBox, ProxSetup
from .solver import Solution, SolverConfig, Trace, solve, stopping_rule_holds, theoretical_bound

LEMMA1_TOL = 1e-7
MAX_GRID_DIMENSION = 3
STATUSES = ("pass", "fail", "warn", "info")


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    measured: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        text = f"{self.name} {self.status} measured={self.measured!r} threshold={self.threshold!r}"
        return f"{text} ({self.detail})" if self.detail else text


@dataclass(frozen=True)
class GridReference:
    """Best feasible grid point; ``slack = M_f * spacing`` bounds its error."""

    f_star: float
    x_star: np.ndarray
    resolution: int
    spacing: float
    slack: float
    feasible_points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_star"] = [float(v) for v in self.x_star]
        d["method"] = f"grid-search resolution {self.resolution}"
        return d


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)
    reference: GridReference | None = None
    extra: dict = field(default_factory=dict)

    def add(self, name, status, measured, threshold, detail="") -> Check:
        if isinstance(status, bool):
            status = "pass" if status else "fail"
        if status not in STATUSES:
            raise ValueError(f"unknown status {status!r}")
        c = Check(name, status, float(measured), float(threshold), detail)
        self.checks.append(c)
        return c

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.checks.extend(other.checks)
        self.reference = self.reference or other.reference
        self.extra.update(other.extra)
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [c.line() for c in self.checks]
        if self.reference is not None:
            r = self.reference
            lines.append(f"reference f*={r.f_star!r} x*={[float(v) for v in r.x_star]} "
                         f"resolution={r.resolution} slack={r.slack!r}")
        lines.append(f"overall {'pass' if self.passed else 'fail'}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "reference": None if self.reference is None else self.reference.to_dict(),
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# -- grid search -------------------------------------------------------------------


def _grid_slices(setup: ProxSetup, resolution: int):
    """Yield ``(points, spacing)`` blocks, one per value of the first coordinate."""
    n = setup.dimension
    if isinstance(setup, EntropySimplex):
        spacing = 1.0 / resolution
        if n == 1:
            yield np.ones((1, 1)), spacing
            return
        for i in range(resolution + 1):
            rest = resolution - i
            if n == 2:
                ks = np.array([[i, rest]])
            else:
                j = np.arange(rest + 1)
                ks = np.column_stack([np.full_like(j, i), j, rest - j])
            yield ks / resolution, spacing
        return
    if isinstance(setup, EuclideanBall):
        lo, hi = np.full(n, -setup.radius), np.full(n, setup.radius)
    elif isinstance(setup, EuclideanBox):
        lo, hi = setup.lower, setup.upper
    else:
        raise TypeError(f"no grid for {type(setup).__name__}")
    axes = [np.linspace(lo[i], hi[i], resolution + 1) for i in range(n)]
    spacing = float(np.max((hi - lo) / resolution))
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, n - 1) if n > 1 else None
    for v in axes[0]:
        if rest is None:
            pts = np.array([[v]])
        else:
            pts = np.column_stack([np.full(len(rest), v), rest])
        if isinstance(setup, EuclideanBall):
            pts = pts[np.linalg.norm(pts, axis=1) <= setup.radius + FEAS_TOL]
        yield pts, spacing


def grid_search_reference(instance, resolution: int, objective=None) -> GridReference:
    """Minimize ``f`` over grid points of ``Q`` with ``g(x) <= 0``.

    ``resolution`` is the number of grid intervals per axis (on the simplex,
    the denominator of the barycentric grid).  The reported slack
    ``M_f * spacing`` dominates ``M_f`` times the distance from any point of
    ``Q`` to the nearest grid point when ``n <= 3``.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    setup = instance.prox_setup()
    if setup.dimension > MAX_GRID_DIMENSION:
        raise DimensionError(f"grid search supports n <= {MAX_GRID_DIMENSION}, got n = {setup.dimension}")
    f = objective if objective is not None else instance.objective()
    alpha, beta = instance.alpha, instance.beta
    best_f, best_x, count, spacing = math.inf, None, 0, math.nan
    for pts, spacing in _grid_slices(setup, resolution):
        if len(pts) == 0:
            continue
        pts = pts[np.max(pts @ alpha.T + beta, axis=1) <= 0.0]
        if len(pts) == 0:
            continue
        count += len(pts)
        vals = f.values(pts)
        k = int(np.argmin(vals))
        if vals[k] < best_f:
            best_f, best_x = float(vals[k]), pts[k].copy()
    if best_x is None:
        raise EmptyFeasibleGridError(f"no grid point with g(x) <= 0 at resolution {resolution}")
    return GridReference(best_f, best_x, resolution, spacing, f.lipschitz_bound * spacing, count)


def resolution_for_slack(instance, slack: float) -> int:
    """Smallest resolution whose grid slack is at most ``slack``."""
    setup = instance.prox_setup()
    m_f = instance.objective().lipschitz_bound
    if isinstance(setup, EntropySimplex):
        width = 1.0
    elif isinstance(setup, EuclideanBall):
        width = 2.0 * setup.radius
    else:
        width = float(np.max(setup.upper - setup.lower))
    return max(1, math.ceil(m_f * width / slack))


# -- solution audit ------------------------------------------------------------------


def _solution_fields(sol) -> dict:
    return sol.to_dict() if isinstance(sol, Solution) else dict(sol)


def audit_solution(sol, instance, reference: GridReference | None = None) -> VerificationReport:
    """Check a run against quantities recomputed from the instance.

    ``sol`` is a :class:`Solution` or its ``to_dict()`` form (as stored in a
    result file).  Checks: ``feasibility`` (``g(x_bar) <= epsilon``),
    ``iteration-bound`` (``N`` against the bound from the instance's declared
    Lipschitz constants), ``step-counts``, ``stopping-rule`` (fires at ``N``
    and not at ``N - 1``), ``reported-values``, and with a reference either
    ``optimality-gap`` (exact runs) or ``gap`` (stochastic runs, info only).
    """
    d = _solution_fields(sol)
    n = instance.dimension
    rid = d.get("instance_id")
    if rid is not None and rid != instance.instance_id:
        raise MismatchError(f"result is for instance {rid!r}, not {instance.instance_id!r}")
    x_bar = d.get("x_bar")
    if x_bar is not None:
        x_bar = np.asarray(x_bar, dtype=np.float64)
        if x_bar.shape != (n,):
            raise MismatchError(f"x_bar has shape {x_bar.shape}, instance dimension is {n}")

    f, g = instance.objective(), instance.constraints()
    eps, theta0 = float(d["epsilon"]), float(d["theta0"])
    N, n_i, n_j = int(d["iterations"]), int(d["productive_count"]), int(d["nonproductive_count"])
    rep = VerificationReport(reference=reference)

    if x_bar is None:
        rep.add("feasibility", False, math.nan, eps, "no productive step, x_bar undefined")
        g_bar = f_bar = math.nan
    else:
        g_bar, f_bar = g.max_value(x_bar), f.value(x_bar)
        rep.add("feasibility", g_bar <= eps, g_bar, eps)

    bound = theoretical_bound(f.lipschitz_bound, g.lipschitz_bound, theta0, eps)
    rep.add("iteration-bound", N <= bound, N, bound)
    rep.add("step-counts", n_i + n_j == N and n_i >= 0 and n_j >= 0, n_i + n_j, N)

    s, m_last = float(d["sum_sq"]), float(d["last_subgrad_norm"])
    need = 2.0 * theta0 / eps * math.sqrt(s)
    if d["stopped_by"] == "criterion":
        fires = stopping_rule_holds(N, s, theta0, eps)
        earlier = N > 1 and stopping_rule_holds(N - 1, max(s - m_last * m_last, 0.0), theta0, eps)
        detail = "" if fires and not earlier else ("rule not met at N" if not fires else "rule already met at N-1")
        rep.add("stopping-rule", fires and not earlier, N, need, detail)
    else:
        rep.add("stopping-rule", "warn", N, need, "stopped by iteration cap")

    if x_bar is not None:
        dev = max(abs(g_bar - float(d["constraint_value_at_xbar"])) / (1.0 + abs(g_bar)),
                  abs(f_bar - float(d["objective_value_at_xbar"])) / (1.0 + abs(f_bar)))
        rep.add("reported-values", dev <= 1e-9, dev, 1e-9)

    if reference is not None and x_bar is not None:
        gap = f_bar - reference.f_star
        if d.get("exact"):
            rep.add("optimality-gap", gap <= eps + reference.slack, gap, eps + reference.slack)
        else:
            rep.add("gap", "info", gap, eps + reference.slack, "stochastic run: aggregate across seeds")
    return rep


# -- per-step inequality ---------------------------------------------------------------


def audit_lemma1(trace: Trace, setup: ProxSetup, objective, constraints, x_star,
                 tol: float = LEMMA1_TOL) -> VerificationReport:
    """Check ``h (phi(y) - phi(x*)) <= h^2/2 ||grad phi(y)||^2 + V_y(x*) - V_z(x*)``.

    ``y`` and ``z`` are consecutive iterates, ``phi`` is ``f`` on productive
    steps and ``g_j`` on the others.  Gradients are recomputed exactly, so
    the trace must come from a run with exact subgradients, with iterates
    stored and no thinning.
    """
    its = trace.iterates
    if trace.thinned or its is None:
        raise TraceThinnedError("per-step audit needs an unthinned trace with iterates")
    if len(its) != len(trace) + 1:
        raise TraceThinnedError(f"trace has {len(trace)} steps but {len(its)} iterates")
    x_star = np.asarray(x_star, dtype=np.float64)
    f_star = objective.value(x_star)
    worst, flagged = -math.inf, []
    for rec in trace.records():
        y, z, h = its[rec.index], its[rec.index + 1], rec.step_size
        if rec.productive:
            phi_y, phi_x, grad = objective.value(y), f_star, objective.exact_subgrad(y)
        else:
            j = rec.violated_index
            phi_y, phi_x = constraints.value(j, y), constraints.value(j, x_star)
            grad = constraints.exact_subgrad(j, y)
        lhs = h * (phi_y - phi_x)
        rhs = 0.5 * h * h * float(grad @ grad) + setup.bregman(y, x_star) - setup.bregman(z, x_star)
        excess = lhs - rhs
        worst = max(worst, excess)
        if excess > tol:
            flagged.append(rec.index)
    rep = VerificationReport()
    steps = len(trace)
    rep.add("lemma1", not flagged, worst, tol, f"{steps - len(flagged)}/{steps} steps pass")
    rep.extra["lemma1_flagged_steps"] = flagged
    return rep


# -- expectation over seeds ---------------------------------------------------------


def expectation_audit(instance, reference: GridReference, epsilon: float, seeds,
                      algorithm: str = "modified", start=None) -> VerificationReport:
    """Sample mean of ``f(x_bar) - f*`` over seeds against ``epsilon + slack``.

    Passes when the mean is within the threshold, warns when it exceeds the
    threshold by at most two standard errors, and fails otherwise.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two seeds for a standard error")
    setup, f, g = instance.prox_setup(), instance.objective(), instance.constraints()
    x0 = instance.start() if start is None else start
    gaps, infeasible = [], 0
    for seed in seeds:
        cfg = SolverConfig(epsilon=epsilon, start=x0, seed=seed, algorithm=algorithm)
        sol = solve(setup, f, g, cfg)
        gaps.append(sol.objective_value_at_xbar - reference.f_star)
        infeasible += not sol.constraint_value_at_xbar <= epsilon
    gaps = np.array(gaps)
    mean = float(gaps.mean())
    se = float(gaps.std(ddof=1) / math.sqrt(len(gaps)))
    threshold = epsilon + reference.slack
    status = "pass" if mean <= threshold else ("warn" if mean <= threshold + 2 * se else "fail")
    rep = VerificationReport(reference=reference)
    rep.add("expected-gap", status, mean, threshold, f"{len(seeds)} seeds, standard error {se:.3g}")
    rep.add("feasibility-all-seeds", infeasible == 0, infeasible, 0)
    rep.extra.update({"gaps": gaps.tolist(), "mean_gap": mean, "standard_error": se})
    return rep
