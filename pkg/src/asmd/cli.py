"""Command-line front end: ``asmd {generate,solve,bench,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 iteration cap
reached (``solve`` without ``--allow-cap``), 4 run failure (no productive
step before the stopping rule fired).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import problems
from .errors import AsmdError, NoProductiveStepsError
from .problems import DISTRIBUTIONS, START_RULES, ProblemInstance
from .solver import ALGORITHMS, SolverConfig, Trace, solve

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_CAP, EXIT_RUN = 0, 1, 2, 3, 4
OUTPUT_ENV = "ASMD_OUTPUT_DIR"
DEFAULT_EPSILON = 0.05

#: Frozen column order of the per-run CSV (see docs/FORMATS.md).
RESULT_COLUMNS = (
    "instance_id", "algorithm", "epsilon", "seed", "iterations", "productive_steps",
    "nonproductive_steps", "wall_time_s", "objective_at_xbar", "constraint_at_xbar",
    "constraint_value_evals", "constraint_subgrad_calls", "objective_subgrad_calls",
    "theoretical_bound", "stopped_by", "total_time_s",
)
BENCH_COLUMNS = RESULT_COLUMNS + ("repeat", "status", "message")
SUMMARY_COLUMNS = (
    "algorithm", "epsilon", "runs", "failures", "median_iterations", "mean_iterations",
    "median_wall_time_s", "mean_wall_time_s", "median_constraint_value_evals",
    "mean_constraint_value_evals", "mean_nonproductive_fraction", "max_constraint_at_xbar",
)
SCALING_COLUMNS = (
    "algorithm", "epsilon", "inv_epsilon", "median_iterations", "median_wall_time_s",
    "slope_iterations", "slope_wall_time",
)
TIME_COLUMNS = ("wall_time_s", "total_time_s")


class UsageError(Exception):
    """Bad flag combination; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def result_row(sol, instance_id: str, total_time: float) -> dict:
    t = sol.totals
    return {
        "instance_id": instance_id, "algorithm": sol.algorithm, "epsilon": sol.epsilon,
        "seed": sol.seed, "iterations": sol.iterations, "productive_steps": sol.productive_count,
        "nonproductive_steps": sol.nonproductive_count, "wall_time_s": sol.wall_time,
        "objective_at_xbar": sol.objective_value_at_xbar,
        "constraint_at_xbar": sol.constraint_value_at_xbar,
        "constraint_value_evals": t.constraint_value_evals,
        "constraint_subgrad_calls": t.constraint_subgrad_calls,
        "objective_subgrad_calls": t.objective_subgrad_calls,
        "theoretical_bound": sol.theoretical_bound, "stopped_by": sol.stopped_by,
        "total_time_s": total_time,
    }


def write_rows(path: Path, columns, rows, append: bool = False) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def rows_to_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


# -- generate -----------------------------------------------------------------------


def cmd_generate(args) -> int:
    ex = args.example
    if ex == "fts" and args.dist is not None:
        raise UsageError("--dist does not apply to --example fts (anchors are uniform)")
    if ex == "simplex" and args.N is not None:
        raise UsageError("--N does not apply to --example simplex")
    for name in ("n", "m", "N"):
        v = getattr(args, name)
        if v is not None and v < 1:
            raise UsageError(f"--{name} must be positive")
    if ex != "simplex" and args.N is None:
        raise UsageError(f"--N is required for --example {ex}")
    n, m, dist = args.n, args.m, args.dist or "uniform"
    if ex == "1":
        inst = problems.make_example1(args.N, n, m, dist, args.seed)
    elif ex == "2":
        inst = problems.make_example2(args.N, n, m, dist, args.seed)
    elif ex == "fts":
        inst = problems.make_fts(args.N, n, m, args.seed)
    else:
        inst = problems.make_simplex(n, m, dist, args.seed)
    out = Path(args.out) if args.out else Path("instances") / f"{inst.instance_id}.prob"
    inst.save(out)
    print(inst.summary())
    print(f"wrote {out}")
    return EXIT_OK


# -- solve ----------------------------------------------------------------------------


def _config(inst: ProblemInstance, algorithm, epsilon, seed, x0, cap, theta0, trace_iterates=False):
    return SolverConfig(epsilon=epsilon, theta0=theta0, start=inst.start(x0), max_iterations=cap,
                        seed=seed, algorithm=algorithm, store_iterates=trace_iterates)


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    inst = ProblemInstance.load(args.instance)
    if args.exact and not inst.objective().has_exact_subgrad:
        raise UsageError("this objective has no exact subgradient")
    cfg = _config(inst, args.alg, args.eps, args.seed, args.x0, args.cap, args.theta0, args.iterates)
    sol = solve(inst.prox_setup(), inst.objective(exact=args.exact), inst.constraints(), cfg)
    total = time.perf_counter() - t0

    out_dir = Path(args.out_dir) if args.out_dir else default_output_dir()
    stem = f"{inst.instance_id}_{sol.algorithm}_eps{sol.epsilon!r}_seed{sol.seed}"
    row = result_row(sol, inst.instance_id, total)
    results = Path(args.results) if args.results else out_dir / "results.csv"
    write_rows(results, RESULT_COLUMNS, [row], append=True)
    record = {**sol.to_dict(), "instance_id": inst.instance_id, "instance_path": str(args.instance),
              "total_time": total, "start_rule": args.x0 or inst.metadata.get("x0")}
    (out_dir / f"{stem}.json").write_text(json.dumps(record, indent=2))
    if args.trace or args.iterates:
        (out_dir / f"{stem}.trace.csv").write_text(sol.trace.to_csv())
    sys.stdout.write(rows_to_text(RESULT_COLUMNS, [row]))
    if sol.stopped_by == "cap" and not args.allow_cap:
        print(f"iteration cap {sol.iterations} reached before the stopping rule", file=sys.stderr)
        return EXIT_CAP
    return EXIT_OK


# -- bench ----------------------------------------------------------------------------


@dataclass
class RunManifest:
    """Cross product of algorithms, epsilons and seeds on one instance."""

    instance: str
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    epsilons: list = field(default_factory=lambda: [DEFAULT_EPSILON])
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str | None = None
    repeat: int = 1
    emit_trace: bool = False
    x0: str | None = None
    cap: int | None = None
    exact: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise UsageError("the seed list is empty")
        if not self.epsilons:
            raise UsageError("the epsilon list is empty")
        if not self.algorithms or any(a not in ALGORITHMS for a in self.algorithms):
            raise UsageError(f"algorithms must be drawn from {ALGORITHMS}")
        if any(not e > 0 for e in self.epsilons):
            raise UsageError("epsilons must be positive")
        if self.repeat < 1:
            raise UsageError("repeat must be positive")

    @classmethod
    def from_file(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        try:
            return cls(**data)
        except TypeError as exc:
            raise UsageError(f"bad manifest {path}: {exc}") from exc

    def cells(self):
        for alg in self.algorithms:
            for eps in self.epsilons:
                for seed in self.seeds:
                    for rep in range(self.repeat):
                        yield alg, float(eps), int(seed), rep


_INSTANCE_CACHE: dict = {}


def _run_cell(manifest: RunManifest, cell, out_dir: str) -> dict:
    alg, eps, seed, rep = cell
    base = {"algorithm": alg, "epsilon": eps, "seed": seed, "repeat": rep}
    t0 = time.perf_counter()
    try:
        inst = _INSTANCE_CACHE.get(manifest.instance)
        if inst is None:
            inst = _INSTANCE_CACHE[manifest.instance] = ProblemInstance.load(manifest.instance)
        base["instance_id"] = inst.instance_id
        cfg = _config(inst, alg, eps, seed, manifest.x0, manifest.cap, None)
        sol = solve(inst.prox_setup(), inst.objective(exact=manifest.exact), inst.constraints(), cfg)
        row = result_row(sol, inst.instance_id, time.perf_counter() - t0)
        row.update(repeat=rep, status="ok" if sol.stopped_by == "criterion" else "cap", message="")
        if manifest.emit_trace:
            name = f"{inst.instance_id}_{alg}_eps{eps!r}_seed{seed}_r{rep}.trace.csv"
            (Path(out_dir) / "traces" / name).write_text(sol.trace.to_csv())
        return row
    except (AsmdError, ValueError, OSError) as exc:
        base.update(status="error", message=f"{type(exc).__name__}: {exc}",
                    total_time_s=time.perf_counter() - t0)
        return base


def loglog_slope(inv_eps, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(inv_eps)``."""
    x, y = np.log(np.asarray(inv_eps, float)), np.log(np.asarray(values, float))
    if len(x) < 2 or np.ptp(x) == 0:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def summarize(rows):
    """Per-(algorithm, epsilon) aggregates and the log-log scaling table."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["epsilon"]), []).append(r)
    summary = []
    for (alg, eps), rs in groups.items():
        ok = [r for r in rs if r["status"] == "ok"]
        s = {"algorithm": alg, "epsilon": eps, "runs": len(rs), "failures": len(rs) - len(ok)}
        if ok:
            it = [r["iterations"] for r in ok]
            wt = [r["wall_time_s"] for r in ok]
            ce = [r["constraint_value_evals"] for r in ok]
            s.update(median_iterations=statistics.median(it), mean_iterations=statistics.fmean(it),
                     median_wall_time_s=statistics.median(wt), mean_wall_time_s=statistics.fmean(wt),
                     median_constraint_value_evals=statistics.median(ce),
                     mean_constraint_value_evals=statistics.fmean(ce),
                     mean_nonproductive_fraction=statistics.fmean(
                         r["nonproductive_steps"] / r["iterations"] for r in ok),
                     max_constraint_at_xbar=max(r["constraint_at_xbar"] for r in ok))
        summary.append(s)
    scaling = []
    for alg in dict.fromkeys(s["algorithm"] for s in summary):
        pts = sorted((s for s in summary if s["algorithm"] == alg and "median_iterations" in s),
                     key=lambda s: s["epsilon"], reverse=True)
        inv = [1.0 / s["epsilon"] for s in pts]
        slope_it = loglog_slope(inv, [s["median_iterations"] for s in pts])
        slope_t = loglog_slope(inv, [max(s["median_wall_time_s"], 1e-12) for s in pts])
        for s, ie in zip(pts, inv):
            scaling.append({"algorithm": alg, "epsilon": s["epsilon"], "inv_epsilon": ie,
                            "median_iterations": s["median_iterations"],
                            "median_wall_time_s": s["median_wall_time_s"],
                            "slope_iterations": slope_it, "slope_wall_time": slope_t})
    return summary, scaling


def run_bench(manifest: RunManifest, jobs: int = 1):
    out_dir = Path(manifest.output_dir) if manifest.output_dir else default_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    if manifest.emit_trace:
        (out_dir / "traces").mkdir(exist_ok=True)
    cells = list(manifest.cells())
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, manifest, c, str(out_dir)) for c in cells]
            rows = [fut.result() for fut in futures]
    else:
        rows = [_run_cell(manifest, c, str(out_dir)) for c in cells]
    summary, scaling = summarize(rows)
    write_rows(out_dir / "results.csv", BENCH_COLUMNS, rows)
    write_rows(out_dir / "summary.csv", SUMMARY_COLUMNS, summary)
    write_rows(out_dir / "scaling.csv", SCALING_COLUMNS, scaling)
    slopes = {s["algorithm"]: {"iterations": s["slope_iterations"], "wall_time": s["slope_wall_time"]}
              for s in scaling}
    (out_dir / "bench.json").write_text(json.dumps(
        {"manifest": asdict(manifest), "summary": summary, "slopes": slopes}, indent=2))
    return rows, summary, scaling


def _float_list(text: str) -> list[float]:
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        if "/" in tok:
            num, den = tok.split("/")
            out.append(float(num) / float(den))
        else:
            out.append(float(tok))
    return out


def _int_list(text: str) -> list[int]:
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        if "-" in tok[1:]:
            lo, hi = tok.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return out


def cmd_bench(args) -> int:
    if args.manifest:
        manifest = RunManifest.from_file(args.manifest)
        if args.out_dir:
            manifest.output_dir = args.out_dir
    else:
        if not args.instance:
            raise UsageError("bench needs --manifest or --instance")
        try:
            manifest = RunManifest(
                instance=args.instance, algorithms=args.alg or list(ALGORITHMS),
                epsilons=_float_list(args.eps), seeds=_int_list(args.seeds),
                output_dir=args.out_dir, repeat=args.repeat, emit_trace=args.trace,
                x0=args.x0, cap=args.cap, exact=args.exact)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    rows, summary, scaling = run_bench(manifest, jobs=args.jobs)
    sys.stdout.write(rows_to_text(SUMMARY_COLUMNS, summary))
    for alg in dict.fromkeys(s["algorithm"] for s in scaling):
        slope = next(s["slope_iterations"] for s in scaling if s["algorithm"] == alg)
        print(f"{alg}: log-log slope of median iterations vs 1/epsilon = {slope:.4f}")
    failed = sum(r["status"] == "error" for r in rows)
    if failed:
        print(f"{failed} of {len(rows)} runs failed; see results.csv", file=sys.stderr)
    return EXIT_OK


# -- verify ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    from . import verify

    if args.lemma1 and not args.trace:
        raise UsageError("--lemma1 needs --trace (a trace written with --iterates)")
    if not args.result and not args.seeds:
        raise UsageError("verify needs --result and/or --seeds")
    inst = ProblemInstance.load(args.instance)
    reference = None
    if inst.dimension <= verify.MAX_GRID_DIMENSION:
        res = args.resolution or verify.resolution_for_slack(inst, args.slack)
        reference = verify.grid_search_reference(inst, res)
    report = verify.VerificationReport(reference=reference)
    record = None
    if args.result:
        record = json.loads(Path(args.result).read_text())
        report.extend(verify.audit_solution(record, inst, reference))
    if args.lemma1:
        if reference is None:
            raise UsageError("--lemma1 needs a grid reference (n <= 3)")
        trace = Trace.from_csv(Path(args.trace).read_text())
        report.extend(verify.audit_lemma1(trace, inst.prox_setup(), inst.objective(exact=True),
                                          inst.constraints(), reference.x_star))
    if args.seeds:
        if reference is None:
            raise UsageError("--seeds needs a grid reference (n <= 3)")
        eps = args.eps if args.eps is not None else (record["epsilon"] if record else DEFAULT_EPSILON)
        alg = args.alg or (record["algorithm"] if record else "modified")
        report.extend(verify.expectation_audit(inst, reference, eps, range(args.seeds), alg,
                                               start=inst.start(args.x0)))
    print(report.to_text())
    if args.json:
        Path(args.json).write_text(report.to_json())
    return EXIT_OK if report.passed else EXIT_VERIFY


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="asmd", description="Adaptive stochastic mirror descent experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a benchmark instance")
    g.add_argument("--example", required=True, choices=["1", "2", "fts", "simplex"])
    g.add_argument("--n", type=int, required=True, help="dimension")
    g.add_argument("--m", type=int, required=True, help="number of linear constraints")
    g.add_argument("--N", type=int, help="number of summands (anchors for fts)")
    g.add_argument("--dist", choices=DISTRIBUTIONS, help="entry distribution (default uniform)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output path (default ./instances/<id>.prob)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run one algorithm on an instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--alg", choices=ALGORITHMS, default="modified")
    s.add_argument("--eps", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--theta0", type=float, help="override the setup's theta0 (must not be smaller)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--x0", choices=START_RULES, help="start rule (default: the instance's)")
    s.add_argument("--cap", type=int, help="iteration cap (default 10 x theoretical bound)")
    s.add_argument("--allow-cap", action="store_true", help="exit 0 even if the cap is reached")
    s.add_argument("--exact", action="store_true", help="use exact objective subgradients")
    s.add_argument("--trace", action="store_true", help="write the per-step trace CSV")
    s.add_argument("--iterates", action="store_true", help="include iterates in the trace")
    s.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
    s.add_argument("--results", help="CSV file to append the result row to")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="algorithm x epsilon x seed sweep")
    b.add_argument("--manifest", help="JSON manifest (fields as RunManifest)")
    b.add_argument("--instance")
    b.add_argument("--alg", action="append", choices=ALGORITHMS, help="repeatable; default both")
    b.add_argument("--eps", default=str(DEFAULT_EPSILON), help="comma list, fractions allowed (1/64)")
    b.add_argument("--seeds", default="0", help="comma list or ranges, e.g. 0-9")
    b.add_argument("--repeat", type=int, default=1)
    b.add_argument("--x0", choices=START_RULES)
    b.add_argument("--cap", type=int)
    b.add_argument("--exact", action="store_true")
    b.add_argument("--trace", action="store_true", help="write one trace per run")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out-dir")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="audit a result against its instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--result", help="result JSON written by solve")
    v.add_argument("--trace", help="trace CSV written by solve --iterates")
    v.add_argument("--lemma1", action="store_true", help="per-step inequality audit")
    v.add_argument("--seeds", type=int, help="run an expectation audit over this many seeds")
    v.add_argument("--eps", type=float)
    v.add_argument("--alg", choices=ALGORITHMS)
    v.add_argument("--x0", choices=START_RULES)
    v.add_argument("--resolution", type=int, help="grid intervals per axis")
    v.add_argument("--slack", type=float, default=0.01, help="target grid slack if no resolution")
    v.add_argument("--json", help="also write the report as JSON")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoProductiveStepsError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    except (AsmdError, ValueError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VERIFY if getattr(args, "command", None) == "verify" else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
