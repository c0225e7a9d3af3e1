"""Benchmark problem generation and ``.prob`` instance files.

Generators
----------
* :func:`make_example1` -- ``f(x) = (1/N) sum |<a_i, x> - b_i|``; the rows of a
  random ``N x (n+1)`` matrix give ``a_i`` (first ``n`` columns) and ``b_i``.
* :func:`make_example2` -- ``f(x) = (1/N) sum 0.5 <C_i x, x>`` with random
  symmetric positive definite ``C_i``.
* :func:`make_fts` -- ``f(x) = sum ||x - A_k||`` with anchors in the unit ball.
* :func:`make_simplex` -- ``f(x) = 0.5 <A x, x>`` on the probability simplex.

The first three use the Toeplitz constraints of :func:`toeplitz_constraints`
on the unit ball with ``theta0 = sqrt(2)``.  All randomness comes from
``RngStream(seed, "problems/<kind>")``, so ``(kind, parameters, seed)``
regenerates an instance exactly.

See ``docs/FORMATS.md`` for the byte layout of ``.prob`` files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import FormatError
from .oracle import (AbsLinearObjective, ExactSubgradients, LinearMaxConstraints,
                     ObjectiveOracle, QuadraticSumObjective, SimplexColumnSampler,
                     SumOfNormsObjective)
from .prox import ProxSetup, setup_from_params
from .rng import ALGORITHM as RNG_ALGORITHM
from .rng import RngStream

FORMAT_MAGIC = b"ASMD-PROB\n"
FORMAT_VERSION = 1

DISTRIBUTIONS = ("gumbel", "exponential", "uniform")
OBJECTIVE_KINDS = ("abs-linear", "quadratic-sum", "sum-of-norms", "simplex-quadratic")
START_RULES = ("uniform-norm", "origin", "barycenter")

GUMBEL_LOC, GUMBEL_SCALE = 1.0, 2.0
EXPONENTIAL_SCALE = 1.0
PD_MARGIN = 0.1
FTS_SHRINK = 0.999
SIMPLEX_SLACK = 0.05


def toeplitz_constraints(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Linear constraints from the ``m x (n+1)`` Toeplitz matrix ``B``.

    ``B`` has first row all ones and first column ``(1, ..., m)``; ``alpha``
    is ``B`` without its last column and ``beta`` is that last column.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    b = scipy.linalg.toeplitz(np.arange(1.0, m + 1.0), np.ones(n + 1))
    return np.ascontiguousarray(b[:, :n]), b[:, n].copy()


def generate_random_matrix(rows: int, cols: int, dist: str, rng: RngStream) -> np.ndarray:
    """I.i.d. entries from ``dist``.

    ``gumbel`` has mode 1 and scale 2, ``exponential`` scale 1 and
    ``uniform`` is on ``[0, 1)``; all are inverse-CDF transforms of the
    stream's uniforms.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    shape = (rows, cols)
    if dist == "gumbel":
        return rng.gumbel(shape, loc=GUMBEL_LOC, scale=GUMBEL_SCALE)
    if dist == "exponential":
        return rng.exponential(shape, scale=EXPONENTIAL_SCALE)
    if dist == "uniform":
        return rng.uniform(shape)
    raise ValueError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")


@dataclass
class ProblemInstance:
    """Serialized problem data plus provenance.

    ``objective_data`` keys by kind: ``abs-linear`` -> ``a``, ``b``;
    ``quadratic-sum`` -> ``c`` (shape ``(N, n, n)``); ``sum-of-norms`` ->
    ``anchors``; ``simplex-quadratic`` -> ``a``.
    """

    objective_kind: str
    objective_data: dict
    alpha: np.ndarray
    beta: np.ndarray
    setup_params: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.objective_kind!r}")

    @property
    def instance_id(self) -> str:
        return self.metadata.get("id", "instance")

    @property
    def dimension(self) -> int:
        return int(self.setup_params["dimension"])

    def prox_setup(self) -> ProxSetup:
        return setup_from_params(self.setup_params)

    def objective(self, exact: bool = False, batch_size: int = 1) -> ObjectiveOracle:
        d = self.objective_data
        kind = self.objective_kind
        if kind == "abs-linear":
            f = AbsLinearObjective(d["a"], d["b"], batch_size=batch_size)
        elif kind == "quadratic-sum":
            f = QuadraticSumObjective(d["c"], radius=self.setup_params.get("radius", 1.0),
                                      batch_size=batch_size)
        elif kind == "sum-of-norms":
            f = SumOfNormsObjective(d["anchors"], batch_size=batch_size)
        else:
            f = SimplexColumnSampler(d["a"])
        return ExactSubgradients(f) if exact else f

    def constraints(self) -> LinearMaxConstraints:
        return LinearMaxConstraints(self.alpha, self.beta)

    def start(self, rule: str | None = None) -> np.ndarray:
        """Starting point by rule name; defaults to the instance's own rule."""
        rule = rule or self.metadata.get("x0", "uniform-norm")
        n = self.dimension
        if rule == "uniform-norm":
            return np.full(n, self.setup_params.get("radius", 1.0) / math.sqrt(n))
        if rule == "origin":
            return np.zeros(n)
        if rule == "barycenter":
            return np.full(n, 1.0 / n)
        raise ValueError(f"unknown start rule {rule!r}; expected one of {START_RULES}")

    def summary(self) -> str:
        shapes = ", ".join(f"{k}{list(v.shape)}" for k, v in self.objective_data.items())
        md = self.metadata
        return (f"{self.instance_id}: {self.objective_kind} ({shapes}); "
                f"{self.alpha.shape[0]} linear constraints; {self.setup_params['kind']} "
                f"n={self.dimension} theta0={self.setup_params['theta0']:.6g}; "
                f"dist={md.get('distribution')} seed={md.get('seed')}")

    # -- serialization ---------------------------------------------------------

    def _arrays(self):
        for name, arr in self.objective_data.items():
            yield f"objective/{name}", arr
        yield "constraints/alpha", self.alpha
        yield "constraints/beta", self.beta

    def to_bytes(self) -> bytes:
        entries, chunks, offset = [], [], 0
        for name, arr in self._arrays():
            data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            entries.append({"name": name, "dtype": "<f8", "shape": list(arr.shape),
                            "offset": offset, "nbytes": len(data)})
            chunks.append(data)
            offset += len(data)
        header = {
            "format_version": FORMAT_VERSION,
            "objective_kind": self.objective_kind,
            "setup": self.setup_params,
            "metadata": self.metadata,
            "arrays": entries,
            "payload_bytes": offset,
        }
        text = json.dumps(header, indent=2, sort_keys=True).encode() + b"\n"
        prefix = FORMAT_MAGIC + f"version {FORMAT_VERSION}\nheader-bytes {len(text)}\n".encode()
        return prefix + text + b"".join(chunks)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ProblemInstance":
        if not raw.startswith(FORMAT_MAGIC):
            raise FormatError("not an instance file (bad magic line)")
        pos = len(FORMAT_MAGIC)
        lines = []
        for _ in range(2):
            end = raw.index(b"\n", pos)
            lines.append(raw[pos:end].decode())
            pos = end + 1
        try:
            version = int(lines[0].split()[1])
            hlen = int(lines[1].split()[1])
        except (IndexError, ValueError) as exc:
            raise FormatError(f"malformed preamble {lines!r}") from exc
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        header = json.loads(raw[pos:pos + hlen])
        payload = memoryview(raw)[pos + hlen:]
        if len(payload) != header["payload_bytes"]:
            raise FormatError(f"payload has {len(payload)} bytes, header says {header['payload_bytes']}")
        arrays = {}
        for e in header["arrays"]:
            buf = payload[e["offset"]:e["offset"] + e["nbytes"]]
            arrays[e["name"]] = np.frombuffer(buf, dtype=e["dtype"]).astype(np.float64).reshape(e["shape"])
        objective_data = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("objective/")}
        return cls(header["objective_kind"], objective_data, arrays["constraints/alpha"],
                   arrays["constraints/beta"], header["setup"], header["metadata"])

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "ProblemInstance":
        return cls.from_bytes(Path(path).read_bytes())

    def equals(self, other: "ProblemInstance") -> bool:
        """Bitwise equality of all arrays and equality of all metadata."""
        if (self.objective_kind, self.setup_params, self.metadata) != (
                other.objective_kind, other.setup_params, other.metadata):
            return False
        mine, theirs = dict(self._arrays()), dict(other._arrays())
        return mine.keys() == theirs.keys() and all(
            mine[k].shape == theirs[k].shape and mine[k].tobytes() == theirs[k].tobytes() for k in mine)


def _ball_setup(n: int) -> dict:
    return {"kind": "euclidean-ball", "dimension": n, "radius": 1.0, "theta0": math.sqrt(2.0)}


def _metadata(kind, dist, seed, N, n, m, x0, **extra) -> dict:
    tag = {"abs-linear": "ex1", "quadratic-sum": "ex2", "sum-of-norms": "fts",
           "simplex-quadratic": "simplex"}[kind]
    ident = f"{tag}-{dist}-N{N}-n{n}-m{m}-s{seed}" if dist else f"{tag}-N{N}-n{n}-m{m}-s{seed}"
    md = {"id": ident, "generator": kind, "distribution": dist, "seed": seed,
          "N": N, "n": n, "m": m, "x0": x0, "rng": RNG_ALGORITHM}
    if dist == "gumbel":
        md["distribution_params"] = {"loc": GUMBEL_LOC, "scale": GUMBEL_SCALE}
    elif dist == "exponential":
        md["distribution_params"] = {"scale": EXPONENTIAL_SCALE}
    elif dist == "uniform":
        md["distribution_params"] = {"low": 0.0, "high": 1.0}
    md.update(extra)
    return md


def make_example1(N: int, n: int, m: int, dist: str, seed: int) -> ProblemInstance:
    """Finite sum of absolute linear residuals with Toeplitz constraints."""
    rng = RngStream(seed, "problems/abs-linear")
    full = generate_random_matrix(N, n + 1, dist, rng)
    alpha, beta = toeplitz_constraints(m, n)
    return ProblemInstance(
        "abs-linear", {"a": np.ascontiguousarray(full[:, :n]), "b": full[:, n].copy()},
        alpha, beta, _ball_setup(n), _metadata("abs-linear", dist, seed, N, n, m, "uniform-norm"))


def _positive_definite(r: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetrize ``r``; shift by ``(|lambda_min| + 0.1) I`` unless already PD."""
    s = 0.5 * (r + r.T)
    lam_min = float(np.linalg.eigvalsh(s)[0])
    shift = 0.0
    if lam_min <= 0:
        shift = abs(lam_min) + PD_MARGIN
        s[np.diag_indices(len(s))] += shift
    np.linalg.cholesky(s)  # raises LinAlgError unless positive definite
    return s, shift


def _repair_note(shifts) -> dict:
    return {"rule": "shift by |lambda_min| + margin when not PD", "margin": PD_MARGIN,
            "shifted": int(sum(v > 0 for v in shifts)), "max_shift": float(max(shifts))}


def make_example2(N: int, n: int, m: int, dist: str, seed: int) -> ProblemInstance:
    """Finite sum of quadratics with random positive definite matrices.

    Each raw draw ``R`` is symmetrized to ``S = (R + R^T) / 2``; if ``S`` is
    not positive definite it is shifted by ``(|lambda_min(S)| + 0.1) I``.
    The shift count and largest shift are recorded in the metadata.
    """
    rng = RngStream(seed, "problems/quadratic-sum")
    c = np.empty((N, n, n))
    shifts = []
    for i in range(N):
        c[i], shift = _positive_definite(generate_random_matrix(n, n, dist, rng))
        shifts.append(shift)
    alpha, beta = toeplitz_constraints(m, n)
    md = _metadata("quadratic-sum", dist, seed, N, n, m, "uniform-norm", pd_repair=_repair_note(shifts))
    return ProblemInstance("quadratic-sum", {"c": c}, alpha, beta, _ball_setup(n), md)


def make_fts(N: int, n: int, m: int, seed: int) -> ProblemInstance:
    """Sum-of-distances problem with anchors drawn in the unit ball.

    Coordinates are uniform on ``[0, 1)``; anchors with norm above one are
    rescaled to norm ``0.999``.
    """
    rng = RngStream(seed, "problems/sum-of-norms")
    anchors = rng.uniform((N, n))
    norms = np.linalg.norm(anchors, axis=1)
    outside = norms > 1.0
    anchors[outside] *= (FTS_SHRINK / norms[outside])[:, None]
    alpha, beta = toeplitz_constraints(m, n)
    md = _metadata("sum-of-norms", None, seed, N, n, m, "origin",
                   anchor_rescale={"rule": "norm > 1 -> scaled to norm 0.999",
                                   "rescaled": int(outside.sum())})
    return ProblemInstance("sum-of-norms", {"anchors": anchors}, alpha, beta, _ball_setup(n), md)


def make_simplex(n: int, m: int, dist: str, seed: int) -> ProblemInstance:
    """Quadratic ``0.5 <A x, x>`` over the simplex with ``m`` linear constraints.

    ``A`` is a random matrix made positive definite as in
    :func:`make_example2`, so ``f`` is convex.  Constraint rows are random rows
    centred to zero mean, and ``beta = -0.05``, so the barycenter satisfies
    every constraint with margin 0.05.
    """
    rng = RngStream(seed, "problems/simplex-quadratic")
    a, shift = _positive_definite(generate_random_matrix(n, n, dist, rng))
    alpha = generate_random_matrix(m, n, dist, rng)
    alpha -= alpha.mean(axis=1, keepdims=True)
    beta = np.full(m, -SIMPLEX_SLACK)
    setup = {"kind": "entropy-simplex", "dimension": n, "theta0": math.sqrt(math.log(n)) if n > 1 else 1.0}
    md = _metadata("simplex-quadratic", dist, seed, n, n, m, "barycenter",
                   constraint_rule="rows centred to zero mean, beta = -0.05",
                   pd_repair=_repair_note([shift]))
    return ProblemInstance("simplex-quadratic", {"a": a}, np.ascontiguousarray(alpha), beta, setup, md)
