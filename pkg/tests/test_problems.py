import math

import numpy as np
import pytest

from asmd.errors import FormatError
from asmd.problems import (ProblemInstance, generate_random_matrix, make_example1, make_example2,
                           make_fts, make_simplex, toeplitz_constraints)
from asmd.rng import RngStream

# the 10 x 15 matrix B displayed for m = 10, n = 14, transcribed row by row
DISPLAYED_B = np.array([[float(v) for v in row.split()] for row in """
1 1 1 1 1 1 1 1 1 1 1 1 1 1 1
2 1 1 1 1 1 1 1 1 1 1 1 1 1 1
3 2 1 1 1 1 1 1 1 1 1 1 1 1 1
4 3 2 1 1 1 1 1 1 1 1 1 1 1 1
5 4 3 2 1 1 1 1 1 1 1 1 1 1 1
6 5 4 3 2 1 1 1 1 1 1 1 1 1 1
7 6 5 4 3 2 1 1 1 1 1 1 1 1 1
8 7 6 5 4 3 2 1 1 1 1 1 1 1 1
9 8 7 6 5 4 3 2 1 1 1 1 1 1 1
10 9 8 7 6 5 4 3 2 1 1 1 1 1 1
""".strip().splitlines()])


def test_displayed_toeplitz_matrix():
    alpha, beta = toeplitz_constraints(10, 14)
    b = np.column_stack([alpha, beta])
    assert b.shape == (10, 15)
    assert np.array_equal(b[0], np.ones(15))
    assert np.array_equal(b[:, 0], np.arange(1, 11))
    assert np.array_equal(b[9], [10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 1, 1, 1, 1, 1])
    assert np.array_equal(b, DISPLAYED_B)


def test_small_toeplitz_cases():
    alpha, beta = toeplitz_constraints(2, 2)
    assert np.array_equal(alpha, [[1, 1], [2, 1]]) and np.array_equal(beta, [1, 1])
    alpha, beta = toeplitz_constraints(1, 5)
    assert np.array_equal(alpha, np.ones((1, 5))) and np.array_equal(beta, [1.0])


@pytest.mark.parametrize("m,n", [(3, 7), (8, 4), (50, 100)])
def test_toeplitz_diagonals_constant(m, n):
    alpha, beta = toeplitz_constraints(m, n)
    b = np.column_stack([alpha, beta])
    assert np.array_equal(b[1:, 1:], b[:-1, :-1])


def test_random_matrix_moments():
    u = generate_random_matrix(100, 1000, "uniform", RngStream(0))
    assert u.min() >= 0 and u.max() < 1 and abs(u.mean() - 0.5) < 0.005
    e = generate_random_matrix(100, 1000, "exponential", RngStream(0))
    assert e.min() >= 0 and abs(e.mean() - 1.0) < 0.02
    g = generate_random_matrix(100, 1000, "gumbel", RngStream(0))
    # Gumbel(mode 1, scale 2): mean 1 + 2 * Euler-Mascheroni, median 1 - 2 ln ln 2
    assert abs(g.mean() - (1 + 2 * np.euler_gamma)) < 0.03
    assert abs(np.median(g) - (1 - 2 * math.log(math.log(2)))) < 0.03
    again = generate_random_matrix(100, 1000, "gumbel", RngStream(0))
    assert np.array_equal(g, again)
    with pytest.raises(ValueError):
        generate_random_matrix(2, 2, "cauchy", RngStream(0))


def test_example_shapes():
    inst = make_example1(75, 1500, 50, "gumbel", 1)
    assert inst.objective_data["a"].shape == (75, 1500) and inst.objective_data["b"].shape == (75,)
    assert inst.alpha.shape == (50, 1500)
    assert inst.setup_params["theta0"] == math.sqrt(2) and inst.metadata["x0"] == "uniform-norm"
    fts = make_fts(100, 1000, 250, 1)
    assert fts.objective_data["anchors"].shape == (100, 1000) and fts.alpha.shape == (250, 1000)
    assert fts.metadata["x0"] == "origin"


def test_fts_anchors_in_ball():
    inst = make_fts(200, 3, 5, 4)
    norms = np.linalg.norm(inst.objective_data["anchors"], axis=1)
    assert np.all(norms <= 1.0)
    rescaled = inst.metadata["anchor_rescale"]["rescaled"]
    assert 0 < rescaled < 200
    assert np.sum(np.isclose(norms, 0.999)) == rescaled


def test_example2_matrices_positive_definite():
    for dist in ("gumbel", "exponential", "uniform"):
        inst = make_example2(10, 6, 5, dist, 2)
        for c in inst.objective_data["c"]:
            assert np.array_equal(c, c.T)
            np.linalg.cholesky(c)
            assert np.linalg.eigvalsh(c)[0] > 0
        assert inst.metadata["pd_repair"]["shifted"] >= 0


def test_simplex_instance_barycenter_feasible():
    inst = make_simplex(5, 7, "exponential", 3)
    g = inst.constraints()
    assert g.max_value(inst.start()) == pytest.approx(-0.05, abs=1e-12)
    a = inst.objective_data["a"]
    assert np.linalg.eigvalsh(a)[0] > 0


def test_generation_is_reproducible():
    assert make_example1(20, 5, 3, "exponential", 9).equals(make_example1(20, 5, 3, "exponential", 9))
    assert not make_example1(20, 5, 3, "exponential", 9).equals(make_example1(20, 5, 3, "exponential", 8))


@pytest.mark.parametrize("make", [
    lambda: make_example1(15, 4, 3, "gumbel", 1),
    lambda: make_example2(3, 4, 3, "exponential", 1),
    lambda: make_fts(6, 4, 3, 1),
    lambda: make_simplex(4, 3, "uniform", 1),
])
def test_file_round_trip_is_bit_exact(tmp_path, make):
    inst = make()
    path = inst.save(tmp_path / "x.prob")
    back = ProblemInstance.load(path)
    assert back.equals(inst)
    assert back.to_bytes() == path.read_bytes()
    for name, arr in inst.objective_data.items():
        assert back.objective_data[name].tobytes() == arr.tobytes()


def test_header_is_readable_and_payload_little_endian(tmp_path):
    inst = make_example1(2, 3, 2, "uniform", 0)
    raw = inst.to_bytes()
    lines = raw.split(b"\n", 3)
    assert lines[0] == b"ASMD-PROB" and lines[1] == b"version 1"
    hlen = int(lines[2].split()[1])
    start = len(lines[0]) + len(lines[1]) + len(lines[2]) + 3
    payload = raw[start + hlen:]
    first = np.frombuffer(payload[:8], dtype="<f8")[0]
    assert first == inst.objective_data["a"][0, 0]


def test_corrupt_files_rejected():
    raw = make_example1(2, 3, 2, "uniform", 0).to_bytes()
    with pytest.raises(FormatError):
        ProblemInstance.from_bytes(b"NOPE" + raw)
    with pytest.raises(FormatError):
        ProblemInstance.from_bytes(raw[:-8])
    with pytest.raises(FormatError):
        ProblemInstance.from_bytes(raw.replace(b"version 1", b"version 9", 1))
