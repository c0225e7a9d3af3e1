import numpy as np
import pytest

from asmd.errors import DimensionError, InfeasiblePointError
from asmd.oracle import (AbsLinearObjective, ExactSubgradients, LinearMaxConstraints,
                         QuadraticSumObjective, SimplexColumnSampler, SumOfNormsObjective)
from asmd.prox import EntropySimplex, EuclideanBall
from asmd.rng import RngStream


def mc_mean(oracle, x, draws, seed=0):
    rng = RngStream(seed)
    return np.mean([oracle.stochastic_subgrad(x, rng) for _ in range(draws)], axis=0)


# -- documented values ---------------------------------------------------------------


def test_abs_linear_values():
    f = AbsLinearObjective([[1.0, 0.0]], [0.0])
    assert f.value(np.array([0.5, 0.0])) == 0.5
    assert np.array_equal(f.exact_subgrad(np.array([0.5, 0.0])), [1.0, 0.0])

def test_abs_linear_mirrored_rows():
    # both rows give |x_1|, so at x_1 = 0.5 the gradient is (1, 0)
    g = AbsLinearObjective([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
    x = np.array([0.5, 0.0])
    assert g.value(x) == 0.5
    step = 1e-6
    fd = [(g.value(x + step * e) - g.value(x - step * e)) / (2 * step) for e in np.eye(2)]
    assert np.allclose(fd, [1.0, 0.0], atol=1e-9)
    assert np.array_equal(g.exact_subgrad(x), [1.0, 0.0])
    assert np.linalg.norm(mc_mean(g, x, 100_000) - [1.0, 0.0]) <= 0.01


def test_abs_linear_sign_zero_gives_zero():
    f = AbsLinearObjective([[1.0, 1.0]], [1.0])
    x = np.array([0.5, 0.5])
    assert np.array_equal(f.stochastic_subgrad(x, RngStream(0)), [0.0, 0.0])


def test_quadratic_values():
    f = QuadraticSumObjective([np.eye(2)])
    x = np.array([0.6, 0.8])
    assert f.value(x) == pytest.approx(0.5)
    assert np.allclose(f.stochastic_subgrad(x, RngStream(0)), [0.6, 0.8])
    g = QuadraticSumObjective([np.eye(2), 3 * np.eye(2)])
    x = np.array([1.0, 0.0])
    assert g.value(x) == 1.0
    assert np.array_equal(g.exact_subgrad(x), [2.0, 0.0])
    assert g.lipschitz_bound == 3.0


def test_quadratic_symmetrizes():
    f = QuadraticSumObjective([[[1.0, 2.0], [0.0, 1.0]]])
    assert np.array_equal(f.c[0], [[1.0, 1.0], [1.0, 1.0]])


def test_quadratic_mc_relative_error():
    r = RngStream(5)
    c = [m + m.T + 4 * np.eye(3) for m in (r.uniform((3, 3)) for _ in range(7))]
    f = QuadraticSumObjective(c)
    x = np.array([0.3, -0.2, 0.5])
    exact = f.exact_subgrad(x)
    assert np.linalg.norm(mc_mean(f, x, 100_000) - exact) <= 0.01 * np.linalg.norm(exact)


def test_sum_of_norms_values():
    f = SumOfNormsObjective([[0.0, 0.0]])
    x = np.array([3.0, 4.0])
    assert f.value(x) == 5.0
    assert np.allclose(f.stochastic_subgrad(x, RngStream(0)), [0.6, 0.8])
    g = SumOfNormsObjective([[0.0, 0.0], [2.0, 0.0]])
    x = np.array([1.0, 0.0])
    assert g.value(x) == 2.0
    assert np.array_equal(g.exact_subgrad(x), [0.0, 0.0])
    at_anchor = g.stochastic_subgrad(np.array([2.0, 0.0]), RngStream(0))
    assert np.array_equal(at_anchor, [0.0, 0.0]) or np.allclose(at_anchor, [2.0, 0.0])
    assert g.lipschitz_bound == 2.0


def test_sum_of_norms_zero_at_anchor():
    f = SumOfNormsObjective([[1.0, 1.0]])
    assert np.array_equal(f.stochastic_subgrad(np.array([1.0, 1.0]), RngStream(0)), [0.0, 0.0])
    assert np.array_equal(f.exact_subgrad(np.array([1.0, 1.0])), [0.0, 0.0])


def test_simplex_sampler_values():
    f = SimplexColumnSampler(np.eye(2))
    x = np.array([1.0, 0.0])
    r = RngStream(0)
    assert all(np.array_equal(f.stochastic_subgrad(x, r), [1.0, 0.0]) for _ in range(100))
    g = SimplexColumnSampler([[0.0, 1.0], [1.0, 0.0]])
    x = np.array([0.5, 0.5])
    assert np.linalg.norm(mc_mean(g, x, 100_000) - [0.5, 0.5]) <= 0.01


def test_simplex_sampler_rejects_off_simplex():
    f = SimplexColumnSampler(np.eye(2))
    with pytest.raises(InfeasiblePointError):
        f.stochastic_subgrad(np.array([0.7, 0.7]), RngStream(0))


def test_linear_constraints_values():
    g = LinearMaxConstraints([[1.0, 1.0]], [-1.0])
    assert g.value(0, np.array([0.5, 0.5])) == 0.0
    with pytest.raises(IndexError):
        g.value(1, np.array([0.5, 0.5]))
    # values (0.05, 0.2, 0.3) at x = 0: the smallest violating index (0-based) is 1
    h = LinearMaxConstraints(np.zeros((3, 2)), [0.05, 0.2, 0.3])
    x = np.zeros(2)
    assert h.first_violated(x, 0.1) == 1
    assert h.first_violated(x, 0.5) is None
    assert h.max_value(x) == 0.3


def test_max_value_and_scans_match_brute_force():
    r = RngStream(1)
    alpha, beta = r.normal((20, 6)), r.normal(20)
    g = LinearMaxConstraints(alpha, beta)
    for _ in range(100):
        x = r.normal(6)
        vals = [float(np.dot(alpha[j], x) + beta[j]) for j in range(20)]
        assert g.max_value(x) == pytest.approx(max(vals), abs=1e-12)
        j, v = g.scan_max(x)
        assert j == int(np.argmax(g.values(x))) and v == g.values(x)[j]
        eps = float(np.median(vals))
        first = next(k for k, val in enumerate(g.values(x)) if val > eps)
        assert g.first_violated(x, eps) == first
        assert (g.max_value(x) <= eps) == (g.first_violated(x, eps) is None)


def test_scan_max_ties_break_to_smallest_index():
    g = LinearMaxConstraints(np.zeros((4, 2)), [1.0, 3.0, 3.0, 2.0])
    assert g.scan_max(np.zeros(2)) == (1, 3.0)


def test_scan_first_counts_visits():
    g = LinearMaxConstraints(np.zeros((5, 1)), [0.0, 0.0, 1.0, 0.0, 5.0])
    assert g.scan_first(np.zeros(1), 0.5) == (2, 3, 1.0)
    assert g.scan_first(np.zeros(1), 10.0) == (-1, 5, 5.0)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        AbsLinearObjective([[1.0, 0.0]], [0.0, 1.0])
    with pytest.raises(DimensionError):
        QuadraticSumObjective([np.ones((2, 3))])
    with pytest.raises(DimensionError):
        AbsLinearObjective([[1.0, 0.0]], [0.0]).value(np.zeros(3))


# -- contracts on all oracles --------------------------------------------------------


def oracle_zoo():
    r = RngStream(11)
    n = 4
    a = r.normal((30, n))
    c = [m @ m.T + np.eye(n) for m in (r.normal((n, n)) for _ in range(5))]
    ball = EuclideanBall(n)
    return [
        ("abs-linear", AbsLinearObjective(a, r.normal(30)), ball),
        ("abs-linear-batch", AbsLinearObjective(a, r.normal(30), batch_size=4), ball),
        ("quadratic", QuadraticSumObjective(c), ball),
        ("sum-of-norms", SumOfNormsObjective(r.uniform((8, n))), ball),
        ("simplex", SimplexColumnSampler(c[0]), EntropySimplex(n)),
    ]


@pytest.mark.parametrize("name,f,setup", oracle_zoo(), ids=lambda v: v if isinstance(v, str) else "")
def test_almost_sure_bound_and_determinism(name, f, setup):
    r1, r2 = RngStream(3), RngStream(3)
    pts = RngStream(4)
    for _ in range(2000):
        x = setup.random_point(pts)
        d1, d2 = f.stochastic_subgrad(x, r1), f.stochastic_subgrad(x, r2)
        assert np.array_equal(d1, d2)
        assert np.linalg.norm(d1) <= f.lipschitz_bound + 1e-12


@pytest.mark.parametrize("name,f,setup", oracle_zoo(), ids=lambda v: v if isinstance(v, str) else "")
def test_convexity_on_segments(name, f, setup):
    r = RngStream(6)
    for _ in range(1000):
        x, y = setup.random_point(r), setup.random_point(r)
        assert f.value(0.5 * (x + y)) <= 0.5 * (f.value(x) + f.value(y)) + 1e-9


@pytest.mark.parametrize("name,f,setup", oracle_zoo(), ids=lambda v: v if isinstance(v, str) else "")
def test_batched_values_match_pointwise(name, f, setup):
    r = RngStream(8)
    xs = np.array([setup.random_point(r) for _ in range(25)])
    assert np.allclose(f.values(xs), [f.value(x) for x in xs], rtol=1e-12, atol=1e-12)


def test_exact_wrapper_is_deterministic():
    f = AbsLinearObjective([[1.0, 0.0], [-1.0, 2.0]], [0.1, 0.2])
    e = ExactSubgradients(f)
    x = np.array([0.3, 0.4])
    assert np.array_equal(e.stochastic_subgrad(x, RngStream(0)), f.exact_subgrad(x))
    assert e.lipschitz_bound == f.lipschitz_bound
    with pytest.raises(ValueError):
        ExactSubgradients(type("NoExact", (SumOfNormsObjective,), {"has_exact_subgrad": False})([[0.0]]))
