import numpy as np
import pytest

from asmd.problems import ProblemInstance


def tiny_instance(a, b, alpha, beta, radius=1.0, ident="tiny"):
    """Two-dimensional abs-linear instance on a ball, built from literal data."""
    a = np.asarray(a, dtype=float)
    return ProblemInstance(
        "abs-linear", {"a": a, "b": np.asarray(b, dtype=float)},
        np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float),
        {"kind": "euclidean-ball", "dimension": a.shape[1], "radius": radius,
         "theta0": float(np.sqrt(2.0) * radius)},
        {"id": ident, "x0": "origin"})


@pytest.fixture
def tiny():
    return tiny_instance([[1.0, 2.0], [-1.0, 0.5]], [0.3, 0.1], [[1.0, 0.0]], [-0.5])


# -- one summary line per acceptance criterion -------------------------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        num = int(report.nodeid.rsplit("_", 1)[1].split("[")[0])
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[num] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        status, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
