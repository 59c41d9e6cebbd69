import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from metboost.data import Dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(X, y, groups, names=None, levels=None, labels=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    groups = np.asarray(groups, dtype=np.int64)
    g = int(groups.max()) + 1
    names = tuple(names or (f"x{j + 1}" for j in range(X.shape[1])))
    levels = tuple(levels or (None,) * X.shape[1])
    labels = tuple(labels or (f"s{i}" for i in range(g)))
    return Dataset(X, np.asarray(y, dtype=float), groups, names, levels, labels, "y", "id")


def grouped_data(seed, n=120, p=3, g=6, slope_sd=1.0, noise=0.5):
    """Small random-slope dataset for behavioural tests."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    groups = rng.integers(0, g, n)
    groups[:g] = np.arange(g)
    b = rng.normal(0, slope_sd, g)
    y = np.sin(X[:, 0]) + X[:, 1] ** 2 + b[groups] * X[:, 0] + rng.normal(0, noise, n)
    return make_dataset(X, y, groups)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion
ACCEPTANCE_NOTES: dict = {}
_acceptance_results: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if report.when == "call" or name not in _acceptance_results:
            _acceptance_results[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results, key=lambda s: int(s.split("_")[1])):
        status = "PASS" if _acceptance_results[name] == "passed" else "FAIL"
        note = ACCEPTANCE_NOTES.get(name, "")
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{note}]" if note else ""))
