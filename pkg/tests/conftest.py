import numpy as np
import pytest

from tvdnpl.distributions import Dataset, ModelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model_data(family, rng, n=30, d=2):
    """A small dataset and model with parameters away from ties."""
    if family == "poisson":
        X = rng.integers(0, 3, size=(n, d)).astype(float)
        y = rng.poisson(2.0, n)
        return Dataset(X, y), ModelSpec.poisson(d)
    if family == "binomial":
        X = rng.integers(0, 3, size=(n, d)).astype(float)
        y = rng.binomial(5, 0.4, n)
        return Dataset(X, y), ModelSpec.binomial(5, d)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, n)
    if family == "probit":
        return Dataset(X, y, covariate_kind="continuous"), ModelSpec.probit(d)
    return Dataset(X, y, covariate_kind="continuous"), ModelSpec.mlp(d, 3)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
