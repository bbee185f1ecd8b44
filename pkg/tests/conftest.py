import numpy as np
import pytest

from levystop import LevyModel, hump, mckean, put_linear_tail

TWO_SIDED = dict(K=8.0, l=0.4, d=1.8)


@pytest.fixture(scope="session")
def bv_model():
    return LevyModel(1.2, 0.0, ((1.0, 1.5),))


@pytest.fixture(scope="session")
def ubv_model():
    return LevyModel(0.9, 0.5, ((0.8, 2.0), (0.4, 5.0)))


@pytest.fixture(scope="session")
def put_reward():
    return put_linear_tail(**TWO_SIDED)


@pytest.fixture(scope="session")
def hump_reward():
    return hump()


@pytest.fixture(scope="session")
def mckean_reward():
    return mckean(8.0)


def random_model(rng: np.random.Generator, transient: bool = True) -> LevyModel:
    """Random hyperexponential model; drifts to +inf when ``transient``."""
    n = int(rng.integers(1, 4))
    decays = np.sort(rng.uniform(0.5, 6.0, n))
    rates = rng.uniform(0.2, 2.0, n)
    sigma = float(rng.choice([0.0, rng.uniform(0.1, 1.0)]))
    jump_mean = float(np.sum(rates / decays))
    drift = jump_mean + rng.uniform(0.1, 1.0) if transient else jump_mean * rng.uniform(0.2, 0.9)
    return LevyModel(drift, sigma, tuple(zip(rates.tolist(), decays.tolist())))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
