import numpy as np
import pytest

from kem.model import ModelConfig, fit
from kem.processes import Series, window_pairs


def ou_series(n, seed, theta=1.0, sigma=1.0, dt=0.05):
    """Exactly discretised Ornstein-Uhlenbeck path."""
    rng = np.random.default_rng(seed)
    a = np.exp(-theta * dt)
    s = sigma * np.sqrt((1 - a * a) / (2 * theta))
    x = np.empty(n)
    x[0] = 0.0
    for k in range(1, n):
        x[k] = a * x[k - 1] + s * rng.standard_normal()
    return Series(x[:, None], dt=dt)


@pytest.fixture(scope="session")
def ou_model():
    pairs = window_pairs(ou_series(2002, 0), 1, 1)
    return fit(pairs, ModelConfig(bandwidth=0.3, decay=1.0, eps=1e-3, M_max=10))


@pytest.fixture(scope="session")
def l63_model():
    """Noise-free Lorenz-63 model with a local bandwidth, plus a held-out run."""
    from kem.processes import SdeSpec, integrate_sde

    train = integrate_sde(SdeSpec("lorenz63", dt=0.01, seed=0), 2509, [1.0, 1.0, 1.0])
    test = integrate_sde(SdeSpec("lorenz63", dt=0.01, seed=1), 5200, [-3.0, 2.0, 20.0])
    model = fit(window_pairs(train, 5, 5), ModelConfig(bandwidth=2.0, decay=0.5, eps=1e-3, M_max=20))
    return model, test


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one verdict line per acceptance criterion."""
    return _ACCEPTANCE.append


def pytest_collection_modifyitems(items):
    # the N=20000 Lorenz-63 fits need most of the machine's memory, so they
    # run first, before other fixtures and earlier tests hold any of it
    def rank(item):
        if "lorenz63_runs" in getattr(item, "fixturenames", ()):
            return 0
        return 1 if item.path.name == "test_acceptance.py" else 2

    items.sort(key=rank)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
