import numpy as np
import pytest
from hypothesis import settings

from pgo_bailout import build_system

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_system(rng, n, m=0, density=0.5, shock=True):
    """Small random solvent system plus a cash vector after a random shock."""
    L = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(L, 0.0)
    b = rng.uniform(0, 1, n)
    A = rng.uniform(0, 1, (n, m)) * (rng.random((n, m)) < 0.7)
    # enough cash to be solvent at t = 0
    need = L.sum(axis=1) + b - L.sum(axis=0) - A.sum(axis=1)
    c = np.maximum(need, 0.0) + rng.uniform(0, 0.5, n)
    system = build_system(L, b, A, c)
    s = rng.uniform(0, 1.5, n) * system.w0 * (rng.random(n) < 0.5) if shock else np.zeros(n)
    return system, system.c - s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def one_bank():
    """One bank, all obligations external, one asset, cash 0.2 after the shock."""
    from pgo_bailout import InverseDemandSpec
    system = build_system(np.zeros((1, 1)), [1.0], [[1.0]], [1.0])
    spec = InverseDemandSpec([1.0], [0.5], supply=[1.0])
    return system, spec


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
