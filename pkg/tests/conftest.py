import numpy as np
import pytest

from magslam.rotations import quat_exp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_quat(rng, n=None):
    shape = (3,) if n is None else (n, 3)
    return quat_exp(rng.normal(size=shape))


def central_diff(fun, x, h=1e-6):
    """Jacobian of ``fun`` at vector ``x`` by central differences."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    J = np.zeros(f0.shape + x.shape)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx.flat[i] = h
        J[..., i] = (np.asarray(fun(x + dx)) - np.asarray(fun(x - dx))) / (2 * h)
    return J


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line; the lines are printed in the terminal summary."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
