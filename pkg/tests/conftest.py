import numpy as np
import pytest

from lumenforge.lighting import SgEnvironment, spherical_to_vector


def random_unit(rng, n=None, upper=False):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    if upper:
        v[..., 2] = np.abs(v[..., 2]) + 0.2
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_env(rng, k=3, lam=(1.0, 40.0), f=(0.1, 5.0)):
    return SgEnvironment(random_unit(rng, k), rng.uniform(*lam, k), rng.uniform(*f, (k, 3)))


def overhead_env(lam=30.0, power=10.0, ambient=0.2):
    return SgEnvironment(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]), np.array([lam, 0.01]),
                         np.array([[power] * 3, [ambient] * 3]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


__all__ = ["random_unit", "random_env", "overhead_env", "spherical_to_vector", "ACCEPTANCE"]


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
