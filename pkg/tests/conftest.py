import numpy as np
import pytest


def random_dictionary(rng, n, m):
    phi = rng.standard_normal((n, m))
    return phi / np.linalg.norm(phi, axis=0)


def sparse_problem(rng, n, m, k, noise=0.0):
    phi = random_dictionary(rng, n, m)
    x0 = np.zeros(m)
    x0[rng.choice(m, size=k, replace=False)] = rng.standard_normal(k)
    return phi, x0, phi @ x0 + noise * rng.standard_normal(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
