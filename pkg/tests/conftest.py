import numpy as np
import pytest

from hanam import Adjacency, Dataset, MatrixNormalApprox, row_normalize


@pytest.fixture
def two_cycle():
    return row_normalize(Adjacency([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture
def small_net():
    rng = np.random.default_rng(101)
    n = 12
    raw = (rng.uniform(size=(n, n)) < 0.3).astype(float)
    np.fill_diagonal(raw, 0.0)
    raw[raw.sum(axis=1) == 0, 0] = 1.0
    np.fill_diagonal(raw, 0.0)
    return row_normalize(Adjacency(raw))


def random_instance(seed, n=25, p=3, D=3, density=0.15, isolate=False):
    """A random network, dataset, and latent summary for model tests."""
    rng = np.random.default_rng(seed)
    raw = (rng.uniform(size=(n, n)) < density).astype(float)
    np.fill_diagonal(raw, 0.0)
    if isolate:
        raw[0] = 0.0
    net = row_normalize(Adjacency(raw))
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    y = rng.standard_normal(n)
    data = Dataset(y, X)
    Lam = rng.standard_normal((n, D))
    Q = rng.standard_normal((n, n))
    Omega = Q @ Q.T / n + np.eye(n)
    Omega = Omega / Omega[0, 0]
    Omega[0, 0] = 1.0
    P = rng.standard_normal((D, D))
    Psi = P @ P.T / D + 0.5 * np.eye(D)
    approx = MatrixNormalApprox(Lam, Omega, Psi, fit_loglik=0.0, iterations=1)
    return net, data, approx, rng
