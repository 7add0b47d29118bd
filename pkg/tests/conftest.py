import numpy as np
import pytest
import scipy.sparse as sp

from flowclust import SparseDigraph


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_digraph(rng, n, density=0.3, weighted=True) -> SparseDigraph:
    mask = rng.random((n, n)) < density
    weights = rng.uniform(0.1, 2.0, size=(n, n)) if weighted else np.ones((n, n))
    return SparseDigraph(sp.csr_matrix(np.where(mask, weights, 0.0)))


def random_assignment(rng, n, k) -> np.ndarray:
    p = rng.random((n, k)) + 1e-3
    return p / p.sum(axis=1, keepdims=True)
