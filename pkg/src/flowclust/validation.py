"""Input validation helpers shared by the estimator layer and the CLI."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graphs import SparseDigraph

__all__ = ["as_digraph", "as_assignment_matrix", "check_labels"]


def as_digraph(x) -> SparseDigraph:
    """Coerce an adjacency-like input into a SparseDigraph.

    Accepts a SparseDigraph, any scipy sparse matrix, or a square 2-D
    array of nonnegative weights.
    """
    if isinstance(x, SparseDigraph):
        return x
    if sp.issparse(x):
        return SparseDigraph(x)
    arr = np.asarray(x)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square adjacency matrix, got shape {arr.shape}")
    return SparseDigraph(sp.csr_matrix(arr))


def as_assignment_matrix(p, n: int | None = None, atol: float = 1e-9) -> np.ndarray:
    """Validate a row-stochastic assignment matrix."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("assignment matrix must be 2-D")
    if n is not None and p.shape[0] != n:
        raise ValueError(f"assignment matrix has {p.shape[0]} rows, expected {n}")
    if (p < -atol).any() or (p > 1 + atol).any():
        raise ValueError("assignment entries must lie in [0, 1]")
    if not np.allclose(p.sum(axis=1), 1.0, atol=atol):
        raise ValueError("assignment rows must sum to 1")
    return p


def check_labels(labels, n: int | None = None) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    if n is not None and labels.size != n:
        raise ValueError(f"got {labels.size} labels for {n} nodes")
    return labels.astype(np.int64)
