"""Hermitian spectral embeddings of digraphs.

The skew part of the adjacency matrix, multiplied by the imaginary
unit, is a Hermitian operator whose top eigenvectors encode directed
flow structure. It is stored through its real symmetric 2n x 2n
embedding [[0, -S], [S, 0]] with S = A - A^T, so a real symmetric
Lanczos solver applies; complex eigenvectors are recovered by
de-duplicating the doubled spectrum of the embedding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.cluster import KMeans

from .graphs import SparseDigraph

__all__ = [
    "HermitianOperator",
    "build_hermitian",
    "top_k_eigenpairs",
    "make_features",
    "standardize_columns",
    "kmeans",
]

NORMALIZATIONS = ("none", "random_walk")


@dataclass(frozen=True)
class HermitianOperator:
    """H = (A - A^T) * i via its real symmetric embedding.

    ``skew`` holds S = A - A^T (after optional degree normalization)
    and ``embedding`` the 2n x 2n block matrix [[0, -S], [S, 0]].
    The spectrum of H is real and symmetric about zero.
    """

    skew: sp.csr_matrix
    embedding: sp.csr_matrix
    normalization: str

    @property
    def n(self) -> int:
        return self.skew.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """H v for a complex vector or matrix v."""
        return 1j * (self.skew @ v)


def build_hermitian(g: SparseDigraph, normalization: str = "none") -> HermitianOperator:
    """Construct the Hermitian flow operator, optionally degree-normalized.

    The random-walk variant rescales by D^{-1/2} on both sides, where D
    holds degrees of the symmetrized weights plus mean-degree/n on the
    diagonal so isolated nodes stay well defined.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    skew = (g.csr - g.csr_t).tocsr()
    if normalization == "random_walk" and g.n > 0:
        degrees = g.degree_vector()
        degrees = degrees + degrees.mean() / g.n
        with np.errstate(divide="ignore"):
            inv_sqrt = np.where(degrees > 0, 1.0 / np.sqrt(degrees), 0.0)
        d = sp.diags(inv_sqrt)
        scaled = (d @ skew @ d).tocsr()
        # re-skew exactly: rounding makes a_i s_ij a_j differ from
        # a_j s_ji a_i by one ulp, which would break embedding symmetry
        skew = (0.5 * (scaled - scaled.T)).tocsr()
    embedding = sp.bmat([[None, -skew], [skew, None]], format="csr")
    if embedding is None or embedding.shape != (2 * g.n, 2 * g.n):
        embedding = sp.csr_matrix((2 * g.n, 2 * g.n))
    return HermitianOperator(skew, embedding.tocsr(), normalization)


def _dedup_complex_pairs(vals: np.ndarray, vecs: np.ndarray, n: int):
    """Map eigenpairs of the real embedding back to complex eigenpairs.

    Every eigenvalue of H appears twice in the embedding; within each
    eigenvalue group the complex images are orthonormalized by pivoted
    QR and the numerically independent ones kept.
    """
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    scale = max(np.abs(vals).max(initial=0.0), 1.0)
    gtol = 1e-6 * scale
    pairs: list[tuple[float, np.ndarray]] = []
    start = 0
    while start < len(vals):
        stop = start
        while stop < len(vals) and abs(vals[stop] - vals[start]) <= gtol:
            stop += 1
        group = vecs[:, start:stop]
        candidates = group[:n, :] + 1j * group[n:, :]
        q, r, _ = scipy.linalg.qr(candidates, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > max(diag[0], 1e-30) * 1e-8)) if diag.size else 0
        lam = float(np.mean(vals[start:stop]))
        for j in range(rank):
            v = q[:, j]
            pairs.append((lam, v / np.linalg.norm(v)))
        start = stop
    return pairs


def top_k_eigenpairs(op: HermitianOperator, k: int):
    """K eigenpairs of largest magnitude of the Hermitian flow operator.

    Returns (eigenvalues, eigenvectors) with complex unit eigenvectors
    in the columns, ordered by decreasing |lambda| (positive eigenvalue
    first on magnitude ties). Each pair satisfies
    ||H v - lambda v|| <= 1e-8 * ||H||.
    """
    n = op.n
    if k > n:
        raise ValueError(f"requested {k} eigenpairs of an operator of size {n}")
    if k < 1:
        raise ValueError("k must be positive")
    if op.embedding.nnz == 0:
        vecs = np.zeros((n, k), dtype=np.complex128)
        vecs[np.arange(k), np.arange(k)] = 1.0
        return np.zeros(k), vecs

    k_emb = 2 * k
    if k_emb >= 2 * n - 1:
        vals, vecs = np.linalg.eigh(op.embedding.toarray())
        keep = np.argsort(np.abs(vals), kind="stable")[::-1][:min(k_emb, 2 * n)]
        vals, vecs = vals[keep], vecs[:, keep]
    else:
        v0 = np.random.default_rng(842).standard_normal(2 * n)
        try:
            vals, vecs = spla.eigsh(op.embedding, k=k_emb, which="LM", v0=v0)
        except spla.ArpackNoConvergence as exc:
            achieved = len(exc.eigenvalues)
            raise RuntimeError(
                f"eigensolver did not converge: {achieved}/{k_emb} pairs available"
            ) from exc

    pairs = _dedup_complex_pairs(vals, vecs, n)
    pairs.sort(key=lambda item: (-abs(item[0]), -item[0]))
    if len(pairs) < k:  # pragma: no cover - defensive
        raise RuntimeError(f"recovered only {len(pairs)} of {k} complex eigenpairs")
    values = np.array([lam for lam, _ in pairs[:k]])
    vectors = np.column_stack([v for _, v in pairs[:k]])

    norm_bound = 1e-8 * np.abs(values).max(initial=0.0)
    residual = np.linalg.norm(op.apply(vectors) - vectors * values, axis=0)
    if norm_bound > 0 and residual.max() > norm_bound:
        raise RuntimeError(
            f"eigenpair residual {residual.max():.3e} exceeds bound {norm_bound:.3e}"
        )
    return values, vectors


def standardize_columns(x: np.ndarray) -> np.ndarray:
    """Center and scale each column to mean 0 and variance 1.

    Columns that are exactly constant become all-zero instead of
    dividing by zero.
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    std = centered.std(axis=0, keepdims=True)
    out = np.zeros_like(centered)
    np.divide(centered, std, out=out, where=std > 0)
    return out


def make_features(g: SparseDigraph, k: int, normalization: str = "random_walk") -> np.ndarray:
    """n x 2k feature matrix from the top-k Hermitian eigenvectors.

    Real parts of the k eigenvectors come first, then imaginary parts;
    every column is standardized.
    """
    op = build_hermitian(g, normalization)
    if op.embedding.nnz == 0:
        # degenerate operator: no directional signal, no features
        return np.zeros((g.n, 2 * k))
    _, vectors = top_k_eigenpairs(op, k)
    return standardize_columns(np.hstack([vectors.real, vectors.imag]))


def kmeans(x: np.ndarray, k: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Best-of-``restarts`` Lloyd clustering with k-means++ seeding."""
    x = np.asarray(x, dtype=np.float64)
    if k > x.shape[0]:
        raise ValueError(f"cannot form {k} clusters from {x.shape[0]} points")
    if np.unique(x, axis=0).shape[0] < k:
        raise ValueError(f"fewer than {k} distinct rows")
    model = KMeans(n_clusters=k, init="k-means++", n_init=restarts, random_state=seed)
    return model.fit_predict(x)
