"""Directed stochastic block models driven by a meta-graph of flow directions.

A meta-graph assigns every ordered cluster pair (k, l) a probability
F[k, l] that an edge between the pair points k -> l. The filled variant
replaces pairs that carry no imbalance structure by the symmetric value
0.5, so that the total edge density is uniform across the graph and the
only clustering signal is directionality. An optional ambient cluster
(always the last id) has all its flows direction-symmetric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import SparseDigraph

__all__ = [
    "STRUCTURES",
    "MetaGraph",
    "DsbmSpec",
    "LabeledGraph",
    "build_meta_graph",
    "cluster_sizes",
    "sample_dsbm",
    "default_beta",
]

STRUCTURES = ("cycle", "path", "complete", "star")

# spawn keys for independent, reproducible RNG sub-streams of one seed
_META_STREAM = 0
_LABEL_STREAM = 1
_EDGE_STREAM = 2


def substream(seed, *key) -> np.random.Generator:
    """Independent generator derived from (seed, key): stable under reordering."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class MetaGraph:
    """K x K flow matrix plus its filled variant.

    ``flow`` is zero off the imbalance structure; ``flow_filled``
    carries 0.5 there instead. With ``ambient`` the last row and column
    of ``flow`` are 0 (0.5 in ``flow_filled``).
    """

    structure: str
    k: int
    eta: float
    ambient: bool
    flow: np.ndarray
    flow_filled: np.ndarray

    def __post_init__(self):
        f, ff = self.flow, self.flow_filled
        if f.shape != (self.k, self.k) or ff.shape != (self.k, self.k):
            raise ValueError("flow matrices must be K x K")
        if (f < 0).any() or (f > 1).any() or (ff < 0).any() or (ff > 1).any():
            raise ValueError("flow entries must lie in [0, 1]")
        block = self.k - 1 if self.ambient else self.k
        if not np.allclose(np.diag(f)[:block], 0.5):
            raise ValueError("non-ambient diagonal entries must be 0.5")


@dataclass(frozen=True)
class DsbmSpec:
    """Parameters of one synthetic graph draw."""

    meta: MetaGraph
    n: int
    p: float
    rho: float = 1.0
    seed: int = 0
    self_loops: bool = True

    def __post_init__(self):
        if self.n < self.meta.k:
            raise ValueError("need at least one node per cluster")
        if not (0 < self.p <= 1):
            raise ValueError("edge probability scale p must be in (0, 1]")
        if self.rho < 1:
            raise ValueError("size ratio rho must be >= 1")
        if self.p * self.meta.flow_filled.max() > 1 + 1e-12:
            raise ValueError("p * max(flow_filled) must not exceed 1")


@dataclass
class LabeledGraph:
    graph: SparseDigraph
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.graph.n,):
            raise ValueError("labels must have one entry per node")


def _structure_block(structure: str, b: int, eta: float, rng: np.random.Generator) -> np.ndarray:
    f = np.zeros((b, b))
    if structure == "cycle":
        for k in range(b):
            f[k, (k + 1) % b] += 1 - eta
            f[k, (k - 1) % b] += eta
    elif structure == "path":
        for k in range(b):
            if k + 1 < b:
                f[k, k + 1] = 1 - eta
            if k - 1 >= 0:
                f[k, k - 1] = eta
    elif structure == "complete":
        for k in range(b):
            for l in range(k + 1, b):
                f[k, l] = eta if rng.random() < 0.5 else 1 - eta
                f[l, k] = 1 - f[k, l]
    elif structure == "star":
        # hub flows out to odd satellites and receives from even ones
        center = (b - 1) // 2
        for l in range(b):
            if l == center:
                continue
            if l % 2 == 1:
                f[center, l] = 1 - eta
                f[l, center] = eta
            else:
                f[center, l] = eta
                f[l, center] = 1 - eta
    else:  # pragma: no cover - guarded by build_meta_graph
        raise ValueError(structure)
    np.fill_diagonal(f, 0.5)
    return f


def build_meta_graph(structure: str, k: int, eta: float, ambient: bool = False,
                     seed: int | None = 0) -> MetaGraph:
    """Construct the flow matrix for one of the supported structures.

    ``seed`` only matters for the "complete" structure, whose direction
    coin flips are drawn from a dedicated sub-stream so that meta-graph
    and edge sampling stay independently reproducible.
    """
    if structure not in STRUCTURES:
        raise ValueError(f"unknown structure {structure!r}, expected one of {STRUCTURES}")
    if not (0 <= eta <= 0.5):
        raise ValueError("eta must lie in [0, 0.5]")
    min_k = 3 if ambient else 2
    if k < min_k:
        raise ValueError(f"structure {structure!r} with ambient={ambient} needs K >= {min_k}")
    rng = substream(seed, _META_STREAM)
    b = k - 1 if ambient else k
    block = _structure_block(structure, b, eta, rng)
    on_structure = (block > 0) | (block.T > 0)
    filled_block = np.where(on_structure, block, 0.5)
    if not ambient:
        return MetaGraph(structure, k, eta, ambient, block, filled_block)
    flow = np.zeros((k, k))
    flow[:b, :b] = block
    flow_filled = np.full((k, k), 0.5)
    flow_filled[:b, :b] = filled_block
    return MetaGraph(structure, k, eta, ambient, flow, flow_filled)


def default_beta(meta: MetaGraph) -> int:
    """Number of cluster pairs carrying imbalance structure.

    Equals half the nonzero off-diagonal count of the flow matrix
    whenever eta > 0, and the number of structure edges in general.
    """
    f = meta.flow
    count = 0
    for k in range(meta.k):
        for l in range(k + 1, meta.k):
            if f[k, l] + f[l, k] > 0:
                count += 1
    return count


def cluster_sizes(n: int, k: int, rho: float) -> np.ndarray:
    """Cluster sizes summing to n with largest/smallest ratio about rho.

    rho == 1 gives floor(n/k) for the first k-1 clusters and the
    remainder to the last. rho > 1 grows sizes geometrically by
    rho0 = rho^(1/(k-1)).
    """
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise ValueError("need n >= k")
    if rho < 1:
        raise ValueError("rho must be >= 1")
    if k == 1:
        return np.array([n], dtype=np.int64)
    if rho == 1:
        base = n // k
        sizes = [base] * (k - 1) + [n - (k - 1) * base]
    else:
        rho0 = rho ** (1.0 / (k - 1))
        sizes = [math.floor(n * (1 - rho0) / (1 - rho0 ** k))]
        for _ in range(1, k - 1):
            sizes.append(math.floor(rho0 * sizes[-1]))
        sizes.append(n - sum(sizes))
    sizes = np.asarray(sizes, dtype=np.int64)
    if sizes.min() <= 0:
        raise ValueError(f"cluster sizes {sizes.tolist()} contain an empty cluster; increase n")
    return sizes


def _bernoulli_positions(rng: np.random.Generator, n_pairs: int, q: float) -> np.ndarray:
    """Indices of successes in a Bernoulli(q) process over range(n_pairs).

    Uses geometric gap skipping, so cost is O(expected successes)
    instead of O(n_pairs).
    """
    if n_pairs == 0 or q <= 0:
        return np.empty(0, dtype=np.int64)
    if q >= 1:
        return np.arange(n_pairs, dtype=np.int64)
    chunks = []
    pos = -1
    while True:
        expected = (n_pairs - pos - 1) * q
        batch = max(int(expected + 4.0 * math.sqrt(expected + 1.0)) + 1, 64)
        steps = pos + np.cumsum(rng.geometric(q, size=batch))
        inside = steps < n_pairs
        if not inside.all():
            chunks.append(steps[inside])
            break
        chunks.append(steps)
        pos = int(steps[-1])
    return np.concatenate(chunks)


def sample_dsbm(spec: DsbmSpec) -> LabeledGraph:
    """Draw one labeled graph from the block model.

    Every ordered node pair (i, j) with clusters (k, l) carries an edge
    of weight 1 independently with probability p * flow_filled[k, l].
    Self-loops use the within-cluster probability and can be disabled
    via ``spec.self_loops``. Identical seeds give identical edge sets.
    """
    meta, n, k = spec.meta, spec.n, spec.meta.k
    sizes = cluster_sizes(n, k, spec.rho)
    perm = substream(spec.seed, _LABEL_STREAM).permutation(n)
    labels = np.empty(n, dtype=np.int64)
    start = 0
    for c, size in enumerate(sizes):
        labels[perm[start:start + size]] = c
        start += size
    members = [np.flatnonzero(labels == c) for c in range(k)]

    src_parts, dst_parts = [], []
    for ck in range(k):
        for cl in range(k):
            q = spec.p * meta.flow_filled[ck, cl]
            nk, nl = sizes[ck], sizes[cl]
            if ck == cl:
                n_pairs = nk * nk if spec.self_loops else nk * (nk - 1)
            else:
                n_pairs = nk * nl
            positions = _bernoulli_positions(substream(spec.seed, _EDGE_STREAM, ck * k + cl),
                                             int(n_pairs), q)
            if positions.size == 0:
                continue
            if ck == cl and not spec.self_loops:
                i_loc = positions // (nk - 1)
                j_loc = positions % (nk - 1)
                j_loc += (j_loc >= i_loc)
            else:
                i_loc, j_loc = np.divmod(positions, nl)
            src_parts.append(members[ck][i_loc])
            dst_parts.append(members[cl][j_loc])

    if src_parts:
        src = np.concatenate(src_parts)
        dst = np.concatenate(dst_parts)
        weights = np.ones(src.size, dtype=np.float64)
        graph = SparseDigraph(sp.coo_matrix((weights, (src, dst)), shape=(n, n)))
    else:
        graph = SparseDigraph(sp.csr_matrix((n, n)))
    return LabeledGraph(graph, labels)
