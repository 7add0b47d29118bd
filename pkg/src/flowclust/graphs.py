"""Sparse directed-graph storage and row-normalized propagation operators.

Graphs are held in compressed sparse row (CSR) form together with a CSR
copy of the transpose, so both out-neighborhoods (rows of A) and
in-neighborhoods (rows of A^T) can be scanned without conversions.
All weights are nonnegative float64; duplicate edges are summed at
ingest; self-loops are allowed, multi-edges are not.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "SparseDigraph",
    "PropagationMatrix",
    "ingest_edge_list",
    "row_normalize",
    "largest_weakly_connected_component",
    "spmv",
    "ratio_transform",
    "read_edge_list",
    "write_edge_list",
    "read_labels",
    "write_labels",
    "read_node_mapping",
    "write_node_mapping",
]


def _canonical_csr(matrix) -> sp.csr_matrix:
    csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
    csr.sum_duplicates()
    csr.sort_indices()
    csr.eliminate_zeros()
    return csr


class SparseDigraph:
    """Immutable weighted digraph with a cached transpose view.

    Attributes
    ----------
    csr : scipy.sparse.csr_matrix
        The adjacency matrix A, canonical CSR.
    csr_t : scipy.sparse.csr_matrix
        A^T, also canonical CSR, built once at construction.
    """

    __slots__ = ("csr", "csr_t", "_prop_cache", "__weakref__")

    def __init__(self, matrix):
        csr = _canonical_csr(matrix)
        if csr.shape[0] != csr.shape[1]:
            raise ValueError(f"adjacency matrix must be square, got {csr.shape}")
        if csr.nnz:
            if not np.all(np.isfinite(csr.data)):
                raise ValueError("edge weights must be finite")
            if csr.data.min() < 0:
                raise ValueError("edge weights must be nonnegative")
        self.csr = csr
        self.csr_t = _canonical_csr(csr.T)
        self._prop_cache = {}

    @property
    def n(self) -> int:
        """Number of nodes."""
        return self.csr.shape[0]

    @property
    def n_edges(self) -> int:
        """Number of stored (directed) edges."""
        return self.csr.nnz

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def transpose(self) -> "SparseDigraph":
        """Graph with all edge directions reversed."""
        return SparseDigraph(self.csr_t)

    def degree_vector(self) -> np.ndarray:
        """Per-node total weighted degree, out plus in: (A + A^T) 1."""
        out_deg = np.asarray(self.csr.sum(axis=1)).ravel()
        in_deg = np.asarray(self.csr_t.sum(axis=1)).ravel()
        return out_deg + in_deg

    def induced_subgraph(self, nodes) -> "SparseDigraph":
        """Subgraph on the given node ids (kept in the given order)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= self.n):
            raise ValueError("subgraph node ids out of range")
        return SparseDigraph(self.csr[nodes][:, nodes])

    def propagation_pair(self, tau: float):
        """Source and target propagation matrices for this graph, cached per tau."""
        key = float(tau)
        if key not in self._prop_cache:
            self._prop_cache[key] = (
                row_normalize(self, tau, "source"),
                row_normalize(self, tau, "target"),
            )
        return self._prop_cache[key]

    def __repr__(self):  # pragma: no cover
        return f"SparseDigraph(n={self.n}, edges={self.n_edges})"


def ingest_edge_list(rows, n: int | None = None) -> SparseDigraph:
    """Build a graph from (src, dst[, weight]) triplets.

    Duplicate (src, dst) pairs are summed. Node count is inferred as
    max id + 1 unless ``n`` is given. Rejects negative or non-finite
    weights, naming the offending row index.
    """
    rows = list(rows)
    m = len(rows)
    src = np.empty(m, dtype=np.int64)
    dst = np.empty(m, dtype=np.int64)
    w = np.ones(m, dtype=np.float64)
    for i, row in enumerate(rows):
        src[i] = row[0]
        dst[i] = row[1]
        if len(row) > 2:
            w[i] = row[2]
    bad = np.flatnonzero(~np.isfinite(w))
    if bad.size:
        raise ValueError(f"non-finite weight at row {bad[0]}")
    bad = np.flatnonzero(w < 0)
    if bad.size:
        raise ValueError(f"negative weight {w[bad[0]]} at row {bad[0]}")
    if m and (src.min() < 0 or dst.min() < 0):
        raise ValueError("node ids must be nonnegative")
    if n is None:
        n = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1) if m else 0
    elif m and max(src.max(), dst.max()) >= n:
        raise ValueError("node id out of range for given n")
    return SparseDigraph(sp.coo_matrix((w, (src, dst)), shape=(n, n)))


class PropagationMatrix:
    """Row-stochastic propagation operator (A + tau*I) normalized by row sums.

    ``direction="source"`` normalizes A, ``"target"`` normalizes A^T.
    With tau > 0 every row sums to exactly 1 and no zero rows exist.
    """

    __slots__ = ("graph", "tau", "direction", "matrix", "matrix_t")

    def __init__(self, graph: SparseDigraph, tau: float, direction: str, matrix: sp.csr_matrix):
        self.graph = graph
        self.tau = float(tau)
        self.direction = direction
        self.matrix = matrix
        self.matrix_t = _canonical_csr(matrix.T)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def row_normalize(g: SparseDigraph, tau: float, direction: str = "source") -> PropagationMatrix:
    """Build the row-normalized propagation matrix for one direction.

    Raises if tau == 0 and some row has no entries (the node name is
    reported), since the row could not be normalized.
    """
    if direction not in ("source", "target"):
        raise ValueError(f"direction must be 'source' or 'target', got {direction!r}")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    base = g.csr if direction == "source" else g.csr_t
    if tau > 0:
        tilde = (base + tau * sp.identity(g.n, format="csr")).tocsr()
    else:
        tilde = base.copy()
    row_sums = np.asarray(tilde.sum(axis=1)).ravel()
    zero_rows = np.flatnonzero(row_sums == 0)
    if zero_rows.size:
        raise ValueError(
            f"cannot row-normalize with tau=0: node {zero_rows[0]} has no "
            f"{'outgoing' if direction == 'source' else 'incoming'} edges"
        )
    normalized = sp.diags(1.0 / row_sums) @ tilde
    return PropagationMatrix(g, tau, direction, _canonical_csr(normalized))


def spmv(m: PropagationMatrix, x) -> np.ndarray:
    """Sparse product matrix @ x; never materializes an n x n dense array."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != m.n:
        raise ValueError(f"x has {x.shape[0]} rows, expected {m.n}")
    return m.matrix @ x


def largest_weakly_connected_component(g: SparseDigraph):
    """Extract the largest weakly connected component.

    Ties are broken in favor of the component containing the smallest
    node id. Returns (subgraph, node_ids) where node_ids[new] = old id.
    """
    if g.n == 0:
        raise ValueError("graph is empty")
    _, labels = connected_components(g.csr, directed=True, connection="weak")
    sizes = np.bincount(labels)
    max_size = sizes.max()
    # first node whose component has maximal size wins the tie
    winner = labels[np.flatnonzero(sizes[labels] == max_size)[0]]
    keep = np.flatnonzero(labels == winner)
    return g.induced_subgraph(keep), keep


def ratio_transform(g: SparseDigraph) -> SparseDigraph:
    """Rescale each edge to its share of the pair total:
    A_ij <- A_ij / (A_ij + A_ji) on nonzero entries.

    Useful for networks whose raw weights contain extreme outliers.
    """
    coo = g.csr.tocoo()
    if coo.nnz == 0:
        return SparseDigraph(g.csr)
    n = g.n
    key = coo.row.astype(np.int64) * n + coo.col.astype(np.int64)
    # A_ji looked up through the transpose, whose (i, j) entry is A_ji
    t_coo = g.csr_t.tocoo()
    t_key = t_coo.row.astype(np.int64) * n + t_coo.col.astype(np.int64)
    order = np.argsort(t_key)
    t_key = t_key[order]
    t_val = t_coo.data[order]
    pos = np.searchsorted(t_key, key)
    reciprocal = np.zeros(coo.nnz, dtype=np.float64)
    hit = (pos < t_key.size)
    hit[hit] = t_key[pos[hit]] == key[hit]
    reciprocal[hit] = t_val[pos[hit]]
    new_data = coo.data / (coo.data + reciprocal)
    return SparseDigraph(sp.coo_matrix((new_data, (coo.row, coo.col)), shape=(n, n)))


# ---------------------------------------------------------------------------
# file formats: edge lists, labels, node-id mappings
# ---------------------------------------------------------------------------

def read_edge_list(path):
    """Parse a tab-separated edge-list file.

    One edge per line as ``src<TAB>dst<TAB>weight``; the weight is
    optional (default 1.0) and ``#`` starts a comment. If every node id
    is a nonnegative integer literal the ids are used directly
    (n = max + 1); otherwise ids are remapped densely in order of first
    appearance.

    Returns (graph, node_ids) where node_ids[new_id] is the original
    label as a string.
    """
    triplets = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'src dst [weight]', got {raw!r}")
            weight = 1.0
            if len(parts) == 3:
                try:
                    weight = float(parts[2])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad weight {parts[2]!r}") from None
            if not np.isfinite(weight):
                raise ValueError(f"{path}:{lineno}: non-finite weight")
            if weight < 0:
                raise ValueError(f"{path}:{lineno}: negative weight {weight}")
            triplets.append((parts[0], parts[1], weight))

    def _as_int(tok: str):
        try:
            v = int(tok)
        except ValueError:
            return None
        return v if v >= 0 else None

    ints = [(_as_int(s), _as_int(d)) for s, d, _ in triplets]
    if all(a is not None and b is not None for a, b in ints):
        rows = [(a, b, w) for (a, b), (_, _, w) in zip(ints, triplets)]
        g = ingest_edge_list(rows)
        node_ids = np.array([str(i) for i in range(g.n)])
        return g, node_ids
    index: dict[str, int] = {}
    rows = []
    for s, d, w in triplets:
        for tok in (s, d):
            if tok not in index:
                index[tok] = len(index)
        rows.append((index[s], index[d], w))
    g = ingest_edge_list(rows, n=len(index))
    node_ids = np.array(list(index.keys()))
    return g, node_ids


def write_edge_list(g: SparseDigraph, path) -> None:
    coo = g.csr.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, w in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i}\t{j}\t{float(w)!r}\n")


def read_labels(path) -> np.ndarray:
    """Read one integer label per line."""
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad label {line!r}") from None
    return np.asarray(labels, dtype=np.int64)


def write_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in np.asarray(labels).ravel():
            fh.write(f"{int(lab)}\n")


def write_node_mapping(node_ids, path) -> None:
    """Persist the old->new id mapping as a two-column CSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("original,new\n")
        for new, old in enumerate(np.asarray(node_ids)):
            fh.write(f"{old},{new}\n")


def read_node_mapping(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "original,new":
            raise ValueError(f"{path}: unexpected mapping header {header!r}")
        originals = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            old, new = line.split(",")
            if int(new) != len(originals):
                raise ValueError(f"{path}:{lineno}: mapping rows out of order")
            originals.append(old)
    return np.array(originals)
