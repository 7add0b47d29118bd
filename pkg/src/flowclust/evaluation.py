"""Partition evaluation: external indices, imbalance scores, flow matrix.

ARI is the headline agreement metric; NMI (arithmetic-mean normalized)
is provided for parity but suffers from finite-size effects. Imbalance
objectives are reported for all twelve (variant, normalization)
combinations. Hard labels are scored by converting them to a one-hot
assignment matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .graphs import SparseDigraph
from .imbalance import NORMALIZATIONS, VARIANTS, global_objective, probabilistic_cut
from .validation import as_assignment_matrix

__all__ = [
    "adjusted_rand_index",
    "normalized_mutual_information",
    "predicted_flow_matrix",
    "one_hot",
    "PartitionReport",
    "report",
    "objective_name",
]


def _check_pair(labels_a, labels_b):
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.size != b.size:
        raise ValueError(f"label vectors differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least two labeled nodes")
    return a, b


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement; 1 for identical partitions."""
    a, b = _check_pair(labels_a, labels_b)
    return float(adjusted_rand_score(a, b))


def normalized_mutual_information(labels_a, labels_b) -> float:
    """Mutual information normalized by the arithmetic mean of entropies.

    Two constant partitions score 1.0 by the 0/0 convention.
    """
    a, b = _check_pair(labels_a, labels_b)
    return float(normalized_mutual_info_score(a, b, average_method="arithmetic"))


def one_hot(labels, k: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be nonnegative")
    if k is None:
        k = int(labels.max()) + 1 if labels.size else 0
    p = np.zeros((labels.size, k))
    p[np.arange(labels.size), labels] = 1.0
    return p


def _as_assignment(g: SparseDigraph, prediction) -> np.ndarray:
    prediction = np.asarray(prediction)
    if prediction.ndim == 1:
        return one_hot(prediction.astype(np.int64))
    if prediction.ndim == 2 and prediction.shape[0] == g.n:
        return as_assignment_matrix(prediction, n=g.n)
    raise ValueError("prediction must be a label vector or an n x K matrix")


def predicted_flow_matrix(g: SparseDigraph, prediction) -> np.ndarray:
    """Direction-probability estimates between predicted clusters.

    Entry (k, l) is W[k, l] / (W[k, l] + W[l, k]) when the pair carries
    any flow, else 0; complementary entries sum to 1.
    """
    p = _as_assignment(g, prediction)
    cuts = probabilistic_cut(g, p)
    totals = cuts + cuts.T
    out = np.zeros_like(cuts)
    np.divide(cuts, totals, out=out, where=totals > 0)
    return out


def objective_name(variant: str, norm: str) -> str:
    return f"{variant}_{norm}"


@dataclass
class PartitionReport:
    """Everything we report about one predicted partition."""

    objectives: dict
    ari: float | None
    nmi: float | None
    size_ratio: float
    size_std: float
    flow_matrix: np.ndarray

    def to_dict(self) -> dict:
        return {
            "objectives": self.objectives,
            "ari": self.ari,
            "nmi": self.nmi,
            "size_ratio": self.size_ratio if np.isfinite(self.size_ratio) else None,
            "size_std": self.size_std,
            "flow_matrix": np.asarray(self.flow_matrix).tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def report(g: SparseDigraph, prediction, truth=None, beta: int | None = None) -> PartitionReport:
    """Score a partition with all twelve objectives plus shape statistics.

    ``beta`` feeds the sort variants and defaults to K - 1, the
    smallest pair count keeping a meta-graph on K clusters connected.
    """
    p = _as_assignment(g, prediction)
    k = p.shape[1]
    if beta is None:
        beta = max(k - 1, 1)
    objectives = {}
    for variant in VARIANTS:
        for norm in NORMALIZATIONS:
            value, _ = global_objective(g, p, norm, variant, beta=beta)
            objectives[objective_name(variant, norm)] = value

    hard = p.argmax(axis=1)
    sizes = np.bincount(hard, minlength=k).astype(np.float64)
    smallest = sizes.min()
    size_ratio = float(sizes.max() / smallest) if smallest > 0 else float("inf")
    size_std = float(sizes.std())

    ari = nmi = None
    if truth is not None:
        ari = adjusted_rand_index(truth, hard)
        nmi = normalized_mutual_information(truth, hard)
    return PartitionReport(
        objectives=objectives,
        ari=ari,
        nmi=nmi,
        size_ratio=size_ratio,
        size_std=size_std,
        flow_matrix=predicted_flow_matrix(g, p),
    )
