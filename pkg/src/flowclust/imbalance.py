"""Probabilistic cut-imbalance scores and the corresponding losses.

Given a soft assignment P (rows are per-node cluster probabilities),
the probabilistic cut W[k, l] = P[:, k]^T A P[:, l] measures expected
flow from cluster k to cluster l, and VOL[k] the expected total degree
mass of cluster k. Pairwise imbalance scores |W[k,l] - W[l,k]| are
normalized into [0, 1] four different ways, aggregated over a selected
pair set three different ways, and one minus the aggregate serves as a
differentiable training loss.

Zero denominators always yield a score of 0 (an empty or flow-free
pair carries no signal and must not produce NaN gradients); the
gradient of |x| at 0 is taken to be 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import SparseDigraph

__all__ = [
    "NORMALIZATIONS",
    "VARIANTS",
    "PairScores",
    "probabilistic_cut",
    "probabilistic_volume",
    "pairwise_ci",
    "select_pairs",
    "global_objective",
    "pair_scores",
    "null_threshold_check",
    "imbalance_loss_and_grad",
]

NORMALIZATIONS = ("vol_sum", "vol_min", "vol_max", "plain")
VARIANTS = ("sort", "std", "naive")


def _check_assignment(g: SparseDigraph, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != g.n:
        raise ValueError(f"assignment matrix must be ({g.n}, K), got {p.shape}")
    return p


def probabilistic_cut(g: SparseDigraph, p: np.ndarray) -> np.ndarray:
    """K x K matrix of expected directed flow between clusters: P^T A P."""
    p = _check_assignment(g, p)
    return p.T @ (g.csr @ p)


def probabilistic_volume(g: SparseDigraph, p: np.ndarray) -> np.ndarray:
    """Expected total (in + out) degree mass per cluster: P^T (A + A^T) 1."""
    p = _check_assignment(g, p)
    return p.T @ g.degree_vector()


def _safe_div(num: np.ndarray, denom: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    np.divide(num, denom, out=out, where=denom > 0)
    return out


def _second_largest_volume(volumes: np.ndarray) -> tuple[float, int]:
    """max over pairs of min(VOL_k, VOL_l) is the second-largest volume."""
    order = np.argsort(-volumes, kind="stable")
    idx = int(order[1])
    return float(volumes[idx]), idx


def pairwise_ci(cuts: np.ndarray, volumes: np.ndarray, norm: str) -> np.ndarray:
    """Upper-triangular K x K matrix of pairwise imbalance scores in [0, 1]."""
    if norm not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {norm!r}, expected one of {NORMALIZATIONS}")
    k = len(volumes)
    ci = np.zeros((k, k))
    iu, ju = np.triu_indices(k, k=1)
    if iu.size == 0:
        return ci
    wkl = cuts[iu, ju]
    wlk = cuts[ju, iu]
    diff = np.abs(wkl - wlk)
    if norm == "vol_sum":
        vals = 2.0 * _safe_div(diff, volumes[iu] + volumes[ju])
    elif norm == "plain":
        vals = _safe_div(diff, wkl + wlk)
    elif norm == "vol_max":
        vals = _safe_div(diff, np.maximum(volumes[iu], volumes[ju]))
    else:  # vol_min
        plain = _safe_div(diff, wkl + wlk)
        scale, _ = _second_largest_volume(volumes)
        if scale > 0:
            vals = plain * np.minimum(volumes[iu], volumes[ju]) / scale
        else:
            vals = np.zeros_like(plain)
    ci[iu, ju] = vals
    return ci


def select_pairs(ci: np.ndarray, variant: str, cuts: np.ndarray | None = None,
                 beta: int | None = None) -> list[tuple[int, int]]:
    """Choose the cluster pairs entering the global score.

    naive: all K choose 2 pairs. sort: the beta pairs with largest
    score, ties broken lexicographically. std: pairs whose squared cut
    difference exceeds nine times the cut sum (a 3-sigma directionality
    test under a null of random edge directions); may be empty.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    k = ci.shape[0]
    all_pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
    if variant == "naive":
        return all_pairs
    if variant == "sort":
        if beta is None:
            raise ValueError("the sort variant needs beta")
        max_beta = k * (k - 1) // 2
        if not (1 <= beta <= max_beta):
            raise ValueError(f"beta must lie in [1, {max_beta}], got {beta}")
        ranked = sorted(all_pairs, key=lambda pair: (-ci[pair], pair))
        return ranked[:beta]
    if cuts is None:
        raise ValueError("the std variant needs the cut matrix")
    selected = []
    for a, b in all_pairs:
        diff = cuts[a, b] - cuts[b, a]
        if diff * diff > 9.0 * (cuts[a, b] + cuts[b, a]):
            selected.append((a, b))
    return selected


@dataclass
class PairScores:
    """Cuts, volumes, pairwise scores and the selected pair list."""

    cuts: np.ndarray
    volumes: np.ndarray
    ci: np.ndarray
    selected: list[tuple[int, int]]
    variant_used: str


def pair_scores(g: SparseDigraph, p: np.ndarray, norm: str, variant: str,
                beta: int | None = None) -> PairScores:
    """All pairwise quantities for one (normalization, variant) choice.

    An empty std selection falls back to naive for this evaluation.
    """
    p = _check_assignment(g, p)
    if p.shape[1] < 2:
        raise ValueError("imbalance scores need at least two clusters")
    cuts = probabilistic_cut(g, p)
    volumes = probabilistic_volume(g, p)
    ci = pairwise_ci(cuts, volumes, norm)
    selected = select_pairs(ci, variant, cuts=cuts, beta=beta)
    used = variant
    if variant == "std" and not selected:
        selected = select_pairs(ci, "naive")
        used = "naive"
    return PairScores(cuts, volumes, ci, selected, used)


def global_objective(g: SparseDigraph, p: np.ndarray, norm: str, variant: str,
                     beta: int | None = None) -> tuple[float, float]:
    """Global imbalance objective O in [0, 1] and the loss L = 1 - O."""
    scores = pair_scores(g, p, norm, variant, beta)
    objective = float(np.mean([scores.ci[pair] for pair in scores.selected]))
    return objective, 1.0 - objective


def null_threshold_check(weights) -> tuple[float, float]:
    """Variance ||w||^2 of the null cut difference and its 3-sigma bound.

    Under random independent edge directions the cut difference between
    two clusters is approximately normal with mean 0 and variance equal
    to the sum of squared edge weights.
    """
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size == 0:
        raise ValueError("need at least one edge weight")
    variance = float(np.sum(weights ** 2))
    return variance, 3.0 * float(np.sqrt(variance))


def _pair_gradients(cuts: np.ndarray, volumes: np.ndarray, norm: str,
                    selected: list[tuple[int, int]]):
    """d(objective)/d(cuts) and d(objective)/d(volumes) for mean-of-CI.

    Pair selection is held fixed (piecewise constant in P), so the
    gradient flows only through the scores of the selected pairs.
    """
    grad_w = np.zeros_like(cuts)
    grad_v = np.zeros_like(volumes)
    m = len(selected)
    if m == 0:
        return grad_w, grad_v
    weight = 1.0 / m
    if norm == "vol_min":
        scale, scale_idx = _second_largest_volume(volumes)
    for a, b in selected:
        wkl, wlk = cuts[a, b], cuts[b, a]
        diff = wkl - wlk
        sign = np.sign(diff)
        adiff = abs(diff)
        if norm == "vol_sum":
            denom = volumes[a] + volumes[b]
            if denom <= 0:
                continue
            grad_w[a, b] += weight * 2.0 * sign / denom
            grad_w[b, a] -= weight * 2.0 * sign / denom
            grad_v[a] -= weight * 2.0 * adiff / denom ** 2
            grad_v[b] -= weight * 2.0 * adiff / denom ** 2
        elif norm == "plain":
            s = wkl + wlk
            if s <= 0:
                continue
            grad_w[a, b] += weight * (sign * s - adiff) / s ** 2
            grad_w[b, a] += weight * (-sign * s - adiff) / s ** 2
        elif norm == "vol_max":
            vmax = max(volumes[a], volumes[b])
            if vmax <= 0:
                continue
            arg = a if volumes[a] >= volumes[b] else b
            grad_w[a, b] += weight * sign / vmax
            grad_w[b, a] -= weight * sign / vmax
            grad_v[arg] -= weight * adiff / vmax ** 2
        else:  # vol_min
            s = wkl + wlk
            if s <= 0 or scale <= 0:
                continue
            plain = adiff / s
            vmin = min(volumes[a], volumes[b])
            arg = a if volumes[a] <= volumes[b] else b
            grad_w[a, b] += weight * ((sign * s - adiff) / s ** 2) * vmin / scale
            grad_w[b, a] += weight * ((-sign * s - adiff) / s ** 2) * vmin / scale
            grad_v[arg] += weight * plain / scale
            grad_v[scale_idx] -= weight * plain * vmin / scale ** 2
    return grad_w, grad_v


def imbalance_loss_and_grad(g: SparseDigraph, p: np.ndarray, norm: str, variant: str,
                            beta: int | None = None):
    """Loss L = 1 - O and its exact gradient with respect to P.

    Returns (loss, dL/dP, variant_used). The cut part of the gradient
    is A P G^T + A^T P G for G = dO/dW, computed with sparse products
    only; the volume part is an outer product with the degree vector.
    """
    scores = pair_scores(g, p, norm, variant, beta)
    objective = float(np.mean([scores.ci[pair] for pair in scores.selected]))
    grad_w, grad_v = _pair_gradients(scores.cuts, scores.volumes, norm, scores.selected)
    ap = g.csr @ p
    atp = g.csr_t @ p
    dobj_dp = ap @ grad_w.T + atp @ grad_w
    dobj_dp += np.outer(g.degree_vector(), grad_v)
    return 1.0 - objective, -dobj_dp, scores.variant_used
