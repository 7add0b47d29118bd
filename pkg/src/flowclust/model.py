"""Directed hop-aggregation network producing soft cluster assignments.

Two bias-free 2-layer MLPs map node features to source and target
hidden states; each state is propagated through powers of the
row-normalized adjacency (source side) and of its transpose (target
side) with one learnable scalar per hop; the concatenated embeddings
pass through a linear head and a row softmax. Powers of the
propagation matrices are never formed explicitly: the h-hop sums are
accumulated by repeated sparse products, so cost stays
O(|E| d h + n d^2 + n d K) with no n x n allocation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import PropagationMatrix, SparseDigraph

__all__ = ["ModelParams", "ForwardTrace", "init_params", "mlp_forward",
           "hop_aggregate", "forward", "softmax_rows"]


@dataclass
class ModelParams:
    """All trainable tensors plus the fixed hyperparameters."""

    w1_source: np.ndarray   # (d_in, d)
    w2_source: np.ndarray   # (d, d)
    w1_target: np.ndarray
    w2_target: np.ndarray
    hop_source: np.ndarray  # (h + 1,)
    hop_target: np.ndarray
    head_weight: np.ndarray  # (2d, K)
    head_bias: np.ndarray    # (K,)
    hops: int = 2
    dropout: float = 0.5

    def __post_init__(self):
        if self.hops < 2:
            raise ValueError("hop count must be at least 2")
        d_in, d = self.w1_source.shape
        k = self.head_weight.shape[1]
        expect = {
            "w1_source": (d_in, d), "w2_source": (d, d),
            "w1_target": (d_in, d), "w2_target": (d, d),
            "hop_source": (self.hops + 1,), "hop_target": (self.hops + 1,),
            "head_weight": (2 * d, k), "head_bias": (k,),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def d_in(self) -> int:
        return self.w1_source.shape[0]

    @property
    def d(self) -> int:
        return self.w1_source.shape[1]

    @property
    def k(self) -> int:
        return self.head_weight.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        """Name -> array views of every trainable tensor, in a fixed order."""
        return {
            "w1_source": self.w1_source, "w2_source": self.w2_source,
            "w1_target": self.w1_target, "w2_target": self.w2_target,
            "hop_source": self.hop_source, "hop_target": self.hop_target,
            "head_weight": self.head_weight, "head_bias": self.head_bias,
        }

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.w1_source.copy(), self.w2_source.copy(),
            self.w1_target.copy(), self.w2_target.copy(),
            self.hop_source.copy(), self.hop_target.copy(),
            self.head_weight.copy(), self.head_bias.copy(),
            hops=self.hops, dropout=self.dropout,
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(d_in: int, d: int, k: int, hops: int = 2, dropout: float = 0.5,
                rng: np.random.Generator | None = None) -> ModelParams:
    """Glorot-uniform MLP and head weights, all-ones hop weights, zero bias."""
    rng = rng if rng is not None else np.random.default_rng(0)
    return ModelParams(
        w1_source=_glorot(rng, d_in, d),
        w2_source=_glorot(rng, d, d),
        w1_target=_glorot(rng, d_in, d),
        w2_target=_glorot(rng, d, d),
        hop_source=np.ones(hops + 1),
        hop_target=np.ones(hops + 1),
        head_weight=_glorot(rng, 2 * d, k),
        head_bias=np.zeros(k),
        hops=hops,
        dropout=dropout,
    )


def mlp_forward(x: np.ndarray, w1: np.ndarray, w2: np.ndarray,
                dropout_mask: np.ndarray | None = None):
    """Bias-free 2-layer MLP: Dropout(ReLU(X W1)) W2.

    ``dropout_mask`` already carries the inverted-dropout scale; pass
    None when evaluating. Returns (H, cache) with the intermediates
    needed for backpropagation.
    """
    if x.shape[1] != w1.shape[0]:
        raise ValueError(f"feature dim {x.shape[1]} does not match W1 {w1.shape}")
    pre = x @ w1
    hidden = np.maximum(pre, 0.0)
    dropped = hidden * dropout_mask if dropout_mask is not None else hidden
    out = dropped @ w2
    return out, (pre, dropped)


def hop_aggregate(prop: PropagationMatrix, h_mat: np.ndarray, hop_weights: np.ndarray):
    """Sum of hop_weights[i] * prop^i @ H for i = 0..h, built iteratively.

    Returns (Z, states) where states[i] = prop^i @ H, cached for the
    backward pass.
    """
    if h_mat.shape[0] != prop.n:
        raise ValueError(f"H has {h_mat.shape[0]} rows, expected {prop.n}")
    if len(hop_weights) < 3:
        raise ValueError("need hop weights for at least hops >= 2")
    states = [h_mat]
    z = hop_weights[0] * h_mat
    current = h_mat
    for i in range(1, len(hop_weights)):
        current = prop.matrix @ current
        states.append(current)
        z = z + hop_weights[i] * current
    return z, states


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardTrace:
    """Everything the backward pass needs from one forward evaluation."""

    graph: SparseDigraph
    props: tuple[PropagationMatrix, PropagationMatrix]
    x: np.ndarray
    params: ModelParams
    mode: str
    mask_source: np.ndarray | None
    mask_target: np.ndarray | None
    mlp_cache_source: tuple
    mlp_cache_target: tuple
    hop_states_source: list = field(repr=False, default_factory=list)
    hop_states_target: list = field(repr=False, default_factory=list)
    z: np.ndarray = None
    logits: np.ndarray = None
    p: np.ndarray = None


def forward(g: SparseDigraph, x: np.ndarray, params: ModelParams, mode: str = "eval",
            rng: np.random.Generator | None = None, tau: float = 0.5,
            props: tuple | None = None) -> ForwardTrace:
    """Full forward pass: MLPs, hop aggregation, head, row softmax.

    ``mode="train"`` samples fresh inverted-dropout masks from ``rng``;
    eval mode is mask-free. Propagation matrices are cached on the
    graph per tau unless supplied.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.n:
        raise ValueError(f"feature matrix has {x.shape[0]} rows, expected {g.n}")
    if props is None:
        props = g.propagation_pair(tau)
    prop_s, prop_t = props

    mask_s = mask_t = None
    if mode == "train" and params.dropout > 0:
        if rng is None:
            raise ValueError("train mode needs an rng for dropout masks")
        keep = 1.0 - params.dropout
        shape = (g.n, params.d)
        mask_s = (rng.random(shape) < keep) / keep
        mask_t = (rng.random(shape) < keep) / keep

    h_s, cache_s = mlp_forward(x, params.w1_source, params.w2_source, mask_s)
    h_t, cache_t = mlp_forward(x, params.w1_target, params.w2_target, mask_t)
    z_s, states_s = hop_aggregate(prop_s, h_s, params.hop_source)
    z_t, states_t = hop_aggregate(prop_t, h_t, params.hop_target)
    z = np.hstack([z_s, z_t])
    logits = z @ params.head_weight + params.head_bias
    p = softmax_rows(logits)
    return ForwardTrace(
        graph=g, props=props, x=x, params=params, mode=mode,
        mask_source=mask_s, mask_target=mask_t,
        mlp_cache_source=cache_s, mlp_cache_target=cache_t,
        hop_states_source=states_s, hop_states_target=states_t,
        z=z, logits=logits, p=p,
    )
