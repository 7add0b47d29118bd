"""Training protocol: splits, composite loss, exact gradients, Adam.

The composite loss is
    L = L_imbalance + gamma_seed * (L_CE + gamma_triplet * L_triplet),
with the imbalance part acting on the training-induced subgraph and
the supervised parts only present when seed nodes are given. All
gradients are exact reverse-mode derivatives; pair selection inside
the imbalance score is piecewise constant and excluded from the
differentiation path.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .evaluation import adjusted_rand_index
from .graphs import SparseDigraph
from .imbalance import global_objective, imbalance_loss_and_grad
from .model import ForwardTrace, ModelParams, forward

__all__ = [
    "Splits", "TrainConfig", "LossSpec", "SeedBatch", "EpochRecord", "Adam",
    "make_splits", "sample_triplets", "supervised_losses", "backward",
    "train", "save_checkpoint", "load_checkpoint",
]


@dataclass(frozen=True)
class Splits:
    """Disjoint train/validation/test node sets plus optional seeds."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: np.ndarray
    seed_ratio: float = 0.0

    def __post_init__(self):
        all_ids = np.concatenate([self.train, self.validation, self.test])
        if np.unique(all_ids).size != all_ids.size:
            raise ValueError("train/validation/test sets overlap")
        if self.seed.size and not np.isin(self.seed, self.train).all():
            raise ValueError("seed nodes must be training nodes")

    @property
    def n(self) -> int:
        return self.train.size + self.validation.size + self.test.size


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def make_splits(n: int, labels=None, test_frac: float = 0.1, val_frac: float = 0.1,
                seed_ratio: float = 0.0, rng=None) -> Splits:
    """Sample node splits, stratified per cluster when labels are given.

    Test and validation counts use the ceiling of fraction * cluster
    size, the remainder trains. Seed nodes are drawn uniformly from
    the training part of each cluster at ``seed_ratio``.
    """
    rng = _as_rng(rng)
    if not (0 <= test_frac and 0 <= val_frac and test_frac + val_frac <= 1):
        raise ValueError("split fractions must be nonnegative and sum to at most 1")
    if not (0 <= seed_ratio <= 1):
        raise ValueError("seed_ratio must lie in [0, 1]")
    if labels is None:
        if seed_ratio > 0:
            raise ValueError("seed nodes need labels")
        groups = [np.arange(n)]
    else:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per node")
        groups = [np.flatnonzero(labels == c) for c in np.unique(labels)]

    train_parts, val_parts, test_parts, seed_parts = [], [], [], []
    for members in groups:
        m = members.size
        n_test = int(np.ceil(test_frac * m))
        n_val = int(np.ceil(val_frac * m))
        if n_test + n_val >= m:
            raise ValueError(
                f"cluster of size {m} too small for test/validation ceilings "
                f"{n_test}/{n_val}"
            )
        shuffled = rng.permutation(members)
        test_parts.append(shuffled[:n_test])
        val_parts.append(shuffled[n_test:n_test + n_val])
        train_members = shuffled[n_test + n_val:]
        train_parts.append(train_members)
        if seed_ratio > 0:
            n_seed = int(round(seed_ratio * train_members.size))
            seed_parts.append(rng.permutation(train_members)[:n_seed])

    train = np.sort(np.concatenate(train_parts))
    seed = np.sort(np.concatenate(seed_parts)) if seed_parts else np.empty(0, dtype=np.int64)
    ratio = seed.size / train.size if train.size else 0.0
    return Splits(
        train=train,
        validation=np.sort(np.concatenate(val_parts)),
        test=np.sort(np.concatenate(test_parts)),
        seed=seed,
        seed_ratio=ratio,
    )


# ---------------------------------------------------------------------------
# supervised losses
# ---------------------------------------------------------------------------

def sample_triplets(seed_positions: np.ndarray, seed_labels: np.ndarray,
                    cap: int = 5000, rng=None):
    """Random (anchor, same-cluster, other-cluster) node triplets.

    Draws min(10 * n_seeds, cap) triplets. Seed clusters with a single
    member cannot anchor triplets and are skipped with a warning; an
    empty result is returned when no valid anchors exist.
    """
    rng = _as_rng(rng)
    seed_positions = np.asarray(seed_positions, dtype=np.int64)
    seed_labels = np.asarray(seed_labels, dtype=np.int64)
    empty = (np.empty(0, np.int64),) * 3
    if seed_positions.size == 0:
        return empty
    clusters, counts = np.unique(seed_labels, return_counts=True)
    singletons = clusters[counts == 1]
    if singletons.size:
        warnings.warn(
            f"seed clusters {singletons.tolist()} have a single member and cannot "
            "anchor triplets; skipping them"
        )
    valid = (counts[np.searchsorted(clusters, seed_labels)] >= 2) & \
            (seed_positions.size - counts[np.searchsorted(clusters, seed_labels)] >= 1)
    anchors_pool = np.flatnonzero(valid)
    if anchors_pool.size == 0 or clusters.size < 2:
        if clusters.size < 2:
            warnings.warn("triplet loss needs seeds from at least two clusters; skipping")
        return empty

    count = min(10 * seed_positions.size, cap)
    anchor_idx = anchors_pool[rng.integers(0, anchors_pool.size, size=count)]

    members = {c: np.flatnonzero(seed_labels == c) for c in clusters}
    rank_in_cluster = np.empty(seed_positions.size, dtype=np.int64)
    for c in clusters:
        rank_in_cluster[members[c]] = np.arange(members[c].size)
    complement = {c: np.flatnonzero(seed_labels != c) for c in clusters}

    pos_idx = np.empty(count, dtype=np.int64)
    neg_idx = np.empty(count, dtype=np.int64)
    anchor_clusters = seed_labels[anchor_idx]
    for c in clusters:
        here = np.flatnonzero(anchor_clusters == c)
        if here.size == 0:
            continue
        own = members[c]
        draw = rng.integers(0, own.size - 1, size=here.size)
        draw += draw >= rank_in_cluster[anchor_idx[here]]
        pos_idx[here] = own[draw]
        other = complement[c]
        neg_idx[here] = other[rng.integers(0, other.size, size=here.size)]
    return (seed_positions[anchor_idx], seed_positions[pos_idx], seed_positions[neg_idx])


def _ce_loss_grad(p: np.ndarray, seed_idx: np.ndarray, seed_labels: np.ndarray):
    probs = p[seed_idx, seed_labels]
    loss = float(-np.mean(np.log(probs)))
    dp = np.zeros_like(p)
    dp[seed_idx, seed_labels] = -1.0 / (seed_idx.size * probs)
    return loss, dp


def _triplet_loss_grad(z: np.ndarray, triplets):
    anchors, positives, negatives = triplets
    dz = np.zeros_like(z)
    if anchors.size == 0:
        return 0.0, dz
    za, zp, zn = z[anchors], z[positives], z[negatives]
    na = np.linalg.norm(za, axis=1)
    npos = np.linalg.norm(zp, axis=1)
    nneg = np.linalg.norm(zn, axis=1)
    ok = (na > 1e-12) & (npos > 1e-12) & (nneg > 1e-12)
    # zero-norm embeddings contribute neither value nor gradient
    cs_ap = np.zeros(anchors.size)
    cs_an = np.zeros(anchors.size)
    dots_ap = np.sum(za * zp, axis=1)
    dots_an = np.sum(za * zn, axis=1)
    cs_ap[ok] = dots_ap[ok] / (na[ok] * npos[ok])
    cs_an[ok] = dots_an[ok] / (na[ok] * nneg[ok])
    hinge = cs_an - cs_ap
    loss = float(np.mean(np.maximum(hinge, 0.0)))

    active = ok & (hinge > 0)
    if active.any():
        w = 1.0 / anchors.size
        ia = anchors[active]
        za_, zp_, zn_ = za[active], zp[active], zn[active]
        na_, np_, nn_ = na[active, None], npos[active, None], nneg[active, None]
        csap_, csan_ = cs_ap[active, None], cs_an[active, None]
        d_anchor = (zn_ / (na_ * nn_) - csan_ * za_ / na_ ** 2) \
            - (zp_ / (na_ * np_) - csap_ * za_ / na_ ** 2)
        d_neg = za_ / (na_ * nn_) - csan_ * zn_ / nn_ ** 2
        d_pos = -(za_ / (na_ * np_) - csap_ * zp_ / np_ ** 2)
        np.add.at(dz, ia, w * d_anchor)
        np.add.at(dz, negatives[active], w * d_neg)
        np.add.at(dz, positives[active], w * d_pos)
    return loss, dz


def supervised_losses(p: np.ndarray, z: np.ndarray, seed_idx, seed_labels,
                      triplets=None, cap: int = 5000, rng=None):
    """Cross-entropy on seed assignments and the cosine triplet loss.

    The triplet hinge keeps same-cluster pairs more similar than
    cross-cluster pairs: [CS(anchor, negative) - CS(anchor, positive)]_+.
    ``triplets`` may be pre-sampled; otherwise they are drawn here.
    """
    seed_idx = np.asarray(seed_idx, dtype=np.int64)
    seed_labels = np.asarray(seed_labels, dtype=np.int64)
    if seed_idx.size == 0:
        raise ValueError("supervised losses need a non-empty seed set")
    if triplets is None:
        triplets = sample_triplets(seed_idx, seed_labels, cap=cap, rng=rng)
    l_ce, _ = _ce_loss_grad(p, seed_idx, seed_labels)
    l_trip, _ = _triplet_loss_grad(z, triplets)
    return l_ce, l_trip


# ---------------------------------------------------------------------------
# reverse-mode gradients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossSpec:
    norm: str = "vol_sum"
    variant: str = "sort"
    beta: int | None = None
    gamma_seed: float = 50.0
    gamma_triplet: float = 0.1


@dataclass(frozen=True)
class SeedBatch:
    """Seed supervision for one loss evaluation (indices are trace-local)."""

    indices: np.ndarray
    labels: np.ndarray
    triplets: tuple


@dataclass
class BackwardResult:
    loss: float
    imbalance_loss: float
    ce_loss: float
    triplet_loss: float
    variant_used: str
    grads: dict


def _mlp_backward(x, w2, cache, mask, d_out):
    pre, dropped = cache
    d_w2 = dropped.T @ d_out
    d_dropped = d_out @ w2.T
    d_hidden = d_dropped * mask if mask is not None else d_dropped
    d_pre = d_hidden * (pre > 0)
    d_w1 = x.T @ d_pre
    return d_w1, d_w2


def _hop_backward(prop, states, hop_weights, d_z):
    d_omega = np.array([np.sum(d_z * state) for state in states])
    h = len(hop_weights) - 1
    d_state = hop_weights[h] * d_z
    for i in range(h - 1, -1, -1):
        d_state = hop_weights[i] * d_z + prop.matrix_t @ d_state
    return d_omega, d_state


def backward(trace: ForwardTrace, loss_spec: LossSpec, seeds: SeedBatch | None = None) -> BackwardResult:
    """Composite loss and exact gradients for every model tensor."""
    params = trace.params
    p, z = trace.p, trace.z
    d = params.d

    l_imb, dp, variant_used = imbalance_loss_and_grad(
        trace.graph, p, loss_spec.norm, loss_spec.variant, loss_spec.beta)
    l_ce = l_trip = 0.0
    dz = np.zeros_like(z)
    if seeds is not None and seeds.indices.size:
        l_ce, dp_ce = _ce_loss_grad(p, seeds.indices, seeds.labels)
        l_trip, dz_trip = _triplet_loss_grad(z, seeds.triplets)
        dp = dp + loss_spec.gamma_seed * dp_ce
        dz += loss_spec.gamma_seed * loss_spec.gamma_triplet * dz_trip
    loss = l_imb + loss_spec.gamma_seed * (l_ce + loss_spec.gamma_triplet * l_trip)

    # softmax rows: dlogits = P * (dP - sum(dP * P))
    d_logits = p * (dp - np.sum(dp * p, axis=1, keepdims=True))
    d_head_w = z.T @ d_logits
    d_head_b = d_logits.sum(axis=0)
    dz += d_logits @ params.head_weight.T

    prop_s, prop_t = trace.props
    d_omega_s, d_h_s = _hop_backward(prop_s, trace.hop_states_source, params.hop_source, dz[:, :d])
    d_omega_t, d_h_t = _hop_backward(prop_t, trace.hop_states_target, params.hop_target, dz[:, d:])
    d_w1_s, d_w2_s = _mlp_backward(trace.x, params.w2_source, trace.mlp_cache_source,
                                   trace.mask_source, d_h_s)
    d_w1_t, d_w2_t = _mlp_backward(trace.x, params.w2_target, trace.mlp_cache_target,
                                   trace.mask_target, d_h_t)
    grads = {
        "w1_source": d_w1_s, "w2_source": d_w2_s,
        "w1_target": d_w1_t, "w2_target": d_w2_t,
        "hop_source": d_omega_s, "hop_target": d_omega_t,
        "head_weight": d_head_w, "head_bias": d_head_b,
    }
    return BackwardResult(loss, l_imb, l_ce, l_trip, variant_used, grads)


class Adam:
    """Adam with coupled L2 weight decay added to the raw gradients."""

    def __init__(self, params: ModelParams, lr: float = 0.01, weight_decay: float = 5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}

    def step(self, params: ModelParams, grads: dict) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, arr in params.tensors().items():
            g = grads[name] + self.weight_decay * arr
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    patience: int = 200
    lr: float = 0.01
    weight_decay: float = 5e-4
    loss_norm: str = "vol_sum"
    loss_variant: str = "sort"
    beta: int | None = None
    std_warmup_epochs: int = 50
    warmup_beta: int = 3
    gamma_seed: float = 50.0
    gamma_triplet: float = 0.1
    triplet_cap: int = 5000
    tau: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.loss_variant == "sort" and self.beta is None:
            raise ValueError("the sort variant needs beta")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_objective: float
    test_ari: float | None
    variant_used: str


def _param_norms(params: ModelParams) -> str:
    return ", ".join(f"{name}={np.linalg.norm(arr):.3e}"
                     for name, arr in params.tensors().items())


def train(g: SparseDigraph, x: np.ndarray, params: ModelParams, splits: Splits,
          config: TrainConfig, labels=None):
    """Full-batch training with early stopping on the validation objective.

    Each epoch runs forward/backward on the training-induced subgraph
    and one Adam step; the validation metric is the imbalance objective
    on the validation-induced subgraph (higher is better), and the
    parameters of the best validation epoch are returned. Training
    stops after ``patience`` epochs without improvement. When the
    configured variant is "std", the first ``std_warmup_epochs`` epochs
    use sort with ``warmup_beta`` instead.

    Returns (best_params, log) where log is a list of EpochRecord.
    """
    x = np.asarray(x, dtype=np.float64)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
    if splits.seed.size and labels is None:
        raise ValueError("seed supervision needs labels")

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    g_train = g.induced_subgraph(splits.train)
    x_train = x[splits.train]
    g_val = g.induced_subgraph(splits.validation)
    x_val = x[splits.validation]
    props_train = g_train.propagation_pair(config.tau)
    props_val = g_val.propagation_pair(config.tau)

    seed_positions = np.searchsorted(splits.train, splits.seed)
    seed_labels = labels[splits.seed] if splits.seed.size else None

    optimizer = Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    best_params = params.copy()
    best_val = -np.inf
    best_epoch = 0
    log: list[EpochRecord] = []

    for epoch in range(1, config.max_epochs + 1):
        if config.loss_variant == "std" and epoch <= config.std_warmup_epochs:
            spec = LossSpec(config.loss_norm, "sort", config.warmup_beta,
                            config.gamma_seed, config.gamma_triplet)
        else:
            spec = LossSpec(config.loss_norm, config.loss_variant, config.beta,
                            config.gamma_seed, config.gamma_triplet)
        trace = forward(g_train, x_train, params, "train", rng=rng,
                        tau=config.tau, props=props_train)
        seeds = None
        if seed_positions.size:
            triplets = sample_triplets(seed_positions, seed_labels,
                                       cap=config.triplet_cap, rng=rng)
            seeds = SeedBatch(seed_positions, seed_labels, triplets)
        result = backward(trace, spec, seeds)
        if not (np.isfinite(result.loss) and np.isfinite(trace.p).all()):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}; parameter norms: {_param_norms(params)}"
            )
        optimizer.step(params, result.grads)

        val_trace = forward(g_val, x_val, params, "eval", tau=config.tau, props=props_val)
        val_objective, _ = global_objective(g_val, val_trace.p, config.loss_norm,
                                            config.loss_variant, config.beta)
        test_ari = None
        if labels is not None and splits.test.size:
            full = forward(g, x, params, "eval", tau=config.tau)
            predicted = full.p.argmax(axis=1)
            test_ari = adjusted_rand_index(labels[splits.test], predicted[splits.test])
        log.append(EpochRecord(epoch, result.loss, val_objective, test_ari,
                               result.variant_used))

        if val_objective > best_val:
            best_val = val_objective
            best_epoch = epoch
            best_params = params.copy()
        if epoch - best_epoch >= config.patience:
            break
    return best_params, log


def save_checkpoint(params: ModelParams, path) -> None:
    """Persist all tensors as an .npz archive (shape and dtype headers
    come from the npy format; arrays are little-endian float64)."""
    np.savez(path, hops=params.hops, dropout=params.dropout, **params.tensors())


def load_checkpoint(path) -> ModelParams:
    with np.load(path) as data:
        return ModelParams(
            w1_source=data["w1_source"], w2_source=data["w2_source"],
            w1_target=data["w1_target"], w2_target=data["w2_target"],
            hop_source=data["hop_source"], hop_target=data["hop_target"],
            head_weight=data["head_weight"], head_bias=data["head_bias"],
            hops=int(data["hops"]), dropout=float(data["dropout"]),
        )
