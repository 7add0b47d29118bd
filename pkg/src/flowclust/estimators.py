"""Scikit-learn style estimators wrapping the functional core.

The clusterers take an adjacency matrix as X (a SparseDigraph, a scipy
sparse matrix, or a dense square array), in the spirit of
``affinity="precomputed"`` estimators, so they compose with the usual
`fit` / `fit_predict` / `get_params` machinery.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from . import spectral, training
from .model import forward, init_params
from .validation import as_digraph, check_labels

__all__ = [
    "FlowImbalanceClustering",
    "HermitianEmbedding",
    "HermitianSpectralClustering",
]


class HermitianEmbedding(BaseEstimator, TransformerMixin):
    """Spectral node features from the Hermitian flow operator.

    Transforms an adjacency matrix into an n x (2 * n_components)
    matrix of standardized real and imaginary eigenvector parts.
    """

    def __init__(self, n_components=3, normalization="random_walk"):
        self.n_components = n_components
        self.normalization = normalization

    def fit(self, X, y=None):
        as_digraph(X)
        return self

    def transform(self, X):
        g = as_digraph(X)
        return spectral.make_features(g, self.n_components, self.normalization)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X)


class HermitianSpectralClustering(BaseEstimator, ClusterMixin):
    """K-means on the Hermitian spectral embedding (a purely spectral
    baseline; no trainable parameters)."""

    def __init__(self, n_clusters=3, normalization="none", restarts=10, random_state=0):
        self.n_clusters = n_clusters
        self.normalization = normalization
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        g = as_digraph(X)
        features = spectral.make_features(g, self.n_clusters, self.normalization)
        self.embedding_ = features
        self.labels_ = spectral.kmeans(features, self.n_clusters,
                                       restarts=self.restarts, seed=self.random_state)
        return self


class FlowImbalanceClustering(BaseEstimator, ClusterMixin):
    """End-to-end directed clustering by maximizing flow imbalance.

    Fits the hop-aggregation network against the self-supervised
    imbalance loss (optionally plus seed supervision) and exposes the
    resulting hard labels and soft assignment.

    Parameters mirror the training defaults: Adam with learning rate
    0.01 and weight decay 5e-4, at most 1000 epochs with patience 200,
    sort/vol_sum loss, tau = 0.5, dropout 0.5, 32 hidden units, 2 hops.

    Pass ``y`` to :meth:`fit` to enable stratified splits, per-epoch
    test ARI logging and, with ``seed_ratio > 0``, seed supervision.

    Attributes
    ----------
    labels_ : hard cluster assignment (argmax of probabilities_)
    probabilities_ : n x K soft assignment matrix
    history_ : per-epoch training records
    splits_ : the train/validation/test node split used
    """

    def __init__(self, n_clusters=3, hidden=32, hops=2, tau=0.5, dropout=0.5,
                 loss_norm="vol_sum", loss_variant="sort", beta=None,
                 learning_rate=0.01, weight_decay=5e-4, max_epochs=1000,
                 patience=200, std_warmup_epochs=50, warmup_beta=3,
                 gamma_seed=50.0, gamma_triplet=0.1,
                 feature_normalization="random_walk", features=None,
                 test_fraction=0.1, validation_fraction=0.1, seed_ratio=0.0,
                 random_state=0):
        self.n_clusters = n_clusters
        self.hidden = hidden
        self.hops = hops
        self.tau = tau
        self.dropout = dropout
        self.loss_norm = loss_norm
        self.loss_variant = loss_variant
        self.beta = beta
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.std_warmup_epochs = std_warmup_epochs
        self.warmup_beta = warmup_beta
        self.gamma_seed = gamma_seed
        self.gamma_triplet = gamma_triplet
        self.feature_normalization = feature_normalization
        self.features = features
        self.test_fraction = test_fraction
        self.validation_fraction = validation_fraction
        self.seed_ratio = seed_ratio
        self.random_state = random_state

    def _train_config(self) -> training.TrainConfig:
        beta = self.beta
        if beta is None and self.loss_variant == "sort":
            beta = max(self.n_clusters - 1, 1)
        return training.TrainConfig(
            max_epochs=self.max_epochs, patience=self.patience,
            lr=self.learning_rate, weight_decay=self.weight_decay,
            loss_norm=self.loss_norm, loss_variant=self.loss_variant, beta=beta,
            std_warmup_epochs=self.std_warmup_epochs, warmup_beta=self.warmup_beta,
            gamma_seed=self.gamma_seed, gamma_triplet=self.gamma_triplet,
            tau=self.tau, seed=self.random_state,
        )

    def fit(self, X, y=None):
        g = as_digraph(X)
        labels = check_labels(y, g.n) if y is not None else None
        if self.features is not None:
            x = np.asarray(self.features, dtype=np.float64)
            if x.shape[0] != g.n:
                raise ValueError(f"features have {x.shape[0]} rows for {g.n} nodes")
        else:
            x = spectral.make_features(g, self.n_clusters, self.feature_normalization)

        seed_seq = np.random.SeedSequence(self.random_state)
        split_rng, init_rng = [np.random.default_rng(s) for s in seed_seq.spawn(2)]
        splits = training.make_splits(
            g.n, labels=labels, test_frac=self.test_fraction,
            val_frac=self.validation_fraction,
            seed_ratio=self.seed_ratio if labels is not None else 0.0,
            rng=split_rng,
        )
        params = init_params(x.shape[1], self.hidden, self.n_clusters,
                             hops=self.hops, dropout=self.dropout, rng=init_rng)
        best, log = training.train(g, x, params, splits, self._train_config(), labels=labels)

        trace = forward(g, x, best, "eval", tau=self.tau)
        self.model_ = best
        self.input_features_ = x
        self.probabilities_ = trace.p
        self.labels_ = trace.p.argmax(axis=1)
        self.history_ = log
        self.splits_ = splits
        return self

    def fit_predict(self, X, y=None):
        """Fit and return hard labels; ``y`` reaches :meth:`fit` (the stock
        mixin would drop it), enabling stratified splits and seed use."""
        return self.fit(X, y).labels_

    def predict_proba(self, X=None):
        """Soft assignment of the fitted graph (transductive: X is ignored)."""
        if not hasattr(self, "probabilities_"):
            raise RuntimeError("estimator is not fitted")
        return self.probabilities_
