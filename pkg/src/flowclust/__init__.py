"""Directed-graph clustering by probabilistic flow imbalance."""

__version__ = "0.1.0"

from .graphs import (SparseDigraph, PropagationMatrix, ingest_edge_list, row_normalize,
                     largest_weakly_connected_component, spmv, ratio_transform)
from .dsbm import (MetaGraph, DsbmSpec, LabeledGraph, build_meta_graph, cluster_sizes,
                   sample_dsbm, default_beta)
from .imbalance import (probabilistic_cut, probabilistic_volume, pairwise_ci, select_pairs,
                        global_objective, pair_scores, null_threshold_check,
                        imbalance_loss_and_grad, NORMALIZATIONS, VARIANTS)
from .spectral import (HermitianOperator, build_hermitian, top_k_eigenpairs, make_features,
                       standardize_columns, kmeans)
from .model import ModelParams, ForwardTrace, init_params, mlp_forward, hop_aggregate, forward
from .training import (Splits, TrainConfig, LossSpec, SeedBatch, Adam, make_splits,
                       sample_triplets, supervised_losses, backward, train,
                       save_checkpoint, load_checkpoint)
from .evaluation import (adjusted_rand_index, normalized_mutual_information,
                         predicted_flow_matrix, one_hot, PartitionReport, report)
from .estimators import (FlowImbalanceClustering, HermitianEmbedding,
                         HermitianSpectralClustering)

__all__ = [
    "SparseDigraph", "PropagationMatrix", "ingest_edge_list", "row_normalize",
    "largest_weakly_connected_component", "spmv", "ratio_transform",
    "MetaGraph", "DsbmSpec", "LabeledGraph", "build_meta_graph", "cluster_sizes",
    "sample_dsbm", "default_beta",
    "probabilistic_cut", "probabilistic_volume", "pairwise_ci", "select_pairs",
    "global_objective", "pair_scores", "null_threshold_check", "imbalance_loss_and_grad",
    "NORMALIZATIONS", "VARIANTS",
    "HermitianOperator", "build_hermitian", "top_k_eigenpairs", "make_features",
    "standardize_columns", "kmeans",
    "ModelParams", "ForwardTrace", "init_params", "mlp_forward", "hop_aggregate", "forward",
    "Splits", "TrainConfig", "LossSpec", "SeedBatch", "Adam", "make_splits",
    "sample_triplets", "supervised_losses", "backward", "train",
    "save_checkpoint", "load_checkpoint",
    "adjusted_rand_index", "normalized_mutual_information", "predicted_flow_matrix",
    "one_hot", "PartitionReport", "report",
    "FlowImbalanceClustering", "HermitianEmbedding", "HermitianSpectralClustering",
]
