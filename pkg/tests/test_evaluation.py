import numpy as np
import pytest

from flowclust import (DsbmSpec, adjusted_rand_index, build_meta_graph, global_objective,
                       ingest_edge_list, normalized_mutual_information, one_hot,
                       predicted_flow_matrix, report, sample_dsbm)

from conftest import random_digraph
from oracles import ari_pair_counting, nmi_entropy


class TestAri:
    def test_identical_partitions(self):
        assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0

    def test_constant_vs_multicluster(self):
        assert adjusted_rand_index([0, 0, 1, 2], [0, 0, 0, 0]) == 0.0

    def test_matches_pair_counting_oracle(self):
        a = [0, 0, 1, 1]
        b = [0, 0, 1, 2]
        assert adjusted_rand_index(a, b) == pytest.approx(ari_pair_counting(a, b))

    def test_random_instances_match_oracle(self, rng):
        for _ in range(20):
            a = rng.integers(0, 4, size=12)
            b = rng.integers(0, 3, size=12)
            assert adjusted_rand_index(a, b) == pytest.approx(ari_pair_counting(a, b),
                                                              abs=1e-12)

    def test_symmetry_and_label_invariance(self, rng):
        a = rng.integers(0, 3, size=30)
        b = rng.integers(0, 4, size=30)
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(b, a))
        remap = rng.permutation(4)
        assert adjusted_rand_index(a, remap[b]) == pytest.approx(adjusted_rand_index(a, b))

    def test_independent_partitions_center_near_zero(self):
        rng = np.random.default_rng(123)
        values = [adjusted_rand_index(rng.integers(0, 3, 60), rng.integers(0, 3, 60))
                  for _ in range(1000)]
        assert abs(np.mean(values)) < 0.02

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            adjusted_rand_index([0, 1], [0, 1, 2])


class TestNmi:
    def test_identical_partitions(self):
        assert normalized_mutual_information([0, 1, 2, 0], [2, 0, 1, 2]) == 1.0

    def test_constant_vs_constant_is_one(self):
        assert normalized_mutual_information([0, 0, 0], [1, 1, 1]) == 1.0

    def test_matches_entropy_oracle(self, rng):
        for _ in range(15):
            a = rng.integers(0, 3, size=14)
            b = rng.integers(0, 4, size=14)
            assert normalized_mutual_information(a, b) == pytest.approx(
                nmi_entropy(a, b), abs=1e-10)


class TestFlowMatrix:
    def test_one_way_flow(self):
        g = ingest_edge_list([(0, 2, 1.0), (1, 2, 1.0)])
        f = predicted_flow_matrix(g, np.array([0, 0, 1]))
        assert f[0, 1] == 1.0 and f[1, 0] == 0.0

    def test_no_flow_pair_is_zero(self):
        g = ingest_edge_list([(0, 1, 1.0)], n=4)
        f = predicted_flow_matrix(g, np.array([0, 0, 1, 1]))
        assert f[0, 1] == 0.0 and f[1, 0] == 0.0

    def test_complement_structure(self, rng):
        g = random_digraph(rng, 12)
        labels = rng.integers(0, 3, size=12)
        f = predicted_flow_matrix(g, labels)
        total = f + f.T
        off = ~np.eye(3, dtype=bool)
        assert np.all(np.isclose(total[off], 1.0) | np.isclose(total[off], 0.0))

    def test_concentrates_around_meta_flow(self):
        meta = build_meta_graph("cycle", 3, 0.1)
        lg = sample_dsbm(DsbmSpec(meta, 1000, 0.1, seed=17))
        f = predicted_flow_matrix(lg.graph, lg.labels)
        for k in range(3):
            l = (k + 1) % 3
            assert abs(f[k, l] - 0.9) < 0.05
            assert abs(f[l, k] - 0.1) < 0.05


class TestReport:
    def test_perfect_two_cluster_flow(self):
        g = ingest_edge_list([(0, 2, 1.0), (1, 3, 1.0)])
        truth = np.array([0, 0, 1, 1])
        rep = report(g, truth, truth=truth, beta=1)
        for norm in ("vol_sum", "vol_min", "vol_max"):
            assert rep.objectives[f"sort_{norm}"] == pytest.approx(1.0)
        assert rep.ari == 1.0 and rep.nmi == 1.0
        assert rep.size_ratio == 1.0 and rep.size_std == 0.0

    def test_edgeless_graph_all_zero_objectives(self, rng):
        g = ingest_edge_list([], n=10)
        labels = rng.integers(0, 3, size=10)
        rep = report(g, labels, beta=1)
        assert all(v == 0.0 for v in rep.objectives.values())

    def test_matches_imbalance_module(self, rng):
        g = random_digraph(rng, 15)
        labels = rng.integers(0, 4, size=15)
        rep = report(g, labels, beta=3)
        p = one_hot(labels, 4)
        expected, _ = global_objective(g, p, "vol_sum", "sort", beta=3)
        assert rep.objectives["sort_vol_sum"] == expected

    def test_accepts_soft_assignment(self, rng):
        g = random_digraph(rng, 10)
        p = rng.random((10, 3)) + 0.01
        p /= p.sum(axis=1, keepdims=True)
        rep = report(g, p, beta=2)
        assert set(rep.objectives) == {f"{v}_{n}" for v in ("sort", "std", "naive")
                                       for n in ("vol_sum", "vol_min", "vol_max", "plain")}

    def test_size_statistics(self):
        g = ingest_edge_list([(0, 1, 1.0)], n=6)
        labels = np.array([0, 0, 0, 0, 1, 2])
        rep = report(g, labels, beta=1)
        assert rep.size_ratio == 4.0
        assert rep.size_std == pytest.approx(np.std([4, 1, 1]))

    def test_empty_cluster_gives_null_ratio_in_json(self):
        g = ingest_edge_list([(0, 1, 1.0)], n=4)
        p = np.zeros((4, 3))
        p[:, 0] = 1.0
        rep = report(g, p, beta=1)
        assert rep.size_ratio == float("inf")
        assert rep.to_dict()["size_ratio"] is None
