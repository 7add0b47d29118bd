import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from flowclust import (SparseDigraph, ingest_edge_list, largest_weakly_connected_component,
                       ratio_transform, row_normalize, spmv)
from flowclust.graphs import (read_edge_list, read_labels, read_node_mapping,
                              write_edge_list, write_labels, write_node_mapping)

from conftest import random_digraph
from oracles import dense_accumulate, dense_row_normalize, union_find_components


class TestIngest:
    def test_single_edge(self):
        g = ingest_edge_list([(0, 1, 1.0)])
        assert g.toarray().tolist() == [[0.0, 1.0], [0.0, 0.0]]

    def test_duplicates_are_summed(self):
        g = ingest_edge_list([(0, 1, 1.0), (0, 1, 2.0)])
        assert g.toarray()[0][1] == 3.0

    def test_matches_dense_accumulation_oracle(self, rng):
        rows = [(int(rng.integers(5)), int(rng.integers(5)), float(rng.uniform(0, 2)))
                for _ in range(40)]
        g = ingest_edge_list(rows, n=5)
        np.testing.assert_allclose(g.toarray(), dense_accumulate(rows, 5))

    def test_negative_weight_reports_row(self):
        with pytest.raises(ValueError, match="row 1"):
            ingest_edge_list([(0, 1, 1.0), (1, 2, -0.5)])

    def test_non_finite_weight_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            ingest_edge_list([(0, 1, np.nan)])

    def test_default_weight_is_one(self):
        g = ingest_edge_list([(0, 1)])
        assert g.toarray()[0][1] == 1.0

    def test_n_inferred_as_max_id_plus_one(self):
        assert ingest_edge_list([(2, 5, 1.0)]).n == 6

    def test_transpose_involution(self, rng):
        g = random_digraph(rng, 7)
        np.testing.assert_array_equal(g.transpose().transpose().toarray(), g.toarray())

    def test_transpose_view_matches(self, rng):
        g = random_digraph(rng, 6)
        np.testing.assert_array_equal(g.csr_t.toarray(), g.toarray().T)


class TestRowNormalize:
    def test_two_node_example(self):
        g = ingest_edge_list([(0, 1, 1.0)])
        m = row_normalize(g, 0.5, "source")
        np.testing.assert_allclose(m.toarray(), [[1 / 3, 2 / 3], [0.0, 1.0]])

    def test_edgeless_graph_gives_identity(self):
        g = ingest_edge_list([], n=3)
        m = row_normalize(g, 0.5, "source")
        np.testing.assert_allclose(m.toarray(), np.eye(3))

    def test_matches_dense_oracle(self, rng):
        g = random_digraph(rng, 6)
        m = row_normalize(g, 0.5, "source")
        np.testing.assert_allclose(m.toarray(), dense_row_normalize(g.toarray(), 0.5),
                                   atol=1e-12)

    def test_target_direction_uses_transpose(self, rng):
        g = random_digraph(rng, 6)
        m = row_normalize(g, 0.5, "target")
        np.testing.assert_allclose(m.toarray(), dense_row_normalize(g.toarray().T, 0.5),
                                   atol=1e-12)

    def test_tau_zero_with_zero_row_names_node(self):
        g = ingest_edge_list([(0, 1, 1.0)], n=3)
        with pytest.raises(ValueError, match="node 1"):
            row_normalize(g, 0.0, "source")

    def test_row_sums_are_one(self, rng):
        g = random_digraph(rng, 15, density=0.2)
        for direction in ("source", "target"):
            m = row_normalize(g, 0.5, direction)
            sums = np.asarray(m.matrix.sum(axis=1)).ravel()
            assert np.abs(sums - 1.0).max() < 1e-12

    def test_pattern_is_adjacency_plus_diagonal(self, rng):
        g = random_digraph(rng, 8, density=0.25)
        m = row_normalize(g, 0.5, "source")
        expected = (g.toarray() != 0) | np.eye(8, dtype=bool)
        assert ((m.toarray() != 0) == expected).all()


class TestComponents:
    def test_connected_cycle_is_identity(self):
        g = ingest_edge_list([(0, 1), (1, 2), (2, 3), (3, 0)])
        sub, keep = largest_weakly_connected_component(g)
        assert sub.n == 4
        np.testing.assert_array_equal(keep, np.arange(4))

    def test_keeps_larger_component(self):
        g = ingest_edge_list([(0, 1), (1, 2), (3, 4)])
        sub, keep = largest_weakly_connected_component(g)
        assert keep.tolist() == [0, 1, 2]
        assert sub.n_edges == 2

    def test_tie_breaks_to_smallest_node_id(self):
        g = ingest_edge_list([(2, 3), (0, 1)])
        _, keep = largest_weakly_connected_component(g)
        assert keep.tolist() == [0, 1]

    def test_empty_graph_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            largest_weakly_connected_component(ingest_edge_list([]))

    def test_matches_union_find_oracle(self, rng):
        for _ in range(10):
            g = random_digraph(rng, 12, density=0.08)
            _, keep = largest_weakly_connected_component(g)
            roots = union_find_components(g.toarray())
            sizes = {r: (roots == r).sum() for r in set(roots)}
            best = max(sizes.values())
            winners = sorted(r for r, s in sizes.items() if s == best)
            expected = np.flatnonzero(roots == winners[0])
            np.testing.assert_array_equal(keep, expected)


class TestSpmv:
    def test_identity_propagation(self):
        g = ingest_edge_list([], n=4)
        m = row_normalize(g, 0.5, "source")
        x = np.arange(8.0).reshape(4, 2)
        np.testing.assert_array_equal(spmv(m, x), x)

    def test_small_arithmetic(self):
        g = ingest_edge_list([(0, 1, 1.0)])
        m = row_normalize(g, 0.5, "source")
        np.testing.assert_allclose(spmv(m, np.array([[3.0], [0.0]])), [[1.0], [0.0]])

    def test_matches_dense_matmul(self, rng):
        g = random_digraph(rng, 9)
        m = row_normalize(g, 0.5, "source")
        x = rng.standard_normal((9, 4))
        np.testing.assert_allclose(spmv(m, x), m.toarray() @ x, atol=1e-12)

    def test_preserves_ones_vector(self, rng):
        g = random_digraph(rng, 10)
        m = row_normalize(g, 0.5, "source")
        np.testing.assert_allclose(spmv(m, np.ones(10)), np.ones(10), atol=1e-12)

    def test_dimension_mismatch(self, rng):
        g = random_digraph(rng, 5)
        m = row_normalize(g, 0.5, "source")
        with pytest.raises(ValueError, match="rows"):
            spmv(m, np.ones((4, 2)))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7),
                          st.floats(0, 5, allow_nan=False)), max_size=30))
def test_ingest_row_normalize_properties(rows):
    g = ingest_edge_list(rows, n=8)
    dense = dense_accumulate(rows, 8)
    np.testing.assert_allclose(g.toarray(), dense, atol=1e-12)
    m = row_normalize(g, 0.5, "source")
    sums = np.asarray(m.matrix.sum(axis=1)).ravel()
    assert np.abs(sums - 1.0).max() < 1e-12


class TestRatioTransform:
    def test_pairwise_shares(self):
        g = ingest_edge_list([(0, 1, 3.0), (1, 0, 1.0), (0, 2, 5.0)])
        out = ratio_transform(g).toarray()
        assert out[0][1] == 0.75
        assert out[1][0] == 0.25
        assert out[0][2] == 1.0

    def test_self_loops_become_half(self):
        g = ingest_edge_list([(0, 0, 4.0), (0, 1, 1.0)])
        assert ratio_transform(g).toarray()[0][0] == 0.5

    def test_pattern_preserved(self, rng):
        g = random_digraph(rng, 10, density=0.3)
        out = ratio_transform(g)
        np.testing.assert_array_equal(out.toarray() != 0, g.toarray() != 0)


class TestFiles:
    def test_round_trip(self, tmp_path, rng):
        g = random_digraph(rng, 8, density=0.3)
        path = tmp_path / "edges.tsv"
        write_edge_list(g, path)
        loaded, node_ids = read_edge_list(path)
        np.testing.assert_allclose(loaded.toarray(), g.toarray(), atol=0)
        assert node_ids.tolist() == [str(i) for i in range(8)]

    def test_comments_and_default_weight(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("# a comment\n0\t1\n1\t2\t2.5  # trailing\n\n")
        g, _ = read_edge_list(path)
        assert g.toarray()[0][1] == 1.0
        assert g.toarray()[1][2] == 2.5

    def test_negative_weight_names_line(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("0\t1\t1.0\n1\t2\t-3.0\n")
        with pytest.raises(ValueError, match=":2"):
            read_edge_list(path)

    def test_string_ids_are_remapped(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("alice\tbob\t1.0\nbob\tcarol\t2.0\n")
        g, node_ids = read_edge_list(path)
        assert g.n == 3
        assert node_ids.tolist() == ["alice", "bob", "carol"]

    def test_labels_round_trip(self, tmp_path):
        path = tmp_path / "labels.txt"
        write_labels([0, 2, 1], path)
        np.testing.assert_array_equal(read_labels(path), [0, 2, 1])

    def test_mapping_round_trip(self, tmp_path):
        path = tmp_path / "mapping.csv"
        write_node_mapping(np.array(["a", "b"]), path)
        assert read_node_mapping(path).tolist() == ["a", "b"]


def test_induced_subgraph_matches_dense(rng):
    g = random_digraph(rng, 10)
    nodes = np.array([1, 3, 4, 8])
    sub = g.induced_subgraph(nodes)
    np.testing.assert_array_equal(sub.toarray(), g.toarray()[np.ix_(nodes, nodes)])


def test_graph_rejects_negative_matrix():
    with pytest.raises(ValueError, match="nonnegative"):
        SparseDigraph(sp.csr_matrix(np.array([[0.0, -1.0], [0.0, 0.0]])))
