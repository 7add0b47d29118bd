import numpy as np
import pytest

from flowclust import (Adam, DsbmSpec, LossSpec, SeedBatch, backward, build_meta_graph,
                       forward, ingest_edge_list, init_params, load_checkpoint, make_splits,
                       sample_dsbm, sample_triplets, save_checkpoint, supervised_losses,
                       train, TrainConfig)

from conftest import random_digraph
from oracles import finite_difference_grads, max_relative_error


class TestSplits:
    def test_single_cluster_fractions(self):
        s = make_splits(100, rng=np.random.default_rng(0))
        assert s.test.size == 10 and s.validation.size == 10 and s.train.size == 80

    def test_ceiling_rule_on_small_cluster(self):
        labels = np.zeros(11, dtype=int)
        s = make_splits(11, labels=labels, rng=np.random.default_rng(0))
        assert s.test.size == 2 and s.validation.size == 2 and s.train.size == 7

    def test_stratified_counts(self):
        labels = np.repeat(np.arange(5), 200)
        s = make_splits(1000, labels=labels, rng=np.random.default_rng(1))
        for c in range(5):
            members = np.flatnonzero(labels == c)
            assert np.isin(s.test, members).sum() == 20
            assert np.isin(s.validation, members).sum() == 20
            assert np.isin(s.train, members).sum() == 160

    def test_partition_properties(self):
        labels = np.repeat(np.arange(3), 40)
        s = make_splits(120, labels=labels, rng=np.random.default_rng(2))
        combined = np.sort(np.concatenate([s.train, s.validation, s.test]))
        np.testing.assert_array_equal(combined, np.arange(120))

    def test_seed_sampling_ratio(self):
        labels = np.repeat(np.arange(3), 100)
        s = make_splits(300, labels=labels, seed_ratio=0.5, rng=np.random.default_rng(3))
        assert abs(s.seed_ratio - 0.5) < 0.02
        assert np.isin(s.seed, s.train).all()

    def test_cluster_too_small(self):
        labels = np.array([0, 0, 1, 1, 1])
        with pytest.raises(ValueError, match="too small"):
            make_splits(5, labels=labels, rng=np.random.default_rng(0))

    def test_seed_ratio_needs_labels(self):
        with pytest.raises(ValueError, match="labels"):
            make_splits(50, seed_ratio=0.5, rng=np.random.default_rng(0))


class TestSupervisedLosses:
    def test_perfect_assignment_zero_ce(self):
        p = np.eye(3)
        z = np.ones((3, 4))
        seed_idx = np.array([0, 1, 2])
        seed_lab = np.array([0, 1, 2])
        triplets = (np.array([0]), np.array([1]), np.array([2]))
        l_ce, _ = supervised_losses(p, z, seed_idx, seed_lab, triplets=triplets)
        assert l_ce == pytest.approx(0.0, abs=1e-12)

    def test_identical_embeddings_zero_triplet(self):
        p = np.full((4, 2), 0.5)
        z = np.tile(np.array([1.0, 2.0]), (4, 1))
        triplets = (np.array([0, 1]), np.array([1, 0]), np.array([2, 3]))
        _, l_trip = supervised_losses(p, z, np.arange(4), np.array([0, 0, 1, 1]),
                                      triplets=triplets)
        assert l_trip == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_cases(self):
        z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        p = np.full((3, 2), 0.5)
        # positive identical to anchor, negative orthogonal: [0 - 1]_+ = 0
        _, l0 = supervised_losses(p, z, np.arange(3), np.array([0, 0, 1]),
                                  triplets=(np.array([0]), np.array([1]), np.array([2])))
        assert l0 == pytest.approx(0.0)
        # negative identical to anchor, positive orthogonal: [1 - 0]_+ = 1
        z2 = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        _, l1 = supervised_losses(p, z2, np.arange(3), np.array([0, 0, 1]),
                                  triplets=(np.array([0]), np.array([1]), np.array([2])))
        assert l1 == pytest.approx(1.0)

    def test_singleton_cluster_warns_and_skips(self):
        seed_idx = np.array([0, 1, 2])
        seed_lab = np.array([0, 1, 1])
        with pytest.warns(UserWarning, match="single member"):
            triplets = sample_triplets(seed_idx, seed_lab, cap=10,
                                       rng=np.random.default_rng(0))
        anchors = triplets[0]
        assert not np.isin(0, anchors)

    def test_triplet_count_cap(self):
        seed_idx = np.arange(20)
        seed_lab = np.repeat([0, 1], 10)
        triplets = sample_triplets(seed_idx, seed_lab, cap=50, rng=np.random.default_rng(1))
        assert triplets[0].size == 50
        # positives share the anchor cluster, negatives never do
        assert (seed_lab[triplets[0]] == seed_lab[triplets[1]]).all()
        assert (seed_lab[triplets[0]] != seed_lab[triplets[2]]).all()
        assert (triplets[0] != triplets[1]).all()


class TestBackward:
    def _setup(self, rng, n=24, k=3, d=4, dropout=0.0):
        meta = build_meta_graph("cycle", k, 0.05)
        lg = sample_dsbm(DsbmSpec(meta, n, 0.3, seed=6))
        x = rng.standard_normal((n, 5))
        params = init_params(5, d, k, dropout=dropout, rng=rng)
        return lg, x, params

    def test_uniform_assignment_ce_head_bias_identity(self, rng):
        # edgeless graph silences the imbalance term; with a zero head the
        # assignment is uniform and the CE head-bias gradient reduces to
        # the classic softmax identity: mean(P - onehot)
        g = ingest_edge_list([], n=6)
        x = rng.standard_normal((6, 4))
        params = init_params(4, 4, 3, dropout=0.0, rng=rng)
        params.head_weight[:] = 0.0
        params.head_bias[:] = 0.0
        labels = np.array([0, 1, 2, 0, 1, 2])
        trace = forward(g, x, params)
        seeds = SeedBatch(np.arange(6), labels, (np.empty(0, np.int64),) * 3)
        res = backward(trace, LossSpec("vol_sum", "naive", gamma_seed=1.0), seeds)
        onehot = np.zeros((6, 3))
        onehot[np.arange(6), labels] = 1.0
        expected = (trace.p - onehot).mean(axis=0) * 6 / 6
        np.testing.assert_allclose(res.grads["head_bias"], expected, atol=1e-12)

    def test_full_composite_gradients_match_finite_differences(self, rng):
        lg, x, params = self._setup(rng)
        seed_idx = np.arange(0, 24, 2)
        seed_lab = lg.labels[seed_idx]
        triplets = sample_triplets(seed_idx, seed_lab, cap=100,
                                   rng=np.random.default_rng(5))
        seeds = SeedBatch(seed_idx, seed_lab, triplets)
        spec = LossSpec("vol_sum", "sort", beta=2, gamma_seed=50.0, gamma_triplet=0.1)
        trace = forward(lg.graph, x, params)
        res = backward(trace, spec, seeds)

        def loss():
            return backward(forward(lg.graph, x, params), spec, seeds).loss

        fd = finite_difference_grads(loss, params)
        for name in fd:
            assert max_relative_error(res.grads[name], fd[name]) < 1e-4, name

    def test_loss_decomposition(self, rng):
        lg, x, params = self._setup(rng)
        seed_idx = np.arange(0, 24, 3)
        triplets = sample_triplets(seed_idx, lg.labels[seed_idx], cap=50,
                                   rng=np.random.default_rng(2))
        seeds = SeedBatch(seed_idx, lg.labels[seed_idx], triplets)
        spec = LossSpec("vol_sum", "naive", gamma_seed=7.0, gamma_triplet=0.3)
        res = backward(forward(lg.graph, x, params), spec, seeds)
        assert res.loss == pytest.approx(
            res.imbalance_loss + 7.0 * (res.ce_loss + 0.3 * res.triplet_loss))

    def test_gamma_seed_scales_supervised_contribution(self, rng):
        lg, x, params = self._setup(rng)
        seed_idx = np.arange(0, 24, 3)
        triplets = sample_triplets(seed_idx, lg.labels[seed_idx], cap=50,
                                   rng=np.random.default_rng(2))
        seeds = SeedBatch(seed_idx, lg.labels[seed_idx], triplets)
        trace = forward(lg.graph, x, params)
        base = backward(trace, LossSpec("vol_sum", "naive", gamma_seed=0.0), seeds)
        one = backward(trace, LossSpec("vol_sum", "naive", gamma_seed=10.0), seeds)
        two = backward(trace, LossSpec("vol_sum", "naive", gamma_seed=20.0), seeds)
        for name in base.grads:
            np.testing.assert_allclose(two.grads[name] - base.grads[name],
                                       2.0 * (one.grads[name] - base.grads[name]),
                                       atol=1e-10)


class TestAdam:
    def test_zero_gradients_no_decay_leave_params_unchanged(self, rng):
        params = init_params(4, 5, 3, rng=rng)
        before = {name: arr.copy() for name, arr in params.tensors().items()}
        opt = Adam(params, lr=0.01, weight_decay=0.0)
        zeros = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        for _ in range(3):
            opt.step(params, zeros)
        for name, arr in params.tensors().items():
            np.testing.assert_array_equal(arr, before[name])

    def test_zero_gradients_with_decay_shrink_params(self, rng):
        params = init_params(4, 5, 3, rng=rng)
        params.head_weight[:] = 3.0
        before = params.head_weight.copy()
        opt = Adam(params, lr=0.01, weight_decay=5e-4)
        zeros = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        opt.step(params, zeros)
        after = params.head_weight
        assert (np.abs(after) < np.abs(before)).all()
        assert (np.sign(after) == np.sign(before)).all()


def _small_problem(seed=0, n=90, eta=0.0):
    meta = build_meta_graph("cycle", 3, eta)
    lg = sample_dsbm(DsbmSpec(meta, n, 0.2, seed=seed))
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((n, 6))
    splits = make_splits(n, labels=lg.labels, rng=np.random.default_rng(seed + 2))
    params = init_params(6, 8, 3, rng=np.random.default_rng(seed + 3))
    return lg, x, splits, params


class TestTrainLoop:
    def test_zero_learning_rate_keeps_params(self):
        lg, x, splits, params = _small_problem()
        before = {name: arr.copy() for name, arr in params.tensors().items()}
        cfg = TrainConfig(max_epochs=5, patience=5, lr=0.0, beta=3, seed=0)
        best, log = train(lg.graph, x, params, splits, cfg, labels=lg.labels)
        for name, arr in best.tensors().items():
            np.testing.assert_array_equal(arr, before[name])
        assert len(log) == 5

    def test_patience_one_without_improvement_stops_after_two_epochs(self):
        lg, x, splits, params = _small_problem()
        cfg = TrainConfig(max_epochs=50, patience=1, lr=0.0, beta=3, seed=0)
        _, log = train(lg.graph, x, params, splits, cfg, labels=lg.labels)
        assert len(log) == 2

    def test_early_stop_within_patience_of_best(self):
        lg, x, splits, params = _small_problem()
        cfg = TrainConfig(max_epochs=60, patience=10, beta=3, seed=0)
        _, log = train(lg.graph, x, params, splits, cfg, labels=lg.labels)
        best_epoch = int(np.argmax([r.val_objective for r in log])) + 1
        assert len(log) <= best_epoch + 10

    def test_std_warmup_uses_sort_then_std(self):
        lg, x, splits, params = _small_problem()
        cfg = TrainConfig(max_epochs=8, patience=8, loss_variant="std",
                          std_warmup_epochs=4, warmup_beta=3, seed=0)
        _, log = train(lg.graph, x, params, splits, cfg, labels=lg.labels)
        assert [r.variant_used for r in log[:4]] == ["sort"] * 4
        assert all(r.variant_used in ("std", "naive") for r in log[4:])

    def test_bit_deterministic_given_seed(self):
        results = []
        for _ in range(2):
            lg, x, splits, params = _small_problem(seed=4)
            cfg = TrainConfig(max_epochs=12, patience=12, beta=3, seed=9)
            best, log = train(lg.graph, x, params, splits, cfg, labels=lg.labels)
            results.append((best, [r.train_loss for r in log]))
        for name, arr in results[0][0].tensors().items():
            np.testing.assert_array_equal(arr, results[1][0].tensors()[name])
        assert results[0][1] == results[1][1]

    def test_non_finite_loss_aborts_with_epoch(self):
        lg, x, splits, params = _small_problem()
        x = x.copy()
        x[0, 0] = np.nan
        cfg = TrainConfig(max_epochs=5, patience=5, beta=3, seed=0)
        with pytest.raises(RuntimeError, match="epoch 1"):
            train(lg.graph, x, params, splits, cfg, labels=lg.labels)

    def test_seed_supervision_fits_seed_nodes(self):
        meta = build_meta_graph("cycle", 3, 0.0)
        lg = sample_dsbm(DsbmSpec(meta, 120, 0.2, seed=11))
        from flowclust import make_features
        x = make_features(lg.graph, 3)
        splits = make_splits(120, labels=lg.labels, seed_ratio=1.0,
                             rng=np.random.default_rng(1))
        params = init_params(x.shape[1], 8, 3, rng=np.random.default_rng(2))
        cfg = TrainConfig(max_epochs=150, patience=150, beta=3, seed=3)
        best, _ = train(lg.graph, x, params, splits, cfg, labels=lg.labels)
        trace = forward(lg.graph, x, best)
        pred = trace.p.argmax(axis=1)
        accuracy = (pred[splits.seed] == lg.labels[splits.seed]).mean()
        assert accuracy == 1.0

    def test_sort_variant_requires_beta(self):
        with pytest.raises(ValueError, match="beta"):
            TrainConfig(loss_variant="sort", beta=None)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        params = init_params(5, 6, 3, hops=3, dropout=0.25, rng=rng)
        path = tmp_path / "checkpoint.npz"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.hops == 3 and loaded.dropout == 0.25
        for name, arr in params.tensors().items():
            np.testing.assert_array_equal(arr, loaded.tensors()[name])
