import math

import numpy as np
import pytest

from randprune.datasets import Dataset, generate_synthetic, standardize_pair, stratified_split
from randprune.nn import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    KDConfig,
    Layer,
    MaskedNetwork,
    Network,
    backward,
    batch_loss,
    evaluate,
    forward,
    init_network,
    init_optimizer,
    optimizer_step,
    restore,
    snapshot,
    train_one_epoch,
)


def make_net(sizes, seed=0, activation="relu"):
    return MaskedNetwork.dense(init_network(sizes, activation=activation, seed=seed))


def small_dataset(seed=0, n=40):
    data = generate_synthetic("blobs", n, noise=0.6, seed=seed)
    train, val = stratified_split(data, 0.25, seed)
    train, val, _, _ = standardize_pair(train, val)
    return train, val


def scalar_forward_loss(net, X, y):
    """Oracle: recompute the forward loss with plain scalar arithmetic."""
    total = 0.0
    for row, label in zip(X, y):
        a = list(row)
        for layer in net.network.layers:
            out = []
            for o in range(layer.weights.shape[0]):
                z = layer.bias[o]
                for i in range(layer.weights.shape[1]):
                    z += layer.weights[o, i] * a[i]
                out.append(max(z, 0.0) if layer.activation == "relu" else z)
            a = out
        shift = max(a)
        log_norm = shift + math.log(sum(math.exp(v - shift) for v in a))
        total += log_norm - a[label]
    return total / len(y)


def finite_difference_grads(net, X, y, h=1e-4, kd=None, teacher=None):
    """Oracle: central finite differences of the batch loss."""
    grads_w, grads_b = [], []
    for layer in net.network.layers:
        gw = np.zeros_like(layer.weights)
        for idx in np.ndindex(layer.weights.shape):
            orig = layer.weights[idx]
            layer.weights[idx] = orig + h
            net.touch()
            up = batch_loss(net, X, y, kd, teacher)
            layer.weights[idx] = orig - h
            net.touch()
            down = batch_loss(net, X, y, kd, teacher)
            layer.weights[idx] = orig
            net.touch()
            gw[idx] = (up - down) / (2 * h)
        grads_w.append(gw)
        gb = np.zeros_like(layer.bias)
        for idx in np.ndindex(layer.bias.shape):
            orig = layer.bias[idx]
            layer.bias[idx] = orig + h
            net.touch()
            up = batch_loss(net, X, y, kd, teacher)
            layer.bias[idx] = orig - h
            net.touch()
            down = batch_loss(net, X, y, kd, teacher)
            layer.bias[idx] = orig
            net.touch()
            gb[idx] = (up - down) / (2 * h)
        grads_b.append(gb)
    return grads_w, grads_b


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-8):
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), atol)
        assert np.all(np.abs(a - n) <= rtol * denom + atol), (
            f"max deviation {np.max(np.abs(a - n)):.3e}"
        )


class TestForward:
    def test_identity_network_passes_input_through(self):
        net = MaskedNetwork.dense(
            Network([Layer(np.eye(3), np.zeros(3), "identity")])
        )
        X = np.array([[1.0, -2.0, 0.5], [0.0, 4.0, 1.5]])
        cache = forward(net, X)
        np.testing.assert_array_equal(cache.logits, X)

    def test_uniform_logits_give_log2(self):
        net = MaskedNetwork.dense(
            Network([Layer(np.zeros((2, 3)), np.zeros(2), "identity")])
        )
        X = np.random.default_rng(0).normal(size=(5, 3))
        cache = forward(net, X, np.array([0, 1, 0, 1, 1]))
        assert cache.loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_fixed_net_matches_scalar_oracle(self):
        net = make_net([2, 4, 2], seed=3)
        X = np.array([[0.3, -1.2], [2.0, 0.7], [-0.5, 0.1]])
        y = np.array([0, 1, 1])
        cache = forward(net, X, y)
        assert cache.loss == pytest.approx(scalar_forward_loss(net, X, y), rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        net = make_net([3, 2])
        with pytest.raises(ValueError, match="features"):
            forward(net, np.zeros((4, 2)))


class TestBackward:
    def test_fully_masked_layer_has_zero_gradient(self):
        net = make_net([2, 4, 2], seed=1)
        masks = [np.zeros_like(net.masks[0]), net.masks[1]]
        net.set_masks(masks)
        X = np.random.default_rng(2).normal(size=(6, 2))
        y = np.array([0, 1, 1, 0, 1, 0])
        grads = backward(net, forward(net, X, y))
        assert np.all(grads.weights[0] == 0.0)
        assert np.any(grads.weights[1] != 0.0)

    def test_gradient_vanishes_at_symmetric_minimum(self):
        # Zero weights, zero input, balanced labels: the loss surface is
        # locally quadratic with its minimum exactly here.
        net = MaskedNetwork.dense(
            Network([Layer(np.zeros((2, 1)), np.zeros(2), "identity")])
        )
        X = np.zeros((2, 1))
        y = np.array([0, 1])
        grads = backward(net, forward(net, X, y))
        assert np.max(np.abs(grads.weights[0])) < 1e-8
        assert np.max(np.abs(grads.biases[0])) < 1e-8

    def test_matches_finite_differences(self):
        net = make_net([2, 8, 2], seed=4)
        rng = np.random.default_rng(5)
        X = rng.normal(size=(4, 2))
        y = rng.integers(0, 2, size=4)
        grads = backward(net, forward(net, X, y))
        fd_w, fd_b = finite_difference_grads(net, X, y)
        assert_grads_close(grads.weights, fd_w)
        assert_grads_close(grads.biases, fd_b)

    def test_masked_finite_differences(self):
        net = make_net([3, 6, 2], seed=6)
        rng = np.random.default_rng(7)
        masks = [(rng.random(m.shape) > 0.4).astype(np.uint8) for m in net.masks]
        net.set_masks(masks)
        X = rng.normal(size=(5, 3))
        y = rng.integers(0, 2, size=5)
        grads = backward(net, forward(net, X, y))
        fd_w, _ = finite_difference_grads(net, X, y)
        # at masked positions the analytic gradient is forced to zero
        for g, m in zip(grads.weights, net.masks):
            assert np.all(g[m == 0] == 0.0)
        for g, fd, m in zip(grads.weights, fd_w, net.masks):
            keep = m == 1
            denom = np.maximum(np.abs(fd[keep]), 1e-8)
            assert np.all(np.abs(g[keep] - fd[keep]) <= 1e-4 * denom + 1e-8)

    def test_distillation_gradient_matches_finite_differences(self):
        kd = KDConfig(enabled=True, hidden_weight=0.7, output_weight=1.3)
        net = make_net([2, 5, 3, 2], seed=8)
        teacher = make_net([2, 5, 3, 2], seed=9)
        rng = np.random.default_rng(10)
        X = rng.normal(size=(4, 2))
        y = rng.integers(0, 2, size=4)
        cache = forward(net, X, y)
        tcache = forward(teacher, X)
        grads = backward(net, cache, kd, tcache)
        fd_w, fd_b = finite_difference_grads(net, X, y, kd=kd, teacher=teacher)
        assert_grads_close(grads.weights, fd_w)
        assert_grads_close(grads.biases, fd_b)

    def test_stale_cache_rejected(self):
        net = make_net([2, 3, 2], seed=11)
        X = np.zeros((2, 2))
        y = np.array([0, 1])
        cache = forward(net, X, y)
        opt = init_optimizer(net, "sgd", 0.1)
        optimizer_step(net, backward(net, cache), opt)
        with pytest.raises(ValueError, match="stale"):
            backward(net, cache)


class TestOptimizerStep:
    def test_sgd_update_rule(self):
        net = MaskedNetwork.dense(
            Network([Layer(np.array([[1.0]]), np.zeros(1), "identity")])
        )
        opt = init_optimizer(net, "sgd", 0.1)
        grads = ([np.array([[0.5]])], [np.zeros(1)])
        from randprune.nn import Gradients

        optimizer_step(net, Gradients(*grads), opt)
        assert net.network.layers[0].weights[0, 0] == pytest.approx(0.95)

    def test_masked_weight_stays_zero(self):
        net = make_net([2, 4, 2], seed=12)
        rng = np.random.default_rng(13)
        masks = [(rng.random(m.shape) > 0.5).astype(np.uint8) for m in net.masks]
        net.set_masks(masks)
        opt = init_optimizer(net, "adam", 0.05)
        train, _ = small_dataset(seed=13)
        for epoch in range(3):
            train_one_epoch(net, train, opt, np.random.default_rng(epoch))
        for layer, mask in zip(net.network.layers, net.masks):
            assert np.all(layer.weights[mask == 0] == 0.0)

    def test_adam_first_step_matches_recurrence(self):
        net = MaskedNetwork.dense(
            Network([Layer(np.array([[1.0]]), np.zeros(1), "identity")])
        )
        opt = init_optimizer(net, "adam", 0.01)
        from randprune.nn import Gradients

        g = 0.1
        optimizer_step(
            net, Gradients([np.array([[g]])], [np.zeros(1)]), opt
        )
        # scalar recurrence from zero moments
        m = (1 - ADAM_BETA1) * g
        v = (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1)
        v_hat = v / (1 - ADAM_BETA2)
        expected = 1.0 - 0.01 * m_hat / (math.sqrt(v_hat) + ADAM_EPS)
        assert net.network.layers[0].weights[0, 0] == pytest.approx(
            expected, rel=1e-15
        )
        # the first step moves by almost exactly -lr
        assert net.network.layers[0].weights[0, 0] == pytest.approx(0.99, abs=1e-6)

    def test_nonfinite_gradient_aborts_with_layer_index(self):
        net = make_net([2, 3, 2], seed=14)
        X = np.random.default_rng(15).normal(size=(3, 2))
        y = np.array([0, 1, 0])
        grads = backward(net, forward(net, X, y))
        grads.weights[1][0, 0] = np.nan
        opt = init_optimizer(net, "sgd", 0.1)
        before = [l.weights.copy() for l in net.network.layers]
        with pytest.raises(ValueError, match="layer 1"):
            optimizer_step(net, grads, opt)
        for b, l in zip(before, net.network.layers):
            np.testing.assert_array_equal(b, l.weights)


class TestTrainOneEpoch:
    def test_distillation_loss_zero_for_identical_nets(self):
        net = make_net([2, 6, 2], seed=16)
        teacher = net.clone()
        kd = KDConfig(enabled=True)
        X = np.random.default_rng(17).normal(size=(8, 2))
        y = np.random.default_rng(18).integers(0, 2, size=8)
        from randprune.nn import kd_loss_terms

        hidden, output = kd_loss_terms(
            kd, forward(net, X, y), forward(teacher, X)
        )
        assert hidden == 0.0
        assert output == 0.0

    def test_distillation_loss_positive_for_different_nets(self):
        kd = KDConfig(enabled=True)
        net = make_net([2, 6, 2], seed=19)
        teacher = make_net([2, 6, 2], seed=20)
        X = np.random.default_rng(21).normal(size=(8, 2))
        from randprune.nn import kd_loss_terms

        hidden, output = kd_loss_terms(
            kd, forward(net, X, np.zeros(8, int)), forward(teacher, X)
        )
        assert hidden > 0.0
        assert output > 0.0

    def test_loss_decreases_on_separable_data(self):
        train, _ = small_dataset(seed=22, n=80)
        net = make_net([2, 8, 2], seed=23)
        opt = init_optimizer(net, "adam", 0.01)
        first = train_one_epoch(net, train, opt, np.random.default_rng(0))
        last = first
        for epoch in range(1, 5):
            last = train_one_epoch(net, train, opt, np.random.default_rng(epoch))
        assert last < first

    def test_same_seed_same_weights(self):
        train, _ = small_dataset(seed=24, n=60)
        results = []
        for _ in range(2):
            net = make_net([2, 8, 2], seed=25)
            opt = init_optimizer(net, "adam", 0.01)
            train_one_epoch(net, train, opt, np.random.default_rng(42))
            results.append([l.weights.copy() for l in net.network.layers])
        for a, b in zip(*results):
            np.testing.assert_array_equal(a, b)

    def test_empty_dataset_rejected(self):
        net = make_net([2, 4, 2])
        opt = init_optimizer(net, "sgd", 0.1)
        empty = Dataset(np.zeros((1, 2)), np.zeros(1, int), 1).subset([])
        with pytest.raises(ValueError, match="empty"):
            train_one_epoch(net, empty, opt, np.random.default_rng(0))

    def test_teacher_shape_mismatch_rejected(self):
        train, _ = small_dataset(seed=26)
        net = make_net([2, 8, 2])
        teacher = make_net([2, 4, 2])
        opt = init_optimizer(net, "adam", 0.01)
        with pytest.raises(ValueError, match="teacher layer"):
            train_one_epoch(
                net, train, opt, np.random.default_rng(0),
                kd=KDConfig(enabled=True), teacher=teacher,
            )


class TestEvaluate:
    def test_constant_predictor_on_constant_labels(self):
        net = MaskedNetwork.dense(
            Network([Layer(np.zeros((2, 2)), np.array([1.0, 0.0]), "identity")])
        )
        data = Dataset(np.random.default_rng(27).normal(size=(10, 2)),
                       np.zeros(10, int), 2)
        result = evaluate(net, data)
        assert result.accuracy == 1.0

    def test_single_correct_sample(self):
        net = MaskedNetwork.dense(
            Network([Layer(np.eye(2), np.zeros(2), "identity")])
        )
        data = Dataset(np.array([[0.0, 5.0]]), np.array([1]), 2)
        assert evaluate(net, data).accuracy == 1.0

    def test_random_nets_hover_near_chance(self):
        # Monte-Carlo: untrained nets on balanced two-class data should
        # sit in [0.4, 0.6] for at least 95 of 100 seeds.
        data = generate_synthetic("moons", 1000, noise=0.3, seed=28)
        inside = 0
        for seed in range(100):
            net = make_net([2, 8, 2], seed=seed)
            acc = evaluate(net, data).accuracy
            if 0.4 <= acc <= 0.6:
                inside += 1
        assert inside >= 95

    def test_empty_rejected(self):
        net = make_net([2, 4, 2])
        empty = Dataset(np.zeros((1, 2)), np.zeros(1, int), 1).subset([])
        with pytest.raises(ValueError, match="empty"):
            evaluate(net, empty)


class TestSnapshotRestore:
    def test_roundtrip_is_bitwise(self):
        net = make_net([2, 6, 2], seed=29)
        opt = init_optimizer(net, "adam", 0.01)
        snap = snapshot(net, opt)
        expected = [l.weights.copy() for l in net.network.layers]
        for layer in net.network.layers:
            layer.weights += 0.123
            layer.bias -= 1.0
        net.touch()
        restore(net, opt, snap)
        for want, layer in zip(expected, net.network.layers):
            np.testing.assert_array_equal(want, layer.weights)

    def test_optimizer_state_restored_exactly(self):
        train, _ = small_dataset(seed=30)
        net = make_net([2, 6, 2], seed=31)
        opt = init_optimizer(net, "adam", 0.01)
        train_one_epoch(net, train, opt, np.random.default_rng(0))
        snap = snapshot(net, opt)
        step_before = opt.step
        moments_before = [m.copy() for m in opt.m_w]
        lr_before = opt.learning_rate
        opt.learning_rate *= 5
        for _ in range(5):
            train_one_epoch(net, train, opt, np.random.default_rng(1))
        restore(net, opt, snap)
        assert opt.step == step_before
        assert opt.learning_rate == lr_before
        for want, got in zip(moments_before, opt.m_w):
            np.testing.assert_array_equal(want, got)

    def test_restore_into_wrong_shape_rejected(self):
        net = make_net([2, 6, 2])
        opt = init_optimizer(net, "adam", 0.01)
        snap = snapshot(net, opt)
        other = make_net([2, 4, 2])
        other_opt = init_optimizer(other, "adam", 0.01)
        with pytest.raises(ValueError, match="shape"):
            restore(other, other_opt, snap)

    def test_masks_restored(self):
        net = make_net([2, 6, 2], seed=32)
        opt = init_optimizer(net, "sgd", 0.1)
        snap = snapshot(net, opt)
        rng = np.random.default_rng(33)
        net.set_masks([(rng.random(m.shape) > 0.5).astype(np.uint8)
                       for m in net.masks])
        restore(net, opt, snap)
        for m in net.masks:
            assert np.all(m == 1)


class TestProperties:
    def test_masked_positions_frozen_across_epochs(self):
        train, _ = small_dataset(seed=34, n=100)
        net = make_net([2, 10, 2], seed=35)
        rng = np.random.default_rng(36)
        net.set_masks([(rng.random(m.shape) > 0.6).astype(np.uint8)
                       for m in net.masks])
        opt = init_optimizer(net, "adam", 0.02)
        for epoch in range(4):
            train_one_epoch(net, train, opt, np.random.default_rng(epoch))
            for layer, mask in zip(net.network.layers, net.masks):
                assert np.all(layer.weights[mask == 0] == 0.0)

    def test_gradients_match_finite_differences_on_random_nets(self):
        rng = np.random.default_rng(37)
        for trial in range(5):
            sizes = [2, int(rng.integers(3, 7)), int(rng.integers(2, 5)), 2]
            net = make_net(sizes, seed=trial)
            X = rng.normal(size=(3, 2))
            y = rng.integers(0, 2, size=3)
            grads = backward(net, forward(net, X, y))
            fd_w, fd_b = finite_difference_grads(net, X, y)
            assert_grads_close(grads.weights, fd_w)
            assert_grads_close(grads.biases, fd_b)
