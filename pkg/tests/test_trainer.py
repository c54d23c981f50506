"""Forward/backward correctness, optimizer behavior, and reproducibility."""

import io
import math

import numpy as np
import pytest

from bloomemb.codec import BloomVector, ProbabilityVector, SparseInstance
from bloomemb.data import SyntheticSpec, generate_synthetic
from bloomemb.hashing import identity_hash_matrix
from bloomemb.trainer import (Network, NetworkSpec, OptimizerSpec,
                              backward_and_step, forward, forward_batch,
                              gradients, init_network, load_network,
                              loss_cross_entropy, multi_hot, save_network,
                              train)


def small_net(sizes, seed=0, dtype=np.float64):
    return init_network(NetworkSpec(layer_sizes=sizes, init_seed=seed), dtype=dtype)


class TestForward:
    def test_zero_weight_network_is_uniform(self):
        net = small_net((4, 3))
        for w in net.weights:
            w[:] = 0.0
        out = forward(net, np.array([1.0, 0.0, 1.0, 0.0]))
        assert np.allclose(out.probs, 1 / 3)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(0)
        for seed in range(5):
            net = small_net((6, 4, 3), seed=seed)
            out = forward(net, rng.random(6))
            assert abs(out.probs.sum() - 1.0) < 1e-6

    def test_matches_hand_rolled_oracle_2_2_2(self):
        net = small_net((2, 2, 2))
        net.weights[0][:] = [[0.1, -0.2], [0.3, 0.4]]
        net.biases[0][:] = [0.01, -0.02]
        net.weights[1][:] = [[0.5, -0.5], [0.25, 0.75]]
        net.biases[1][:] = [0.0, 0.1]
        x = [1.0, 2.0]
        # independent arithmetic: z1 -> relu -> z2 -> softmax
        z1 = [0.1 * 1 + 0.3 * 2 + 0.01, -0.2 * 1 + 0.4 * 2 - 0.02]
        a1 = [max(v, 0.0) for v in z1]
        z2 = [a1[0] * 0.5 + a1[1] * 0.25 + 0.0,
              a1[0] * -0.5 + a1[1] * 0.75 + 0.1]
        exps = [math.exp(v) for v in z2]
        expected = [e / sum(exps) for e in exps]
        out = forward(net, np.array(x))
        assert np.allclose(out.probs, expected, rtol=1e-12)

    def test_accepts_bloom_vector(self):
        net = small_net((4, 2))
        u = BloomVector(4, np.array([1, 0, 1, 0], dtype=np.uint8))
        out = forward(net, u)
        assert out.m == 2

    def test_size_mismatch(self):
        net = small_net((4, 2))
        with pytest.raises(ValueError):
            forward(net, np.ones(3))

    def test_nonfinite_reported(self):
        net = small_net((2, 2))
        net.weights[0][:] = np.inf
        with pytest.raises(FloatingPointError):
            forward(net, np.array([1.0, 1.0]))


class TestLoss:
    def test_perfect_prediction_loss_vanishes(self):
        target = BloomVector(3, np.array([0, 1, 0], dtype=np.uint8))
        almost_one = ProbabilityVector(3, np.array([5e-13, 1.0 - 1e-12, 5e-13]))
        assert loss_cross_entropy(almost_one, target) == pytest.approx(0.0, abs=1e-9)

    def test_uniform_prediction_single_bit_target(self):
        m = 7
        probs = ProbabilityVector(m, np.full(m, 1 / m))
        target = BloomVector(m, np.eye(m, dtype=np.uint8)[2])
        assert loss_cross_entropy(probs, target) == pytest.approx(math.log(m))

    def test_matches_arithmetic_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            m = int(rng.integers(2, 9))
            raw = rng.random(m)
            probs = ProbabilityVector(m, raw / raw.sum())
            bits = np.zeros(m, dtype=np.uint8)
            bits[rng.choice(m, size=rng.integers(1, m + 1), replace=False)] = 1
            target = BloomVector(m, bits)
            t = bits / bits.sum()
            oracle = -sum(t[i] * math.log(probs.probs[i]) for i in range(m))
            assert loss_cross_entropy(probs, target) == pytest.approx(oracle)

    def test_all_zero_target_rejected(self):
        probs = ProbabilityVector(3, np.full(3, 1 / 3))
        with pytest.raises(ValueError):
            loss_cross_entropy(probs, BloomVector(3, np.zeros(3, dtype=np.uint8)))


class TestGradients:
    def _random_batch(self, rng, n, n_in, n_out):
        x = (rng.random((n, n_in)) < 0.4).astype(np.float64)
        t = rng.random((n, n_out))
        t /= t.sum(axis=1, keepdims=True)
        return x, t

    def test_finite_difference_check_5_4_3(self):
        rng = np.random.default_rng(7)
        net = small_net((5, 4, 3), seed=1, dtype=np.float64)
        x, t = self._random_batch(rng, 8, 5, 3)
        _, grads = gradients(net, x, t)
        h = 1e-6
        for param, grad in zip(net.parameters(), grads):
            flat = param.reshape(-1)
            gflat = grad.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                lo_plus, _ = gradients(net, x, t)
                flat[idx] = orig - h
                lo_minus, _ = gradients(net, x, t)
                flat[idx] = orig
                numeric = (lo_plus - lo_minus) / (2 * h)
                denom = max(abs(numeric), abs(gflat[idx]), 1e-8)
                assert abs(numeric - gflat[idx]) / denom < 1e-4

    def test_zero_learning_rate_is_noop(self):
        rng = np.random.default_rng(2)
        net = small_net((4, 3), seed=3)
        before = [p.copy() for p in net.parameters()]
        x, t = self._random_batch(rng, 5, 4, 3)
        for kind in ("sgd", "adam"):
            backward_and_step(net, (x, t), OptimizerSpec(kind, learning_rate=0.0))
            for p, b in zip(net.parameters(), before):
                assert np.array_equal(p, b)

    def test_single_sgd_step_decreases_loss(self):
        rng = np.random.default_rng(4)
        net = small_net((6, 3), seed=5)  # linear-softmax toy
        x, t = self._random_batch(rng, 16, 6, 3)
        loss0, _ = gradients(net, x, t)
        backward_and_step(net, (x, t),
                          OptimizerSpec("sgd", learning_rate=0.01, momentum=0.0))
        loss1, _ = gradients(net, x, t)
        assert loss1 < loss0

    def test_gradient_clipping_bounds_update(self):
        rng = np.random.default_rng(6)
        net = small_net((4, 3), seed=7)
        x, t = self._random_batch(rng, 4, 4, 3)
        _, grads = gradients(net, x, t)
        raw_norm = math.sqrt(sum(float((g ** 2).sum()) for g in grads))
        clip = raw_norm / 2
        before = [p.copy() for p in net.parameters()]
        backward_and_step(net, (x, t),
                          OptimizerSpec("sgd", learning_rate=1.0, momentum=0.0,
                                        clip_norm=clip))
        delta = math.sqrt(sum(float(((p - b) ** 2).sum())
                              for p, b in zip(net.parameters(), before)))
        assert delta == pytest.approx(clip, rel=1e-6)

    def test_empty_batch_rejected(self):
        net = small_net((2, 2))
        with pytest.raises(ValueError):
            backward_and_step(net, (np.empty((0, 2)), np.empty((0, 2))),
                              OptimizerSpec("sgd"))


def tiny_dataset(rng, n=60, d=20):
    profiles = []
    for _ in range(n):
        items = rng.choice(d, size=4, replace=False) + 1
        profiles.append((SparseInstance.from_items(d, items[:2]),
                         SparseInstance.from_items(d, items[2:])))
    return profiles


class TestTrain:
    def test_identity_scale_matches_no_embedding(self):
        rng = np.random.default_rng(10)
        dataset = tiny_dataset(rng)
        ident = identity_hash_matrix(20)
        runs = []
        for h in (None, ident):
            net = small_net((20, 8, 20), seed=2, dtype=np.float64)
            report = train(net, dataset, h, h, OptimizerSpec("adam", 0.01),
                           epochs=3, batch_size=16, shuffle_seed=4)
            runs.append(report.epoch_losses)
        assert np.allclose(runs[0], runs[1], rtol=0, atol=1e-9)

    def test_epochs_zero_leaves_network_untouched(self):
        rng = np.random.default_rng(11)
        dataset = tiny_dataset(rng)
        net = small_net((20, 5, 20), seed=6)
        before = [p.copy() for p in net.parameters()]
        report = train(net, dataset, None, None, OptimizerSpec("adam"), epochs=0)
        assert report.epochs == 0
        assert report.epoch_losses == []
        assert math.isfinite(report.final_loss) and report.final_loss >= 0
        for p, b in zip(net.parameters(), before):
            assert np.array_equal(p, b)

    def test_loss_decreases_on_synthetic_task(self):
        ds = generate_synthetic(SyntheticSpec(d=50, n=400, n_clusters=5,
                                              profile_size_min=4,
                                              profile_size_max=8, noise=0.02,
                                              test_size=0.0, seed=3))
        net = small_net((50, 16, 50), seed=3)
        report = train(net, ds.profiles, None, None,
                       OptimizerSpec("adam", learning_rate=0.005),
                       epochs=5, batch_size=32, shuffle_seed=1)
        diffs = np.diff(report.epoch_losses)
        assert (diffs < 0).all()

    def test_bit_identical_given_seeds(self):
        rng = np.random.default_rng(12)
        dataset = tiny_dataset(rng)
        losses = []
        for _ in range(2):
            net = small_net((20, 6, 20), seed=9)
            report = train(net, dataset, None, None,
                           OptimizerSpec("sgd", 0.05), epochs=2,
                           batch_size=8, shuffle_seed=7)
            losses.append(report.epoch_losses)
        assert losses[0] == losses[1]

    def test_wall_times_recorded(self):
        rng = np.random.default_rng(13)
        dataset = tiny_dataset(rng)
        net = small_net((20, 4, 20), seed=1)
        report = train(net, dataset, None, None, OptimizerSpec("adam"), epochs=2)
        assert len(report.epoch_times) == 2
        assert all(t >= 0 for t in report.epoch_times)


class TestCheckpoints:
    def test_round_trip(self):
        net = small_net((7, 5, 3), seed=42, dtype=np.float32)
        buf = io.BytesIO()
        save_network(net, buf)
        loaded = load_network(io.BytesIO(buf.getvalue()))
        assert loaded.spec.layer_sizes == (7, 5, 3)
        for a, b in zip(net.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)

    def test_round_trip_preserves_forward(self, tmp_path):
        net = small_net((6, 4, 2), seed=8, dtype=np.float32)
        path = tmp_path / "model.bin"
        save_network(net, path)
        loaded = load_network(path)
        x = np.linspace(0, 1, 6)
        assert np.array_equal(forward(net, x).probs, forward(loaded, x).probs)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="magic"):
            load_network(io.BytesIO(b"XXXX" + b"\0" * 16))


class TestMultiHot:
    def test_scatter(self):
        instances = [SparseInstance.from_items(5, [1, 5]),
                     SparseInstance.from_items(5, [])]
        out = multi_hot(instances, 5)
        assert out.tolist() == [[1, 0, 0, 0, 1], [0, 0, 0, 0, 0]]
