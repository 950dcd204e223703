import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tonalrnn.rnn import CELL_KINDS, forward_batch, init_params
from tonalrnn.trainer import (ObjectiveConfig, TrainConfig, batch_loss, bptt_gradients,
                              calibrate_epsilon, clip_gradients, cross_entropy, evaluate_mce,
                              frame_change, rmsprop_init, rmsprop_step, train_model,
                              transition_weights, weighted_ce)

from conftest import make_piece


def zero_model(kind, n, h=3):
    p = init_params(kind, n, h)
    for k in p.arrays:
        p.arrays[k][...] = 0.0
    return p


class TestCrossEntropy:
    def test_half(self):
        assert cross_entropy(np.full(7, 0.5), np.full(7, 0.5)) == pytest.approx(7 * math.log(2))

    def test_zero_target_near_zero_prediction(self):
        ce = cross_entropy(np.zeros(4), np.zeros(4), eta=1e-7)
        assert 0 < ce < 1e-6

    def test_hand_computed(self):
        y = [0.2, 0.9, 0.5, 0.01]
        x = [0.0, 1.0, 0.3, 0.5]
        expected = 0.0
        for yi, xi in zip(y, x):
            expected -= xi * math.log(yi) + (1 - xi) * math.log(1 - yi)
        assert cross_entropy(y, x) == pytest.approx(expected, rel=1e-12)

    def test_clamp(self):
        assert cross_entropy([1.0], [0.0], eta=1e-7) == pytest.approx(-math.log(1e-7), rel=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cross_entropy([0.5, 0.5], [0.5])


class TestChangeAndEpsilon:
    def test_frame_change(self):
        assert frame_change([0.3, 0.3], [0.3, 0.3]) == 0
        assert frame_change([0, 1], [1, 0]) == 2

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3),
           st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_symmetry(self, a, b):
        assert frame_change(a, b) == frame_change(b, a)

    def test_calibrate_examples(self):
        assert calibrate_epsilon([0, 1, 2, 3]) == 2
        assert calibrate_epsilon([1.5, 1.5, 1.5]) == 1.5
        with pytest.raises(ValueError):
            calibrate_epsilon([])

    @settings(max_examples=50)
    @given(st.lists(st.integers(0, 20), min_size=1, max_size=200), st.floats(0.01, 0.99))
    def test_calibrate_property(self, values, q):
        c = np.array(values, dtype=float)
        eps = calibrate_epsilon(c, q)
        assert eps in c
        assert np.mean(c <= eps) >= q
        smaller = c[c < eps]
        if smaller.size:
            assert np.mean(c <= smaller.max()) < q

    def test_calibrated_fraction_bound(self, rng):
        c = rng.random(1000)
        eps = calibrate_epsilon(c)
        assert 0.505 <= np.mean(c <= eps) <= 0.505 + 1 / 1000


class TestWeights:
    def test_beta_one_is_plain_ce(self, rng):
        x0, x1, y = rng.random((3, 10, 6))
        cfg = ObjectiveConfig(beta=1.0, epsilon=2.0)
        np.testing.assert_allclose(weighted_ce(y, x0, x1, cfg), cross_entropy(y, x1))

    def test_boundary(self):
        cfg = ObjectiveConfig(epsilon=1.0)
        assert transition_weights([0, 0], [0, 0], cfg) == pytest.approx(1e-3)
        assert transition_weights([0, 0], [0.5, 0.5], cfg) == pytest.approx(1e-3)
        assert transition_weights([0, 0], [0.5, 0.6], cfg) == 1.0

    def test_uncalibrated(self):
        with pytest.raises(ValueError):
            transition_weights([0], [1], ObjectiveConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ObjectiveConfig(beta=0.0)
        with pytest.raises(ValueError):
            ObjectiveConfig(quantile=1.0)
        with pytest.raises(ValueError):
            ObjectiveConfig(epsilon=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)
        with pytest.raises(ValueError):
            TrainConfig(clip_mode="other")


def central_differences(params, inputs, targets, cfg, h=1e-5):
    num = {}
    for name, a in params.arrays.items():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            lp = batch_loss(params, inputs, targets, cfg)
            a[idx] = orig - h
            lm = batch_loss(params, inputs, targets, cfg)
            a[idx] = orig
            g[idx] = (lp - lm) / (2 * h)
        num[name] = g
    return num


@pytest.fixture(scope="module")
def gc_batch():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, (3, 8, 8))
    inputs, targets = x[:, :-1], x[:, 1:]
    cfg = ObjectiveConfig(epsilon=float(np.median(frame_change(inputs, targets))))
    return inputs, targets, cfg


class TestGradients:
    @pytest.mark.parametrize("kind", CELL_KINDS)
    def test_finite_differences(self, kind, gc_batch):
        inputs, targets, cfg = gc_batch
        p = init_params(kind, 8, 5, seed=1)
        rng = np.random.default_rng(1)
        for k in p.arrays:
            p.arrays[k] = p.arrays[k] + rng.normal(0, 0.3, p.arrays[k].shape)
        loss, grads = bptt_gradients(p, inputs, targets, cfg)
        assert loss == pytest.approx(batch_loss(p, inputs, targets, cfg), rel=1e-12)
        num = central_differences(p, inputs, targets, cfg)
        for name in p.arrays:
            denom = np.maximum(np.maximum(np.abs(num[name]), np.abs(grads[name])), 1e-8)
            rel = np.abs(num[name] - grads[name]) / denom
            assert rel.max() < 1e-4, name

    @pytest.mark.parametrize("kind", CELL_KINDS)
    def test_zero_model_half_targets(self, kind):
        p = zero_model(kind, 5)
        x = np.full((2, 4, 5), 0.5)
        _, grads = bptt_gradients(p, x, x, ObjectiveConfig(epsilon=0.0))
        np.testing.assert_allclose(grads["b_out"], 0.0, atol=1e-15)

    def test_batch_is_mean_of_sequences(self, gc_batch):
        inputs, targets, cfg = gc_batch
        p = init_params("lstm", 8, 5, seed=2)
        _, full = bptt_gradients(p, inputs, targets, cfg)
        parts = [bptt_gradients(p, inputs[i:i + 1], targets[i:i + 1], cfg)[1] for i in range(3)]
        for k in full:
            np.testing.assert_allclose(full[k], sum(g[k] for g in parts) / 3, atol=1e-14)

    def test_truncation_carries_state(self, gc_batch):
        inputs, targets, cfg = gc_batch
        p = init_params("gru", 8, 5, seed=2)
        loss_full, g_full = bptt_gradients(p, inputs, targets, cfg, truncation=100)
        loss_trunc, g_trunc = bptt_gradients(p, inputs, targets, cfg, truncation=3)
        # the loss only depends on the forward pass, which truncation must not change
        assert loss_trunc == pytest.approx(loss_full, rel=1e-12)
        # output-layer gradients are local in time so they are unaffected too
        np.testing.assert_allclose(g_trunc["W_out"], g_full["W_out"], atol=1e-14)
        assert not np.allclose(g_trunc["W_rec"], g_full["W_rec"])


class TestClipAndRmsprop:
    def test_clip_examples(self):
        out = clip_gradients({"g": np.array([0.5, -2.0])})
        np.testing.assert_array_equal(out["g"], [0.5, -1.0])
        same = clip_gradients({"g": np.array([0.1, -0.2])})
        np.testing.assert_array_equal(same["g"], [0.1, -0.2])
        with pytest.raises(ValueError):
            clip_gradients({"g": np.zeros(1)}, 0.0)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=10))
    def test_clip_idempotent(self, v):
        once = clip_gradients({"g": np.array(v)})
        np.testing.assert_array_equal(clip_gradients(once)["g"], once["g"])

    def test_norm_mode(self):
        out = clip_gradients({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0, "norm")
        assert out["a"][0] == pytest.approx(0.6) and out["b"][0] == pytest.approx(0.8)

    def test_zero_gradient(self):
        p = init_params("vanilla", 3, 2)
        acc = {k: np.full_like(v, 4.0) for k, v in p.arrays.items()}
        zeros = {k: np.zeros_like(v) for k, v in p.arrays.items()}
        p2, acc2 = rmsprop_step(p, zeros, acc, decay=0.9)
        for k in p.arrays:
            np.testing.assert_array_equal(p2[k], p[k])
            np.testing.assert_allclose(acc2[k], 3.6)

    def test_first_step_closed_form(self):
        p = init_params("vanilla", 3, 2)
        grads = {k: np.full_like(v, -0.25) for k, v in p.arrays.items()}
        p2, _ = rmsprop_step(p, grads, rmsprop_init(p), learning_rate=1e-3, decay=0.9, eps=0.0)
        for k in p.arrays:
            np.testing.assert_allclose(p2[k] - p[k], 1e-3 / math.sqrt(0.1))

    def test_elementwise(self):
        p = init_params("vanilla", 3, 2)
        g1 = {k: np.full_like(v, 0.1) for k, v in p.arrays.items()}
        g2 = {k: v.copy() for k, v in g1.items()}
        g2["b"][0] = 5.0
        a, _ = rmsprop_step(p, g1, rmsprop_init(p))
        b, _ = rmsprop_step(p, g2, rmsprop_init(p))
        np.testing.assert_array_equal(a["b"][1:], b["b"][1:])
        np.testing.assert_array_equal(a["W_in"], b["W_in"])


class TestEvaluate:
    def test_zero_model(self, rng):
        pieces = [make_piece(rng.random((n, 4)), str(n)) for n in (3, 5, 5)]
        p = zero_model("gru", 4)
        ref = np.mean(np.concatenate([cross_entropy(np.full((len(q) - 1, 4), 0.5), q.values[1:])
                                      for q in pieces]))
        assert evaluate_mce(p, pieces) == pytest.approx(ref, abs=1e-9)

    def test_two_frame_piece(self, rng):
        piece = make_piece(rng.random((2, 4)))
        p = init_params("lstm", 4, 3)
        y, _, _ = forward_batch(p, piece.values[None, :1], keep_cache=False)
        assert evaluate_mce(p, [piece]) == pytest.approx(float(cross_entropy(y[0, 0], piece.values[1])))

    def test_order_invariant(self, rng):
        pieces = [make_piece(rng.random((n, 4)), str(i)) for i, n in enumerate((4, 6, 9))]
        p = init_params("vanilla", 4, 3)
        assert evaluate_mce(p, pieces) == pytest.approx(evaluate_mce(p, pieces[::-1]), rel=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate_mce(init_params("vanilla", 4, 3), [make_piece(np.zeros((1, 4)))])


class TestTrainModel:
    def small(self, rng):
        train = [make_piece(rng.random((30, 6)), f"t{i}") for i in range(2)]
        test = [make_piece(rng.random((12, 6)), "x")]
        cfg = TrainConfig(n_hidden=4, batch_size=3, seq_len=10, max_epochs=6, patience=2, seed=3)
        return train, test, cfg

    def test_deterministic(self, rng):
        train, test, cfg = self.small(rng)
        (p1, r1), (p2, r2) = (train_model("lstm", train, test, config=cfg) for _ in range(2))
        assert r1.to_dict() == r2.to_dict()
        for k in p1.arrays:
            np.testing.assert_array_equal(p1[k], p2[k])

    def test_report(self, rng):
        train, test, cfg = self.small(rng)
        best, rep = train_model("gru", train, test, config=cfg)
        assert rep.best_test_mce == min(rep.test_mce)
        assert rep.test_mce[rep.best_epoch] == rep.best_test_mce
        assert rep.stop_reason in ("patience", "max_epochs")
        if rep.stop_reason == "patience":
            assert len(rep.test_mce) - 1 - rep.best_epoch == cfg.patience
        assert evaluate_mce(best, test) == pytest.approx(rep.best_test_mce, rel=1e-12)
        assert rep.epsilon == calibrate_epsilon(
            np.concatenate([frame_change(p.values[:-1], p.values[1:]) for p in train]))

    def test_empty_sets(self, rng):
        train, test, cfg = self.small(rng)
        with pytest.raises(ValueError):
            train_model("gru", [], test, config=cfg)
