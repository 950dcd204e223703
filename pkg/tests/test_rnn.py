import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tonalrnn.rnn import (CELL_KINDS, CellParams, RnnState, forward, forward_batch, init_params,
                          mi_aggregate, param_count, step)


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def reference_step(p, h, c, x):
    """Unbatched textbook cell equations, written independently of the package."""
    H = p.n_hidden
    W, U, b = p["W_in"], p["W_rec"], p["b"]

    def pre(rows, hh):
        a, r = W[rows] @ x, U[rows] @ hh
        if p.kind.endswith("_mi"):
            return p["alpha"][rows] * a * r + p["beta1"][rows] * a + p["beta2"][rows] * r + b[rows]
        return a + r + b[rows]

    blk = [slice(i * H, (i + 1) * H) for i in range(4)]
    if p.kind in ("vanilla", "vanilla_mi"):
        h = np.tanh(pre(blk[0], h))
    elif p.kind in ("lstm", "lstm_mi"):
        i, f, g, o = sig(pre(blk[0], h)), sig(pre(blk[1], h)), np.tanh(pre(blk[2], h)), sig(pre(blk[3], h))
        c = f * c + i * g
        h = o * np.tanh(c)
    else:
        r, u = sig(pre(blk[0], h)), sig(pre(blk[1], h))
        n = np.tanh(W[blk[2]] @ x + U[blk[2]] @ (r * h) + b[blk[2]])
        h = (1 - u) * h + u * n  # update gate weights the candidate
    y = sig(p["W_out"] @ h + p["b_out"])
    return h, c, y


def perturbed(kind, n=6, h=4, seed=0, scale=0.3):
    p = init_params(kind, n, h, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for k in p.arrays:
        p.arrays[k] = p.arrays[k] + rng.normal(0, scale, p.arrays[k].shape)
    return p


class TestParams:
    def test_counts_from_shapes(self):
        # gate-stacked W_in, W_rec, b, then W_out, b_out
        for kind, g, mi in [("vanilla", 1, 0), ("lstm", 4, 0), ("gru", 3, 0),
                            ("vanilla_mi", 1, 3), ("lstm_mi", 4, 3)]:
            n, h = 334, 75
            expected = g * h * n + g * h * h + g * h + mi * g * h + n * h + n
            assert param_count(kind, n, h) == expected
        assert param_count("vanilla", 334, 75) == 56134
        assert param_count("lstm", 334, 75) == 148384

    def test_init_deterministic(self):
        a, b = init_params("gru", 10, 4, seed=3), init_params("gru", 10, 4, seed=3)
        for k in a.arrays:
            np.testing.assert_array_equal(a[k], b[k])
        assert not np.array_equal(a["W_in"], init_params("gru", 10, 4, seed=4)["W_in"])

    def test_init_properties(self):
        p = init_params("lstm_mi", 10, 4)
        for blk in range(4):
            u = p["W_rec"][blk * 4:(blk + 1) * 4]
            np.testing.assert_allclose(u @ u.T, np.eye(4), atol=1e-12)
        np.testing.assert_array_equal(p["b"][4:8], 1.0)
        np.testing.assert_array_equal(p["alpha"], 1.0)
        np.testing.assert_array_equal(p["beta1"], 0.5)

    def test_rejects_bad_arrays(self):
        p = init_params("vanilla", 5, 3)
        arrays = dict(p.arrays)
        arrays["W_in"] = np.zeros((2, 2))
        with pytest.raises(ValueError):
            CellParams("vanilla", 5, 3, arrays)
        with pytest.raises(ValueError):
            CellParams("vanilla", 5, 3, {k: v for k, v in p.arrays.items() if k != "b"})
        with pytest.raises(ValueError):
            init_params("transformer", 5, 3)


class TestMI:
    def test_example(self):
        np.testing.assert_allclose(mi_aggregate([2.0], [3.0], [1.0], [0.5], [0.5], [0.0]), [8.5])

    def test_zero_inputs_give_bias(self):
        np.testing.assert_allclose(mi_aggregate([0, 0], [0, 0], [1, 2], [3, 4], [5, 6], [0.1, 0.2]),
                                   [0.1, 0.2])

    def test_additive_reduction(self):
        a, b = np.array([1.0, -2.0]), np.array([0.5, 4.0])
        np.testing.assert_allclose(mi_aggregate(a, b, [0, 0], [1, 1], [1, 1], [0.3, 0.3]),
                                   a + b + 0.3)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mi_aggregate([1.0, 2.0], [1.0], [1.0], [1.0], [1.0], [1.0])

    @given(st.lists(st.floats(-10, 10), min_size=6, max_size=6))
    def test_formula(self, v):
        a, b, al, b1, b2, c = v
        assert mi_aggregate([a], [b], [al], [b1], [b2], [c])[0] == pytest.approx(
            al * a * b + b1 * a + b2 * b + c, abs=1e-9)


class TestStep:
    @pytest.mark.parametrize("kind", CELL_KINDS)
    def test_matches_reference(self, kind):
        p = perturbed(kind)
        rng = np.random.default_rng(5)
        state = RnnState.zeros(p)
        h, c = np.zeros(4), np.zeros(4)
        for _ in range(5):
            x = rng.random(6)
            state, y = step(p, state, x)
            h, c, y_ref = reference_step(p, h, c, x)
            np.testing.assert_allclose(state.hidden, h, atol=1e-12)
            np.testing.assert_allclose(y, y_ref, atol=1e-12)

    @pytest.mark.parametrize("kind", CELL_KINDS)
    def test_zero_state_zero_input(self, kind):
        p = init_params(kind, 6, 4)
        state, y = step(p, RnnState.zeros(p), np.zeros(6))
        np.testing.assert_allclose(y, sig(p["b_out"] + p["W_out"] @ state.hidden))
        if kind in ("vanilla", "vanilla_mi", "lstm", "lstm_mi"):
            np.testing.assert_allclose(state.hidden, 0.0)
            np.testing.assert_allclose(y, 0.5)

    @settings(max_examples=20, deadline=None)
    @given(st.sampled_from(CELL_KINDS), st.integers(0, 1000))
    def test_output_range(self, kind, seed):
        p = perturbed(kind, seed=seed, scale=2.0)
        x = np.random.default_rng(seed).uniform(-5, 5, (3, 6))
        y, _ = forward(p, x)
        assert np.all((y >= 0) & (y <= 1))

    def test_forward_matches_steps(self):
        p = perturbed("lstm")
        x = np.random.default_rng(1).random((7, 6))
        y, final = forward(p, x)
        state = RnnState.zeros(p)
        for t in range(7):
            state, yt = step(p, state, x[t])
            np.testing.assert_allclose(y[t], yt, atol=1e-14)
        np.testing.assert_allclose(final.hidden, state.hidden, atol=1e-14)
        np.testing.assert_allclose(final.cell, state.cell, atol=1e-14)

    def test_batch_rows_independent(self):
        p = perturbed("gru")
        x = np.random.default_rng(2).random((3, 5, 6))
        y, _, _ = forward_batch(p, x, keep_cache=False)
        for b in range(3):
            np.testing.assert_allclose(y[b], forward(p, x[b])[0], atol=1e-14)

    def test_shape_errors(self):
        p = init_params("vanilla", 6, 4)
        with pytest.raises(ValueError):
            step(p, RnnState.zeros(p), np.zeros(5))
        with pytest.raises(ValueError):
            forward(p, np.zeros((3, 5)))
