import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from predictive_catch.lstm import (AdamState, LSTMParams, NumericInputError, adam_step, backward,
                                   clip_by_norm, gradient_check, lstm_forward, mse_loss, predict,
                                   predict_head)


def small_net(seed=0, n_input=2, n_hidden=3, n_output=2):
    return LSTMParams.initialize(np.random.default_rng(seed), n_input, n_hidden, n_output)


def test_default_shapes_and_init():
    p = LSTMParams.initialize(np.random.default_rng(0))
    assert p.input_weights.shape == (100, 16) and p.recurrent_weights.shape == (100, 25)
    assert p.dense_weights.shape == (8, 25) and p.dense_bias.shape == (8,)
    assert np.all(p.gate_biases[25:50] == 1.0)
    assert np.abs(p.input_weights).max() <= 1 / 4 and np.abs(p.recurrent_weights).max() <= 1 / 5


def test_zero_weights_give_zero_hidden():
    x = np.random.default_rng(0).normal(size=(6, 16))
    h, _ = lstm_forward(x, LSTMParams.zeros())
    assert np.all(h == 0)


def test_one_cell_hand_computed():
    # gates (i, f, o, g) for one cell with zero weights: only biases matter
    b_i, b_o, b_g = 10.0, 0.3, math.atanh(0.6)
    p = LSTMParams.zeros(n_input=1, n_hidden=1, n_output=1)
    p.gate_biases[:] = [b_i, 0.0, b_o, b_g]
    h, _ = lstm_forward(np.array([[0.5]]), p)
    assert h[0] == pytest.approx(0.3084929706422138, abs=1e-15)
    sig = lambda z: 1 / (1 + math.exp(-z))
    assert h[0] == pytest.approx(sig(b_o) * math.tanh(sig(b_i) * 0.6), abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_hidden_state_is_bounded(seed, scale):
    p = LSTMParams.initialize(np.random.default_rng(seed), 4, 5, 2)
    x = scale * np.random.default_rng(seed + 1).normal(size=(3, 7, 4))
    h, _ = lstm_forward(x, p)
    assert np.all(np.abs(h) < 1)


def test_non_finite_input_rejected():
    x = np.zeros((3, 16))
    x[1, 2] = np.nan
    with pytest.raises(NumericInputError):
        lstm_forward(x, LSTMParams.zeros())


def test_head_is_affine():
    p = small_net()
    p.dense_weights[:] = 0
    p.dense_bias[:] = [1.5, -2.0]
    np.testing.assert_array_equal(predict_head(np.ones(3), p), [1.5, -2.0])
    q = LSTMParams.zeros(n_input=2, n_hidden=3, n_output=2)
    q.dense_weights[:] = np.eye(2, 3)
    np.testing.assert_array_equal(predict_head(np.array([0.2, -0.4, 0.9]), q), [0.2, -0.4])
    r = small_net(3)
    r.dense_bias[:] = 0
    h = np.array([0.1, -0.3, 0.5])
    np.testing.assert_allclose(predict_head(2.5 * h, r), 2.5 * predict_head(h, r))


def test_mse_examples():
    y = np.random.default_rng(0).normal(size=(4, 8))
    assert mse_loss(y, y) == 0.0
    assert mse_loss([[0.0]], [[2.0]]) == 4.0
    e = np.random.default_rng(1).normal(size=(4, 8))
    assert mse_loss(y + 2 * e, y) == pytest.approx(4 * mse_loss(y + e, y))
    with pytest.raises(ValueError):
        mse_loss(np.zeros((2, 8)), np.zeros((3, 8)))


def test_gradient_check_reduced_network():
    rng = np.random.default_rng(7)
    p = small_net(7)
    x, y = rng.normal(size=(5, 4, 2)), rng.normal(size=(5, 2))
    assert gradient_check(x, y, p, eps=1e-5) < 1e-4


def test_zero_error_gives_zero_gradient():
    p = small_net(1)
    x = np.random.default_rng(1).normal(size=(4, 3, 2))
    loss, grads = backward(x, predict(x, p), p)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads.arrays().values())


def test_dense_bias_gradient_is_mean_residual():
    # the loss averages over all N*O entries, so the bias gradient carries a 1/O factor
    p = small_net(2, n_output=3)
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(6, 4, 2)), rng.normal(size=(6, 3))
    _, grads = backward(x, y, p)
    resid = predict(x, p) - y
    np.testing.assert_allclose(grads.dense_bias, np.mean(2 * resid, axis=0) / 3, atol=1e-15)


def test_adam_first_step_is_sign_like():
    p = small_net(4)
    before = p.flatten()
    g = LSTMParams(**{k: np.random.default_rng(5).normal(size=a.shape) * 1e3
                      for k, a in p.arrays().items()})
    adam_step(p, g, AdamState.for_params(p, learning_rate=1e-3))
    delta = p.flatten() - before
    np.testing.assert_allclose(np.abs(delta), 1e-3, rtol=1e-6)
    assert np.all(np.sign(delta) == -np.sign(g.flatten()))


def test_adam_zero_gradient_keeps_params():
    p = small_net(4)
    before = p.flatten()
    state = AdamState.for_params(p)
    for _ in range(20):
        adam_step(p, LSTMParams(**{k: np.zeros_like(a) for k, a in p.arrays().items()}), state)
    assert np.array_equal(p.flatten(), before) and state.step_count == 20


def scalar_adam_oracle(w, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    path = []
    for t in range(1, steps + 1):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        path.append(w)
    return path


def test_adam_quadratic_bowl():
    p = LSTMParams.zeros(n_input=1, n_hidden=1, n_output=1)
    p.dense_bias[:] = 1.0
    state = AdamState.for_params(p, learning_rate=0.01)
    oracle = scalar_adam_oracle(1.0, 0.01, 2000)
    zero = {k: np.zeros_like(a) for k, a in p.arrays().items()}
    for t in range(2000):
        grads = LSTMParams(**{**zero, "dense_bias": 2 * p.dense_bias.copy()})
        adam_step(p, grads, state)
        if t < 200:
            assert p.dense_bias[0] == pytest.approx(oracle[t], abs=1e-12)
    assert abs(p.dense_bias[0]) < 0.01


def test_loss_falls_over_first_adam_steps():
    rng = np.random.default_rng(9)
    p = LSTMParams.initialize(rng, 16, 25, 8)
    x, y = rng.normal(size=(32, 4, 16)), rng.normal(size=(32, 8))
    state = AdamState.for_params(p, learning_rate=1e-3)
    losses = []
    for _ in range(11):
        loss, g = backward(x, y, p)
        losses.append(loss)
        adam_step(p, g, state)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_clip_by_norm():
    g = LSTMParams(**{k: np.ones_like(a) for k, a in small_net().arrays().items()})
    clipped = clip_by_norm(g, 1.0)
    assert np.linalg.norm(clipped.flatten()) == pytest.approx(1.0)
    assert clip_by_norm(g, 1e6) is g


def test_forward_is_deterministic_and_batch_consistent():
    p = small_net(6)
    x = np.random.default_rng(6).normal(size=(5, 4, 2))
    batch = predict(x, p)
    single = np.vstack([predict(xi, p) for xi in x])
    np.testing.assert_allclose(batch, single, atol=1e-15)
    assert np.array_equal(predict(x, p), batch)


def test_param_file_round_trip(tmp_path):
    p = LSTMParams.initialize(np.random.default_rng(8))
    p.save(tmp_path / "p.params")
    q = LSTMParams.load(tmp_path / "p.params")
    assert np.array_equal(p.flatten(), q.flatten())
    assert (tmp_path / "p.params").read_text().startswith("PCLSTM 1\n")
    (tmp_path / "bad.params").write_text("NOPE 1\n")
    with pytest.raises(ValueError):
        LSTMParams.load(tmp_path / "bad.params")
