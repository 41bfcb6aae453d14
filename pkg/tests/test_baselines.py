import numpy as np
import pytest

from predictive_catch.baselines import (IllConditionedError, LinearModel, MeanPredictor,
                                        fit_linear, fit_linear_model, fit_mean, fit_mean_model,
                                        mean_band, predict_linear)
from predictive_catch.features import WindowSet


def windows(x, y, horizon=1):
    return WindowSet(np.asarray(x, float), np.asarray(y, float), np.arange(len(x)), 27, horizon)


def test_exact_linear_targets_interpolated():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 2, 16))
    w, b = rng.normal(size=(8, 32)), rng.normal(size=8)
    y = x.reshape(60, -1) @ w.T + b
    pred = fit_linear(windows(x, y), ridge_lambda=0.0)
    assert np.mean((pred.predict(x) - y) ** 2) < 1e-18
    assert pred.weights.shape == (8, 33)
    np.testing.assert_allclose(predict_linear(pred, x[0]), y[0], atol=1e-9)


def test_huge_ridge_collapses_to_target_mean():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(40, 2, 16)), rng.normal(size=(40, 8))
    pred = fit_linear(windows(x, y), ridge_lambda=1e12)
    assert np.abs(pred.weights[:, :-1]).max() < 1e-9
    np.testing.assert_allclose(pred.predict(x), np.tile(y.mean(axis=0), (40, 1)), atol=1e-8)


def test_ridge_solution_is_stationary():
    # independent optimality oracle: gradient of ||AW - Y||^2 + lam ||W_no_bias||^2
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(50, 1, 16)), rng.normal(size=(50, 8))
    lam = 1e-6
    pred = fit_linear(windows(x, y), ridge_lambda=lam)
    a = np.hstack([x.reshape(50, -1), np.ones((50, 1))])
    w = pred.weights.T
    penalty = np.r_[np.full(16, lam), 0.0]
    grad = 2 * a.T @ (a @ w - y) + 2 * penalty[:, None] * w
    assert np.linalg.norm(grad) < 1e-8


def test_singular_system_without_ridge_is_reported():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(10, 2, 16)), rng.normal(size=(10, 8))
    with pytest.raises(IllConditionedError, match="ridge_lambda > 0"):
        fit_linear(windows(x, y), ridge_lambda=0.0)
    fit_linear(windows(x, y), ridge_lambda=1e-6)
    with pytest.raises(ValueError):
        fit_linear(windows(x, y), ridge_lambda=-1.0)


def test_mean_predictor_examples():
    same = fit_mean({1: np.tile([0.5] * 8, (5, 1))})
    assert np.all(same.sds[1] == 0)
    plus_minus = fit_mean({3: np.array([[-1.0] * 8, [1.0] * 8])})
    mean, sd = mean_band(plus_minus, 3)
    assert np.all(mean == 0) and np.all(sd == 1)
    pred = plus_minus.predict(np.zeros((2, 4, 16)), 3)
    assert np.sqrt(np.mean((pred - np.array([[-1.0] * 8, [1.0] * 8])) ** 2)) == 1.0


def test_mean_rmse_equals_population_sd(small_dataset):
    mean = fit_mean_model(small_dataset, (1, 19, 37))
    for h in (1, 19, 37):
        y = small_dataset.windows("train", 27, h).targets
        rmse = np.sqrt(np.mean((mean.predict(np.zeros((len(y), 2, 16)), h) - y) ** 2, axis=0))
        np.testing.assert_allclose(rmse, mean.sds[h], atol=1e-12)


def test_linear_training_error_beats_constant(small_dataset):
    lin = fit_linear_model(small_dataset, 27, (1, 37))
    mean = fit_mean_model(small_dataset, (1, 37))
    for h in (1, 37):
        ws = small_dataset.windows("train", 27, h)
        lin_mse = np.mean((lin.predict(ws.inputs, h) - ws.targets) ** 2)
        mean_mse = np.mean((mean.predict(ws.inputs, h) - ws.targets) ** 2)
        assert lin_mse <= mean_mse


def test_physical_band_uses_normalizer(small_dataset):
    mean = fit_mean_model(small_dataset, (5,))
    m, sd = mean_band(mean, 5, physical=True)
    raw = small_dataset.normalizer.invert_motor(small_dataset.windows("train", 27, 5).targets)
    np.testing.assert_allclose(m, raw.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(sd, raw.std(axis=0), atol=1e-9)


def test_round_trips(tmp_path, small_dataset):
    lin = fit_linear_model(small_dataset, 53, (2, 30), ridge_lambda=1e-3)
    lin.save(tmp_path / "lin")
    back = LinearModel.load(tmp_path / "lin")
    assert back.horizons == (2, 30) and back.label == "linear_I53"
    ws = small_dataset.windows("test", 53, 30)
    np.testing.assert_array_equal(back.predict(ws.inputs, 30), lin.predict(ws.inputs, 30))

    mean = fit_mean_model(small_dataset, (2, 30))
    mean.save(tmp_path / "mean")
    again = MeanPredictor.load(tmp_path / "mean")
    assert np.array_equal(again.sds[30], mean.sds[30])
    assert (tmp_path / "mean" / "manifest.json").exists()
