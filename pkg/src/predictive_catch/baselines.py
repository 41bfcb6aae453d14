"""Reference predictors: ridge regression on the flattened window and the per-horizon mean."""
from __future__ import annotations

from dataclasses import dataclass
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .features import N_MOTOR, Normalizer, WindowSet, window_length, window_targets

DEFAULT_RIDGE = 1e-6
LINEAR_MAGIC = "PCLINEAR"
MEAN_MAGIC = "PCMEAN"
FORMAT_VERSION = 1


class IllConditionedError(np.linalg.LinAlgError):
    pass


def _write_arrays(path, magic: str, arrays: Mapping[str, np.ndarray]) -> None:
    with open(path, "w") as fh:
        fh.write(f"{magic} {FORMAT_VERSION}\n")
        for name, a in arrays.items():
            a = np.asarray(a, dtype=float)
            fh.write(f"{name} {' '.join(str(s) for s in a.shape)}\n")
            fh.write(" ".join(repr(float(v)) for v in a.ravel()) + "\n")


def _read_arrays(path, magic: str) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != magic or int(head[1]) != FORMAT_VERSION:
        raise ValueError(f"{path}: not a version {FORMAT_VERSION} {magic} file")
    out = {}
    for header, body in zip(lines[1::2], lines[2::2]):
        name, *shape = header.split()
        values = np.array([float(v) for v in body.split()]) if body else np.empty(0)
        out[name] = values.reshape([int(s) for s in shape])
    return out


def _design(inputs: np.ndarray) -> np.ndarray:
    """Flatten (N, L, D) windows row-major and append a bias column."""
    x = np.asarray(inputs, dtype=float)
    flat = x.reshape(len(x), -1) if x.ndim == 3 else x.reshape(1, -1)
    return np.hstack([flat, np.ones((len(flat), 1))])


@dataclass
class LinearPredictor:
    """Ridge map from one flattened window plus bias to the 8 motor outputs.

    ``weights`` has shape (8, L*16 + 1); the last column is the bias.
    """
    weights: np.ndarray
    ridge_lambda: float
    horizon: int

    def predict(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float)
        out = _design(x) @ self.weights.T
        return out[0] if x.ndim == 2 else out


def fit_linear(windows: WindowSet, horizon: int | None = None,
               ridge_lambda: float = DEFAULT_RIDGE) -> LinearPredictor:
    """Solve min ||AW - Y||^2 + lambda ||W||^2 (bias unpenalized) by normal equations."""
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be non-negative")
    if len(windows) == 0:
        raise ValueError("cannot fit a linear predictor on no windows")
    a = _design(windows.inputs)
    y = np.asarray(windows.targets, dtype=float)
    penalty = np.full(a.shape[1], float(ridge_lambda))
    penalty[-1] = 0.0
    gram = a.T @ a + np.diag(penalty)
    if ridge_lambda == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise IllConditionedError(
            f"normal matrix is singular ({a.shape[0]} samples, {a.shape[1]} unknowns); "
            "use ridge_lambda > 0")
    try:
        w = np.linalg.solve(gram, a.T @ y)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"normal equations could not be solved ({exc}); "
                                  "use ridge_lambda > 0") from exc
    h = windows.horizon_frames if horizon is None else int(horizon)
    return LinearPredictor(w.T.copy(), float(ridge_lambda), h)


def predict_linear(predictor: LinearPredictor, window) -> np.ndarray:
    return predictor.predict(window)


def ridge_gradient(predictor: LinearPredictor, windows: WindowSet) -> np.ndarray:
    """Gradient of the ridge objective at the predictor's weights, shaped like them."""
    a = _design(windows.inputs)
    resid = a @ predictor.weights.T - windows.targets
    penalty = np.full(a.shape[1], predictor.ridge_lambda)
    penalty[-1] = 0.0
    return 2.0 * (resid.T @ a + predictor.weights * penalty)


@dataclass
class LinearModel:
    """One `LinearPredictor` per horizon sharing an integration duration."""
    integration_ms: float
    predictors: dict
    normalizer: Normalizer | None = None

    @property
    def horizons(self) -> tuple:
        return tuple(sorted(self.predictors))

    @property
    def label(self) -> str:
        return f"linear_I{self.integration_ms:g}"

    @property
    def window_length(self) -> int:
        return window_length(self.integration_ms)

    def predict(self, inputs: np.ndarray, horizon: int) -> np.ndarray:
        return self.predictors[horizon].predict(inputs)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        ridge = {str(h): self.predictors[h].ridge_lambda for h in self.horizons}
        manifest = {"kind": "linear_model", "integration_ms": self.integration_ms,
                    "horizons": list(self.horizons), "ridge_lambda": ridge,
                    "window_length": self.window_length}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if self.normalizer is not None:
            self.normalizer.save(d / "normalizer.txt")
        for h in self.horizons:
            _write_arrays(d / f"linear_{h:02d}.params", LINEAR_MAGIC,
                          {"weights": self.predictors[h].weights})

    @classmethod
    def load(cls, directory) -> "LinearModel":
        d = Path(directory)
        if not (d / "manifest.json").exists():
            raise FileNotFoundError(f"no linear model at {d} (missing manifest.json)")
        manifest = json.loads((d / "manifest.json").read_text())
        preds = {}
        for h in manifest["horizons"]:
            w = _read_arrays(d / f"linear_{h:02d}.params", LINEAR_MAGIC)["weights"]
            preds[h] = LinearPredictor(w, manifest["ridge_lambda"][str(h)], h)
        norm = Normalizer.load(d / "normalizer.txt") if (d / "normalizer.txt").exists() else None
        return cls(manifest["integration_ms"], preds, norm)


def fit_linear_model(dataset, integration_ms: float, horizons: Sequence[int],
                     ridge_lambda: float = DEFAULT_RIDGE) -> LinearModel:
    """Per-horizon ridge fits on the same normalized training windows the LSTM sees."""
    preds = {h: fit_linear(dataset.windows("train", integration_ms, h), h, ridge_lambda)
             for h in horizons}
    return LinearModel(integration_ms, preds, dataset.normalizer)


@dataclass
class MeanPredictor:
    """Training-set mean and population sd of the motor state at each horizon."""
    means: dict
    sds: dict
    normalizer: Normalizer | None = None

    @property
    def horizons(self) -> tuple:
        return tuple(sorted(self.means))

    @property
    def label(self) -> str:
        return "mean"

    def predict(self, inputs: np.ndarray, horizon: int) -> np.ndarray:
        n = len(inputs) if np.ndim(inputs) == 3 else 1
        return np.tile(self.means[horizon], (n, 1))

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = {"kind": "mean_model", "horizons": list(self.horizons)}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if self.normalizer is not None:
            self.normalizer.save(d / "normalizer.txt")
        for h in self.horizons:
            _write_arrays(d / f"mean_{h:02d}.params", MEAN_MAGIC,
                          {"mean": self.means[h], "sd": self.sds[h]})

    @classmethod
    def load(cls, directory) -> "MeanPredictor":
        d = Path(directory)
        if not (d / "manifest.json").exists():
            raise FileNotFoundError(f"no mean model at {d} (missing manifest.json)")
        manifest = json.loads((d / "manifest.json").read_text())
        means, sds = {}, {}
        for h in manifest["horizons"]:
            arrays = _read_arrays(d / f"mean_{h:02d}.params", MEAN_MAGIC)
            means[h], sds[h] = arrays["mean"], arrays["sd"]
        norm = Normalizer.load(d / "normalizer.txt") if (d / "normalizer.txt").exists() else None
        return cls(means, sds, norm)


def fit_mean(targets: Mapping[int, np.ndarray], normalizer: Normalizer | None = None) -> MeanPredictor:
    means, sds = {}, {}
    for h, y in targets.items():
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if y.size == 0:
            raise ValueError(f"no targets for horizon {h}")
        means[int(h)] = y.mean(axis=0)
        sds[int(h)] = y.std(axis=0)
    return MeanPredictor(means, sds, normalizer)


def fit_mean_model(dataset, horizons: Sequence[int]) -> MeanPredictor:
    """Mean predictor over normalized training targets."""
    norm = dataset.normalizer
    targets = {h: norm.apply_motor(window_targets(dataset.train, h)) for h in horizons}
    return fit_mean(targets, dataset.normalizer)


def mean_band(predictor: MeanPredictor, horizon: int, physical: bool = False):
    """(mean, sd) of the 8 outputs at `horizon`, optionally de-normalized."""
    mean, sd = predictor.means[horizon], predictor.sds[horizon]
    if physical:
        if predictor.normalizer is None:
            raise ValueError("physical units need the predictor's normalizer")
        norm = predictor.normalizer
        return norm.invert_motor(mean), sd * norm.sd[:N_MOTOR]
    return mean.copy(), sd.copy()
