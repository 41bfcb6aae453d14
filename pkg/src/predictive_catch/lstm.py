"""Single-layer LSTM regressor in plain numpy: forward pass, BPTT, Adam.

Gate blocks are stacked in the order input, forget, output, candidate, so the
input weights have shape (4H, D), the recurrent weights (4H, H) and the gate
biases (4H,). Everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

PARAM_NAMES = ("input_weights", "recurrent_weights", "gate_biases", "dense_weights", "dense_bias")
MAGIC = "PCLSTM"
FORMAT_VERSION = 1


class NumericInputError(ValueError):
    pass


@dataclass
class LSTMParams:
    input_weights: np.ndarray
    recurrent_weights: np.ndarray
    gate_biases: np.ndarray
    dense_weights: np.ndarray
    dense_bias: np.ndarray

    @classmethod
    def initialize(cls, rng: np.random.Generator, n_input: int = 16, n_hidden: int = 25,
                   n_output: int = 8, forget_bias: float = 1.0) -> "LSTMParams":
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases except the forget gate."""
        def uniform(shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        biases = np.zeros(4 * n_hidden)
        biases[n_hidden:2 * n_hidden] = forget_bias
        return cls(
            input_weights=uniform((4 * n_hidden, n_input), n_input),
            recurrent_weights=uniform((4 * n_hidden, n_hidden), n_hidden),
            gate_biases=biases,
            dense_weights=uniform((n_output, n_hidden), n_hidden),
            dense_bias=np.zeros(n_output),
        )

    @classmethod
    def zeros(cls, n_input=16, n_hidden=25, n_output=8) -> "LSTMParams":
        return cls(np.zeros((4 * n_hidden, n_input)), np.zeros((4 * n_hidden, n_hidden)),
                   np.zeros(4 * n_hidden), np.zeros((n_output, n_hidden)), np.zeros(n_output))

    @property
    def n_input(self) -> int:
        return self.input_weights.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.recurrent_weights.shape[1]

    @property
    def n_output(self) -> int:
        return self.dense_weights.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "LSTMParams":
        return LSTMParams(**{k: v.copy() for k, v in self.arrays().items()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def with_flat(self, flat: np.ndarray) -> "LSTMParams":
        out, i = {}, 0
        for name, a in self.arrays().items():
            out[name] = np.asarray(flat[i:i + a.size], dtype=float).reshape(a.shape).copy()
            i += a.size
        return LSTMParams(**out)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays().values())

    def save(self, path) -> None:
        """Write the text layout: a magic/version line, then per array its name
        and shape on one line followed by one row-major line of values."""
        with open(path, "w") as fh:
            fh.write(f"{MAGIC} {FORMAT_VERSION}\n")
            for name, a in self.arrays().items():
                fh.write(f"{name} {' '.join(str(s) for s in a.shape)}\n")
                fh.write(" ".join(repr(float(v)) for v in a.ravel()) + "\n")

    @classmethod
    def load(cls, path) -> "LSTMParams":
        with open(path) as fh:
            lines = fh.read().splitlines()
        magic, version = lines[0].split()
        if magic != MAGIC or int(version) != FORMAT_VERSION:
            raise ValueError(f"{path}: not a version {FORMAT_VERSION} {MAGIC} file")
        arrays = {}
        for head, body in zip(lines[1::2], lines[2::2]):
            name, *shape = head.split()
            values = np.array([float(v) for v in body.split()]) if body else np.empty(0)
            arrays[name] = values.reshape([int(s) for s in shape])
        return cls(**{name: arrays[name] for name in PARAM_NAMES})


@dataclass
class ForwardCache:
    """Per-step activations, stored time-major."""
    inputs: np.ndarray      # (N, L, D)
    gates: np.ndarray       # (L, N, 4H) post-activation i, f, o, g
    cells: np.ndarray       # (L + 1, N, H), index 0 is the zero initial state
    tanh_cells: np.ndarray  # (L, N, H)
    hidden: np.ndarray      # (L + 1, N, H), index 0 is the zero initial state


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] < 1:
        raise ValueError(f"expected (L, D) or (N, L, D) input, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("input sequence contains non-finite values")
    return x


def lstm_forward(inputs, params: LSTMParams):
    """Run the recurrence over (L, D) or (N, L, D) inputs from zero state.

    Returns the final hidden state ((H,) or (N, H)) and the cache for `backward`.
    """
    single = np.ndim(inputs) == 2
    x = _as_batch(inputs)
    n, length, _ = x.shape
    hdim = params.n_hidden
    gates = np.ascontiguousarray(x.transpose(1, 0, 2)) @ params.input_weights.T
    gates += params.gate_biases
    cells = np.zeros((length + 1, n, hdim))
    tanh_cells = np.empty((length, n, hdim))
    hidden = np.zeros((length + 1, n, hdim))
    u_t = params.recurrent_weights.T
    for t in range(length):
        a = gates[t]
        a += hidden[t] @ u_t
        sig = a[:, :3 * hdim]
        np.multiply(sig, 0.5, out=sig)
        np.tanh(sig, out=sig)
        sig += 1.0
        sig *= 0.5
        np.tanh(a[:, 3 * hdim:], out=a[:, 3 * hdim:])
        c = cells[t + 1]
        np.multiply(a[:, hdim:2 * hdim], cells[t], out=c)
        c += a[:, :hdim] * a[:, 3 * hdim:]
        np.tanh(c, out=tanh_cells[t])
        np.multiply(a[:, 2 * hdim:3 * hdim], tanh_cells[t], out=hidden[t + 1])
    cache = ForwardCache(x, gates, cells, tanh_cells, hidden)
    final = hidden[-1]
    return (final[0] if single else final), cache


def predict_head(hidden, params: LSTMParams) -> np.ndarray:
    """Affine readout, no output nonlinearity."""
    return np.asarray(hidden, dtype=float) @ params.dense_weights.T + params.dense_bias


def predict(inputs, params: LSTMParams) -> np.ndarray:
    hidden, _ = lstm_forward(inputs, params)
    return predict_head(hidden, params)


def mse_loss(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {targets.shape}")
    return float(np.mean((predictions - targets) ** 2))


def backward(inputs, targets, params: LSTMParams):
    """Loss and exact gradients of the batch MSE (mean over all N x O entries).

    Returns ``(loss, grads)`` where `grads` is an `LSTMParams` of gradients.
    """
    hidden, cache = lstm_forward(inputs, params)
    hidden = np.atleast_2d(hidden)
    pred = predict_head(hidden, params)
    targets = np.asarray(targets, dtype=float).reshape(pred.shape)
    loss = mse_loss(pred, targets)
    dy = 2.0 * (pred - targets) / pred.size
    return loss, _backprop(dy, cache, params)


def _backprop(dy: np.ndarray, cache: ForwardCache, params: LSTMParams) -> LSTMParams:
    n, length, _ = cache.inputs.shape
    hdim = params.n_hidden
    d_dense_w = dy.T @ cache.hidden[-1]
    d_dense_b = dy.sum(axis=0)
    dh = dy @ params.dense_weights
    dc = np.zeros((n, hdim))
    dz = np.empty((length, n, 4 * hdim))
    u = params.recurrent_weights
    for t in range(length - 1, -1, -1):
        a = cache.gates[t]
        i, f, o, g = a[:, :hdim], a[:, hdim:2 * hdim], a[:, 2 * hdim:3 * hdim], a[:, 3 * hdim:]
        tc = cache.tanh_cells[t]
        dc += dh * o * (1.0 - tc * tc)
        dzt = dz[t]
        dzt[:, :hdim] = dc * g * i * (1.0 - i)
        dzt[:, hdim:2 * hdim] = dc * cache.cells[t] * f * (1.0 - f)
        dzt[:, 2 * hdim:3 * hdim] = dh * tc * o * (1.0 - o)
        dzt[:, 3 * hdim:] = dc * i * (1.0 - g * g)
        dc *= f
        dh = dzt @ u
    flat_dz = dz.reshape(length * n, 4 * hdim)
    x_tm = cache.inputs.transpose(1, 0, 2).reshape(length * n, -1)
    d_input_w = flat_dz.T @ x_tm
    d_recurrent_w = flat_dz.T @ cache.hidden[:-1].reshape(length * n, hdim)
    d_bias = flat_dz.sum(axis=0)
    return LSTMParams(d_input_w, d_recurrent_w, d_bias, d_dense_w, d_dense_b)


def numerical_gradients(inputs, targets, params: LSTMParams, eps: float = 1e-5) -> LSTMParams:
    """Central finite differences of the batch MSE, one parameter at a time."""
    flat = params.flatten()
    grad = np.empty_like(flat)
    for k in range(flat.size):
        keep = flat[k]
        flat[k] = keep + eps
        up = mse_loss(predict(inputs, params.with_flat(flat)), targets)
        flat[k] = keep - eps
        down = mse_loss(predict(inputs, params.with_flat(flat)), targets)
        flat[k] = keep
        grad[k] = (up - down) / (2 * eps)
    return params.with_flat(grad)


def gradient_check(inputs, targets, params: LSTMParams, eps: float = 1e-5,
                   floor: float = 1e-6) -> float:
    """Max relative error between BPTT and finite-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    entries whose true gradient is ~0 from reporting pure round-off.
    """
    _, analytic = backward(inputs, targets, params)
    numeric = numerical_gradients(inputs, targets, params, eps)
    a, n = analytic.flatten(), numeric.flatten()
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: LSTMParams, **kw) -> "AdamState":
        state = cls(**kw)
        for name, a in params.arrays().items():
            state.first_moment[name] = np.zeros_like(a)
            state.second_moment[name] = np.zeros_like(a)
        return state


def clip_by_norm(grads: LSTMParams, max_norm: float) -> LSTMParams:
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.arrays().values())))
    if norm <= max_norm or norm == 0:
        return grads
    scale = max_norm / norm
    return LSTMParams(**{k: g * scale for k, g in grads.arrays().items()})


def adam_step(params: LSTMParams, grads: LSTMParams, state: AdamState):
    """Bias-corrected Adam update, in place. Returns ``(params, state)``."""
    if not state.first_moment:
        state.first_moment = {k: np.zeros_like(a) for k, a in params.arrays().items()}
        state.second_moment = {k: np.zeros_like(a) for k, a in params.arrays().items()}
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step_count
    bc2 = 1.0 - b2 ** state.step_count
    for name, p in params.arrays().items():
        g = getattr(grads, name)
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
