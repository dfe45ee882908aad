"""Two-layer LSTM regressor with a linear dense head, written against numpy.

Gate layout inside every kernel is ``[i | f | o | g]`` along the last axis and
the row-vector convention ``x @ W`` is used throughout, so an input kernel has
shape (input_dim, 4*units).
"""
from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .series import SupervisedWindow, windows_to_arrays

ACTIVATIONS = ("relu", "tanh")


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LstmConfig:
    epochs: int = 1000
    units: int = 250
    recurrent_dropout: float = 0.1
    batch_size: int = 1
    l2_lambda: float = 0.01
    lookback: int = 4
    learning_rate: float = 1e-3
    seed: int = 42
    activation: str = "relu"
    standardize: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.units < 1 or self.batch_size < 1 or self.lookback < 1:
            raise ValueError(f"epochs, units, batch_size and lookback must be >= 1: {self}")
        if not 0.0 <= self.recurrent_dropout < 1.0:
            raise ValueError(f"recurrent_dropout must be in [0, 1), got {self.recurrent_dropout}")
        if self.l2_lambda < 0 or self.learning_rate <= 0:
            raise ValueError("l2_lambda must be >= 0 and learning_rate > 0")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")


class LstmWeights:
    """All trainable parameters as named views into one flat vector."""

    NAMES = ("W1", "U1", "b1", "W2", "U2", "b2", "w_dense", "b_dense")

    def __init__(self, units: int, flat: np.ndarray | None = None):
        self.units = units
        layout, size = _layout(units)
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise ValueError(f"flat vector has shape {flat.shape}, expected ({size},)")
        self.flat = flat
        self._views = {name: flat[a:b].reshape(shape) for name, (a, b, shape) in layout.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def __setitem__(self, name: str, value) -> None:
        self._views[name][...] = value

    def copy(self) -> "LstmWeights":
        return LstmWeights(self.units, self.flat.copy())

    def zeros_like(self) -> "LstmWeights":
        return LstmWeights(self.units)

    def layer(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self[f"W{k}"], self[f"U{k}"], self[f"b{k}"]

    def to_dict(self) -> dict:
        return {name: self[name].tolist() for name in self.NAMES}

    @classmethod
    def from_dict(cls, units: int, data: dict) -> "LstmWeights":
        w = cls(units)
        for name in cls.NAMES:
            w[name] = np.asarray(data[name], dtype=float)
        return w


@functools.lru_cache(maxsize=None)
def _layout(units: int):
    u4 = 4 * units
    shapes = {"W1": (1, u4), "U1": (units, u4), "b1": (u4,),
              "W2": (units, u4), "U2": (units, u4), "b2": (u4,),
              "w_dense": (units,), "b_dense": ()}
    layout, pos = {}, 0
    for name in LstmWeights.NAMES:
        n = math.prod(shapes[name])
        layout[name] = (pos, pos + n, shapes[name])
        pos += n
    return layout, pos


def glorot_init(units: int, rng: np.random.Generator) -> LstmWeights:
    """Per-gate Glorot-uniform kernels, zero biases, forget-gate bias 1."""
    w = LstmWeights(units)

    def uniform(fan_in, fan_out, shape):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    for k, input_dim in ((1, 1), (2, units)):
        W, U, b = w.layer(k)
        for gate in range(4):
            cols = slice(gate * units, (gate + 1) * units)
            W[:, cols] = uniform(input_dim, units, (input_dim, units))
            U[:, cols] = uniform(units, units, (units, units))
        b[units:2 * units] = 1.0
    w["w_dense"] = uniform(units, 1, (units,))
    return w


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _act(x, activation):
    if activation == "relu":
        return np.maximum(x, 0.0)
    return np.tanh(x)


def _act_grad(pre, post, activation):
    # ReLU subgradient at 0 is 0
    if activation == "relu":
        return pre > 0.0
    return 1.0 - post * post


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, batch: int, units: int) -> "CellState":
        return cls(np.zeros((batch, units)), np.zeros((batch, units)))


@dataclass
class GateCache:
    x: np.ndarray
    h_in: np.ndarray  # recurrent input after the dropout mask
    c_prev: np.ndarray
    ifo: np.ndarray  # sigmoid gates, (batch, 3*units)
    g_pre: np.ndarray
    g: np.ndarray
    c: np.ndarray
    act_c: np.ndarray

    @property
    def i(self):
        return self.ifo[:, :self.g.shape[1]]

    @property
    def f(self):
        u = self.g.shape[1]
        return self.ifo[:, u:2 * u]

    @property
    def o(self):
        return self.ifo[:, 2 * self.g.shape[1]:]


def cell_forward(x, state: CellState, W, U, b, activation: str = "relu",
                 mask: np.ndarray | None = None) -> tuple[CellState, GateCache]:
    """One LSTM step for a batch. ``x`` has shape (batch, input_dim)."""
    x = np.atleast_2d(x)
    units = U.shape[0]
    if x.shape[1] != W.shape[0] or state.h.shape[1] != units or W.shape[1] != 4 * units:
        raise ValueError("shape mismatch in cell_forward")
    h_in = state.h if mask is None else state.h * mask
    z = x @ W + h_in @ U + b
    ifo = _sigmoid(z[:, :3 * units])
    g_pre = z[:, 3 * units:]
    g = _act(g_pre, activation)
    c = ifo[:, units:2 * units] * state.c + ifo[:, :units] * g
    act_c = _act(c, activation)
    h = ifo[:, 2 * units:] * act_c
    return CellState(h, c), GateCache(x, h_in, state.c, ifo, g_pre, g, c, act_c)


@dataclass
class ForwardCache:
    layer1: list[GateCache]
    layer2: list[GateCache]
    mask: np.ndarray | None
    h_last: np.ndarray
    activation: str


def forward(weights: LstmWeights, windows: np.ndarray, masks: np.ndarray | None = None,
            activation: str = "relu") -> tuple[np.ndarray, ForwardCache]:
    """Predict one value per window.

    ``windows`` is (batch, L) or a single length-L window. ``masks`` is the
    (batch, units) layer-2 recurrent dropout mask, already scaled by
    1/(1-rate); pass None in evaluation mode.
    """
    X = np.atleast_2d(np.asarray(windows, dtype=float))
    batch, L = X.shape
    units = weights.units
    if masks is not None and masks.shape != (batch, units):
        raise ValueError(f"mask shape {masks.shape} != {(batch, units)}")
    s1 = CellState.zeros(batch, units)
    s2 = CellState.zeros(batch, units)
    c1, c2 = [], []
    W1, U1, b1 = weights.layer(1)
    W2, U2, b2 = weights.layer(2)
    for t in range(L):
        s1, g1 = cell_forward(X[:, t:t + 1], s1, W1, U1, b1, activation)
        s2, g2 = cell_forward(s1.h, s2, W2, U2, b2, activation, masks)
        c1.append(g1)
        c2.append(g2)
    pred = s2.h @ weights["w_dense"] + weights["b_dense"]
    return pred, ForwardCache(c1, c2, masks, s2.h, activation)


def _layer_backward(caches: list[GateCache], dh_seq: list[np.ndarray | None], W, U,
                    gW, gU, gb, activation, mask, need_dx: bool = True) -> list[np.ndarray]:
    """BPTT through one layer; returns gradients w.r.t. each step's input."""
    units = U.shape[0]
    L = len(caches)
    batch = caches[0].x.shape[0]
    dh_next = np.zeros((batch, units))
    dc_next = np.zeros((batch, units))
    dz_all = np.empty((L, batch, 4 * units))
    for t in range(L - 1, -1, -1):
        k = caches[t]
        dh = dh_next if dh_seq[t] is None else dh_next + dh_seq[t]
        ifo = k.ifo
        dz = dz_all[t]
        dc = dc_next + dh * ifo[:, 2 * units:] * _act_grad(k.c, k.act_c, activation)
        dz[:, :units] = dc * k.g
        dz[:, units:2 * units] = dc * k.c_prev
        dz[:, 2 * units:3 * units] = dh * k.act_c
        dz[:, :3 * units] *= ifo * (1.0 - ifo)
        dz[:, 3 * units:] = dc * ifo[:, :units] * _act_grad(k.g_pre, k.g, activation)
        dh_next = dz @ U.T
        if mask is not None:
            dh_next *= mask
        dc_next = dc * ifo[:, units:2 * units]
    flat_dz = dz_all.reshape(L * batch, 4 * units)
    gW += np.concatenate([k.x for k in caches]).T @ flat_dz
    gU += np.concatenate([k.h_in for k in caches]).T @ flat_dz
    gb += flat_dz.sum(axis=0)
    if not need_dx:
        return []
    return list(dz_all @ W.T)


def backward(weights: LstmWeights, cache: ForwardCache, dpred: np.ndarray) -> LstmWeights:
    """Gradients of a loss w.r.t. every weight, given dloss/dprediction per window."""
    if cache is None or not cache.layer1:
        raise ValueError("backward needs the cache of a forward pass")
    dpred = np.asarray(dpred, dtype=float).reshape(-1)
    grads = weights.zeros_like()
    grads["w_dense"] = cache.h_last.T @ dpred
    grads["b_dense"] = dpred.sum()
    L = len(cache.layer2)
    dh2 = [None] * L
    dh2[-1] = np.outer(dpred, weights["w_dense"])
    act = cache.activation
    dx2 = _layer_backward(cache.layer2, dh2, weights["W2"], weights["U2"],
                          grads["W2"], grads["U2"], grads["b2"], act, cache.mask)
    _layer_backward(cache.layer1, dx2, weights["W1"], weights["U1"],
                    grads["W1"], grads["U1"], grads["b1"], act, None, need_dx=False)
    return grads


def loss(predictions, targets, w_dense, l2_lambda: float) -> float:
    """Mean squared error plus an L2 penalty on the dense kernel (not its bias)."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(p) == 0 or len(p) != len(y):
        raise ValueError("predictions and targets must be non-empty and equal length")
    w = np.asarray(w_dense, dtype=float)
    return float(np.mean((p - y) ** 2) + l2_lambda * np.sum(w * w))


def loss_and_grads(weights: LstmWeights, X, y, l2_lambda: float, masks=None,
                   activation: str = "relu") -> tuple[float, LstmWeights]:
    pred, cache = forward(weights, X, masks, activation)
    y = np.asarray(y, dtype=float).reshape(-1)
    value = loss(pred, y, weights["w_dense"], l2_lambda)
    grads = backward(weights, cache, 2.0 * (pred - y) / len(y))
    grads["w_dense"] += 2.0 * l2_lambda * weights["w_dense"]
    return value, grads


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    _buf: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def zeros(cls, size: int, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float = 1e-3) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``.

    w <- w - lr * m_hat / (sqrt(v_hat) + eps) with m_hat = m / (1 - beta1^t)
    and v_hat = v / (1 - beta2^t).
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and Adam moments must share a shape")
    if state._buf is None or state._buf.shape != params.shape:
        state._buf = np.empty_like(params)
    buf = state._buf
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    np.multiply(grads, 1.0 - b1, out=buf)
    state.m += buf
    state.v *= b2
    np.multiply(grads, grads, out=buf)
    buf *= 1.0 - b2
    state.v += buf
    np.divide(state.v, 1.0 - b2 ** state.t, out=buf)
    np.sqrt(buf, out=buf)
    buf += state.epsilon
    np.divide(state.m, buf, out=buf)
    buf *= lr / (1.0 - b1 ** state.t)
    params -= buf


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray | None:
    """Inverted-dropout mask: kept units scaled by 1/(1-rate)."""
    if rate <= 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


@dataclass
class TrainHistory:
    mse: list[float] = field(default_factory=list)
    mae: list[float] = field(default_factory=list)
    mape: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.mse)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "mse", "mae", "mape"])
            for e, row in enumerate(zip(self.mse, self.mae, self.mape), start=1):
                w.writerow([e, *(repr(v) for v in row)])


@dataclass
class LstmModel:
    config: LstmConfig
    weights: LstmWeights
    shift: float = 0.0
    scale: float = 1.0

    def predict(self, windows) -> np.ndarray:
        """Evaluation-mode one-step predictions on the original scale."""
        X = (np.atleast_2d(np.asarray(windows, dtype=float)) - self.shift) / self.scale
        pred, _ = forward(self.weights, X, None, self.config.activation)
        return pred * self.scale + self.shift

    def to_json(self) -> str:
        return json.dumps({"config": asdict(self.config), "seed": self.config.seed,
                           "units": self.weights.units, "gate_order": "i,f,o,g",
                           "shift": self.shift, "scale": self.scale,
                           "weights": self.weights.to_dict()})

    @classmethod
    def from_json(cls, text: str) -> "LstmModel":
        d = json.loads(text)
        cfg = LstmConfig(**d["config"])
        return cls(cfg, LstmWeights.from_dict(d["units"], d["weights"]), d["shift"], d["scale"])


def _epoch_metrics(model: LstmModel, X: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    err = model.predict(X) - y
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    mape = float(100.0 * np.mean(np.abs(err) / np.abs(y))) if np.all(y != 0) else math.nan
    return mse, mae, mape


def train(config: LstmConfig, windows: Sequence[SupervisedWindow] | tuple[np.ndarray, np.ndarray]
          ) -> tuple[LstmModel, TrainHistory]:
    """Fit the network with Adam on windows kept in temporal order.

    Each epoch walks the windows in order in batches of ``batch_size``. Every
    sequence gets a fresh layer-2 recurrent dropout mask per epoch, shared by
    all its time steps. Epoch metrics are measured afterwards with dropout
    off, on the original scale.
    """
    if isinstance(windows, tuple):
        X, y = (np.asarray(a, dtype=float) for a in windows)
    else:
        if len(windows) == 0:
            raise ValueError("no training windows")
        X, y = windows_to_arrays(windows)
    if len(y) == 0:
        raise ValueError("no training windows")
    if X.shape[1] != config.lookback:
        raise ValueError(f"windows have length {X.shape[1]}, config.lookback is {config.lookback}")

    shift, scale = 0.0, 1.0
    if config.standardize:
        shift = float(np.mean(y))
        scale = float(np.std(y)) or 1.0
    Xs, ys = (X - shift) / scale, (y - shift) / scale

    rng = np.random.default_rng(config.seed)
    weights = glorot_init(config.units, rng)
    model = LstmModel(config, weights, shift, scale)
    adam = AdamState.zeros(weights.flat.size)
    history = TrainHistory()
    n, bs = len(ys), config.batch_size
    for epoch in range(1, config.epochs + 1):
        for start in range(0, n, bs):
            xb, yb = Xs[start:start + bs], ys[start:start + bs]
            mask = dropout_mask(rng, (len(yb), config.units), config.recurrent_dropout)
            value, grads = loss_and_grads(weights, xb, yb, config.l2_lambda, mask, config.activation)
            if not math.isfinite(value) or not np.all(np.isfinite(grads.flat)):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch} (batch starting {start})")
            adam_step(weights.flat, grads.flat, adam, config.learning_rate)
        mse, mae, mape = _epoch_metrics(model, X, y)
        if not math.isfinite(mse):
            raise TrainingDivergedError(f"non-finite training MSE at epoch {epoch}")
        history.mse.append(mse)
        history.mae.append(mae)
        history.mape.append(mape)
    return model, history


def forecast_recursive(model: LstmModel, history: Sequence[float], h: int) -> np.ndarray:
    """Feed one-step predictions back as inputs for ``h`` steps."""
    L = model.config.lookback
    buf = [float(v) for v in history]
    if len(buf) < L:
        raise ValueError(f"need at least {L} history values, got {len(buf)}")
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    out = []
    for _ in range(h):
        nxt = float(model.predict(np.array(buf[-L:]))[0])
        out.append(nxt)
        buf.append(nxt)
    return np.array(out)


def with_seed(config: LstmConfig, seed: int) -> LstmConfig:
    return replace(config, seed=seed)
