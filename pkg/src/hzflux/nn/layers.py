"""Layers with hand-written reverse-mode gradients.

Every layer caches what its backward pass needs during ``forward`` and
fills ``self.grads`` (same keys as ``self.params``) in ``backward``, which
returns the gradient with respect to the layer input. Inputs are batched:
``(batch, features)`` for dense layers, ``(batch, steps, channels)`` for
sequence layers.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ACTIVATIONS",
    "Layer",
    "Dense",
    "Conv1D",
    "BiLSTM",
    "Dropout",
    "Flatten",
    "layer_from_dict",
    "lstm_sequence",
    "bilstm_forward",
]


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (f(z), f'(z) expressed through a = f(z) and z)
ACTIVATIONS = {
    "identity": (lambda z: z, lambda a, z: np.ones_like(z)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a, z: (z > 0).astype(z.dtype)),
    "sigmoid": (_sigmoid, lambda a, z: a * (1.0 - a)),
    "tanh": (np.tanh, lambda a, z: 1.0 - a * a),
}


def _glorot(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def build(self, input_shape, rng, dtype) -> tuple:
        return input_shape

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"type": self.kind}


class Dense(Layer):
    kind = "dense"

    def __init__(self, units: int, activation: str = "identity"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.units = int(units)
        self.activation = activation

    def build(self, input_shape, rng, dtype):
        if len(input_shape) != 1:
            raise ValueError(f"dense layer needs flat input, got shape {input_shape}; add a flatten layer")
        d = input_shape[0]
        self.params = {
            "W": _glorot(rng, d, self.units, (d, self.units), dtype),
            "b": np.zeros(self.units, dtype=dtype),
        }
        return (self.units,)

    def forward(self, x, training=False, rng=None):
        f, _ = ACTIVATIONS[self.activation]
        self._x = x
        self._z = x @ self.params["W"] + self.params["b"]
        self._a = f(self._z)
        return self._a

    def backward(self, grad):
        _, df = ACTIVATIONS[self.activation]
        dz = grad * df(self._a, self._z)
        self.grads = {"W": self._x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T

    def to_dict(self):
        return {"type": self.kind, "units": self.units, "activation": self.activation}


class Conv1D(Layer):
    """Valid (unpadded), stride-one convolution along the step axis."""

    kind = "conv1d"

    def __init__(self, filters: int, kernel_size: int, activation: str = "relu"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)
        self.activation = activation

    def build(self, input_shape, rng, dtype):
        if len(input_shape) != 2:
            raise ValueError(f"conv1d needs (steps, channels) input, got {input_shape}")
        steps, channels = input_shape
        k = self.kernel_size
        if k > steps:
            raise ValueError(f"kernel size {k} exceeds sequence length {steps}")
        self.params = {
            "W": _glorot(rng, k * channels, k * self.filters, (k, channels, self.filters), dtype),
            "b": np.zeros(self.filters, dtype=dtype),
        }
        return (steps - k + 1, self.filters)

    def forward(self, x, training=False, rng=None):
        f, _ = ACTIVATIONS[self.activation]
        k = self.kernel_size
        W = self.params["W"]
        # (B, T', C, k) -> (B, T', k, C) -> (B, T', k*C)
        cols = sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2)
        self._in_shape = x.shape
        self._cols = cols.reshape(x.shape[0], -1, k * x.shape[2])
        self._z = self._cols @ W.reshape(-1, self.filters) + self.params["b"]
        self._a = f(self._z)
        return self._a

    def backward(self, grad):
        _, df = ACTIVATIONS[self.activation]
        k = self.kernel_size
        W = self.params["W"]
        dz = grad * df(self._a, self._z)
        B, T, C = self._in_shape
        dW = np.einsum("btk,btf->kf", self._cols, dz).reshape(W.shape)
        self.grads = {"W": dW, "b": dz.sum(axis=(0, 1))}
        dcols = (dz @ W.reshape(-1, self.filters).T).reshape(B, -1, k, C)
        dx = np.zeros(self._in_shape, dtype=dz.dtype)
        t_out = dcols.shape[1]
        for j in range(k):
            dx[:, j : j + t_out] += dcols[:, :, j]
        return dx

    def to_dict(self):
        return {
            "type": self.kind,
            "filters": self.filters,
            "kernel_size": self.kernel_size,
            "activation": self.activation,
        }


def lstm_sequence(x, Wx, Wh, b):
    """Run one LSTM direction over ``x`` (B, T, C); gates ordered i, f, g, o.

    Returns the hidden sequence (B, T, H) and a cache for :func:`_lstm_backward`.
    """
    B, T, _ = x.shape
    H = Wh.shape[0]
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    hs = np.empty((B, T, H), dtype=x.dtype)
    cache = []
    xw = x @ Wx + b
    for t in range(T):
        z = xw[:, t] + h @ Wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((i, f, g, o, c_prev, h_prev, tc))
    return hs, cache


def _lstm_backward(x, dhs, Wx, Wh, cache):
    B, T, _ = x.shape
    H = Wh.shape[0]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H, dtype=x.dtype)
    dx = np.empty_like(x)
    dh_next = np.zeros((B, H), dtype=x.dtype)
    dc_next = np.zeros((B, H), dtype=x.dtype)
    for t in range(T - 1, -1, -1):
        i, f, g, o, c_prev, h_prev, tc = cache[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = np.concatenate(
            [dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f), dc * i * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        dWx += x[:, t].T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ Wx.T
        dh_next = dz @ Wh.T
        dc_next = dc * f
    return dx, dWx, dWh, db


def bilstm_forward(params: dict, x):
    """Average of forward-in-time and backward-in-time hidden sequences.

    ``params`` holds ``Wx_f, Wh_f, b_f`` and ``Wx_b, Wh_b, b_b``; for shared
    weights pass the same arrays under both suffixes.
    """
    x = np.asarray(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    hf, _ = lstm_sequence(x, params["Wx_f"], params["Wh_f"], params["b_f"])
    hb, _ = lstm_sequence(x[:, ::-1], params["Wx_b"], params["Wh_b"], params["b_b"])
    out = 0.5 * (hf + hb[:, ::-1])
    return out[0] if squeeze else out


class BiLSTM(Layer):
    kind = "bilstm"

    def __init__(self, hidden_units: int, shared: bool = False):
        super().__init__()
        self.hidden_units = int(hidden_units)
        self.shared = bool(shared)

    def build(self, input_shape, rng, dtype):
        if len(input_shape) != 2:
            raise ValueError(f"bilstm needs (steps, channels) input, got {input_shape}")
        steps, C = input_shape
        H = self.hidden_units
        suffixes = ("f",) if self.shared else ("f", "b")
        self.params = {}
        for s in suffixes:
            self.params[f"Wx_{s}"] = _glorot(rng, C, 4 * H, (C, 4 * H), dtype)
            self.params[f"Wh_{s}"] = _glorot(rng, H, 4 * H, (H, 4 * H), dtype)
            self.params[f"b_{s}"] = np.zeros(4 * H, dtype=dtype)
        return (steps, H)

    def _direction_params(self, s):
        s = "f" if self.shared else s
        return self.params[f"Wx_{s}"], self.params[f"Wh_{s}"], self.params[f"b_{s}"]

    def forward(self, x, training=False, rng=None):
        self._x = x
        hf, self._cf = lstm_sequence(x, *self._direction_params("f"))
        hb, self._cb = lstm_sequence(x[:, ::-1], *self._direction_params("b"))
        return 0.5 * (hf + hb[:, ::-1])

    def backward(self, grad):
        x = self._x
        half = 0.5 * grad
        Wx_f, Wh_f, _ = self._direction_params("f")
        Wx_b, Wh_b, _ = self._direction_params("b")
        dx_f, dWx_f, dWh_f, db_f = _lstm_backward(x, half, Wx_f, Wh_f, self._cf)
        dx_b, dWx_b, dWh_b, db_b = _lstm_backward(
            np.ascontiguousarray(x[:, ::-1]), np.ascontiguousarray(half[:, ::-1]), Wx_b, Wh_b, self._cb
        )
        if self.shared:
            self.grads = {"Wx_f": dWx_f + dWx_b, "Wh_f": dWh_f + dWh_b, "b_f": db_f + db_b}
        else:
            self.grads = {
                "Wx_f": dWx_f, "Wh_f": dWh_f, "b_f": db_f,
                "Wx_b": dWx_b, "Wh_b": dWh_b, "b_b": db_b,
            }
        return dx_f + dx_b[:, ::-1]

    def to_dict(self):
        return {"type": self.kind, "hidden_units": self.hidden_units, "shared": self.shared}


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1/(1-rate)`` during training."""

    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = float(rate)

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs a random generator")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask

    def to_dict(self):
        return {"type": self.kind, "rate": self.rate}


class Flatten(Layer):
    kind = "flatten"

    def build(self, input_shape, rng, dtype):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


_KINDS = {cls.kind: cls for cls in (Dense, Conv1D, BiLSTM, Dropout, Flatten)}


def layer_from_dict(doc: dict) -> Layer:
    doc = dict(doc)
    kind = doc.pop("type")
    if kind not in _KINDS:
        raise ValueError(f"unknown layer type {kind!r}")
    return _KINDS[kind](**doc)
