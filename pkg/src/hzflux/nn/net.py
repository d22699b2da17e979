"""Sequential network container, standard architectures and serialisation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from hzflux.nn.layers import BiLSTM, Conv1D, Dense, Dropout, Flatten, Layer, layer_from_dict

__all__ = ["Net", "mlp", "cnn", "bilstm", "save_net", "load_net", "net_to_dict", "net_from_dict"]

FORMAT_VERSION = 1


class Net:
    """A stack of layers ending in a single linear output unit.

    ``input_shape`` excludes the batch axis: ``(n_features,)`` for flat input
    or ``(steps, channels)`` for sequence input.
    """

    def __init__(self, input_shape: Sequence[int], layers: Sequence[Layer], seed: int = 0, dtype=np.float64):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng, self.dtype)
        if shape != (1,):
            raise ValueError(f"network must end in a single output unit, got output shape {shape}")

    def spec(self) -> list[dict]:
        return [layer.to_dict() for layer in self.layers]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed ``"<layer index>.<name>"``."""
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        for key, value in params.items():
            i, name = key.split(".", 1)
            target = self.layers[int(i)].params[name]
            if target.shape != value.shape:
                raise ValueError(f"shape mismatch for {key}: {target.shape} vs {value.shape}")
            self.layers[int(i)].params[name] = np.asarray(value, dtype=self.dtype)

    def copy_parameters(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            if x.shape == self.input_shape:
                x = x[None]
            else:
                raise ValueError(f"input shape {x.shape[1:]} does not match network input {self.input_shape}")
        return x

    def forward(self, x, training: bool = False, rng=None) -> np.ndarray:
        """Predictions of shape ``(batch,)``; dropout is active only when training."""
        out = self._check_input(x)
        for layer in self.layers:
            out = layer.forward(out, training=training, rng=rng)
        return out[:, 0]

    def backward(self, grad_pred) -> dict[str, np.ndarray]:
        """Propagate d(loss)/d(prediction) through the cached forward pass."""
        g = np.asarray(grad_pred, dtype=self.dtype).reshape(-1, 1)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def loss_and_grads(self, x, y, training: bool = False, rng=None):
        """Loss ``0.5 * mean((pred - y)**2)`` and its parameter gradients."""
        pred = self.forward(x, training=training, rng=rng)
        y = np.asarray(y, dtype=self.dtype).reshape(-1)
        resid = pred - y
        loss = 0.5 * float(np.mean(resid * resid))
        return loss, self.backward(resid / resid.size)

    def predict(self, x, batch_size: int = 4096) -> np.ndarray:
        x = self._check_input(x)
        return np.concatenate(
            [self.forward(x[i : i + batch_size]) for i in range(0, x.shape[0], batch_size)]
        ) if x.shape[0] else np.empty(0, dtype=self.dtype)


def mlp(n_features: int, hidden=(60, 40), activation="relu", dropout=0.5, seed=0, dtype=np.float64) -> Net:
    layers: list[Layer] = []
    for units in hidden:
        layers.append(Dense(units, activation))
        if dropout:
            layers.append(Dropout(dropout))
    layers.append(Dense(1, "identity"))
    return Net((n_features,), layers, seed, dtype)


def cnn(
    steps: int,
    channels: int,
    filters=(100, 100),
    kernel_sizes=(4, 4),
    conv_activation="relu",
    dense=(40, 40),
    dense_activation="sigmoid",
    dropout=0.5,
    seed=0,
    dtype=np.float64,
) -> Net:
    """Two convolutions, two dense layers and the output unit; no pooling."""
    layers: list[Layer] = [Conv1D(f, k, conv_activation) for f, k in zip(filters, kernel_sizes)]
    layers.append(Flatten())
    for units in dense:
        layers.append(Dense(units, dense_activation))
        if dropout:
            layers.append(Dropout(dropout))
    layers.append(Dense(1, "identity"))
    return Net((steps, channels), layers, seed, dtype)


def bilstm(steps: int, channels: int, hidden_units=35, dropout=0.0, seed=0, dtype=np.float64) -> Net:
    """Bidirectional LSTM whose averaged hidden states feed one linear output."""
    layers: list[Layer] = [BiLSTM(hidden_units), Flatten()]
    if dropout:
        layers.append(Dropout(dropout))
    layers.append(Dense(1, "identity"))
    return Net((steps, channels), layers, seed, dtype)


def net_to_dict(net: Net) -> dict:
    """Spec plus flat row-major parameter arrays with their shapes."""
    return {
        "format": "hzflux.net",
        "version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "dtype": net.dtype.name,
        "seed": net.seed,
        "layers": net.spec(),
        "params": {
            k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in net.parameters().items()
        },
    }


def net_from_dict(doc: dict) -> Net:
    if doc.get("format") != "hzflux.net" or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a version-1 hzflux.net document")
    net = Net(doc["input_shape"], [layer_from_dict(d) for d in doc["layers"]], doc["seed"], doc["dtype"])
    net.set_parameters(
        {k: np.asarray(v["data"], dtype=net.dtype).reshape(v["shape"]) for k, v in doc["params"].items()}
    )
    return net


def save_net(net: Net, path) -> None:
    Path(path).write_text(json.dumps(net_to_dict(net)))


def load_net(path) -> Net:
    return net_from_dict(json.loads(Path(path).read_text()))
