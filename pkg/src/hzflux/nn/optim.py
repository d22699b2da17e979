"""Adam and the minibatch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from hzflux.nn.net import Net

logger = logging.getLogger(__name__)

__all__ = ["AdamState", "adam_step", "TrainingError", "TrainResult", "train", "canonical_order"]


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {p.shape}")
        m = b1 * state.m.get(k, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(k, 0.0) + (1.0 - b2) * (g * g)
        new_params[k] = p - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, replace(state, step=t, m=new_m, v=new_v)


@dataclass
class TrainResult:
    net: Net
    train_rmse: list[float]
    val_rmse: list[float]
    best_epoch: int
    epochs_run: int


def canonical_order(X, y) -> np.ndarray:
    """Row order determined by content alone, so permuted inputs train identically."""
    X2 = X.reshape(X.shape[0], -1)
    keys = [y] + [X2[:, j] for j in range(X2.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def train(
    net: Net,
    X,
    y,
    batch_size: int = 1024,
    epochs: int = 200,
    learning_rate: float = 1e-3,
    seed: int = 0,
    X_val=None,
    y_val=None,
    patience: int | None = 20,
) -> TrainResult:
    """Minibatch Adam on mean squared error.

    Rows are put in a content-defined order, then shuffled each epoch with a
    generator seeded by ``seed`` (which also drives dropout). The recorded
    training RMSE is accumulated over the epoch's minibatches in training
    mode. With validation data, the parameters from the best validation epoch
    are restored and training stops after ``patience`` epochs without
    improvement.
    """
    X = np.asarray(X, dtype=net.dtype)
    y = np.asarray(y, dtype=net.dtype).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("training data is empty")
    if X.shape[0] != y.size:
        raise ValueError("X and y lengths differ")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    rng = np.random.default_rng(seed)
    state = AdamState(learning_rate=learning_rate)
    params = net.copy_parameters()
    has_val = X_val is not None and y_val is not None and len(y_val) > 0
    best = (np.inf, 0, params)
    train_hist, val_hist = [], []
    n = X.shape[0]
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(n)
        sse = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            loss, grads = net.loss_and_grads(X[idx], y[idx], training=True, rng=rng)
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch} (non-finite loss)")
            sse += 2.0 * loss * idx.size
            params, state = adam_step(params, grads, state)
            net.set_parameters(params)
        rmse = float(np.sqrt(sse / n))
        train_hist.append(rmse)
        if has_val:
            pred = net.predict(X_val)
            vr = float(np.sqrt(np.mean((pred - np.asarray(y_val).reshape(-1)) ** 2)))
            val_hist.append(vr)
            if vr < best[0]:
                best = (vr, epoch, net.copy_parameters())
            elif patience is not None and epoch - best[1] >= patience:
                break
    epochs_run = len(train_hist)
    if has_val and epochs_run:
        net.set_parameters(best[2])
        best_epoch = best[1]
    else:
        best_epoch = epochs_run
    logger.debug("trained %d epochs, best %d", epochs_run, best_epoch)
    return TrainResult(net, train_hist, val_hist, best_epoch, epochs_run)
