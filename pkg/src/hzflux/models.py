"""A common fit/predict contract over boosted trees and the three networks.

Every regressor standardizes the target with training statistics, so the
regularization constants keep their meaning whatever the flux magnitude is.
The networks also standardize each input column. Inputs are always flat
feature rows; sequence models reshape them to ``(n_lags, per_step)``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Protocol

import numpy as np

from hzflux.gbt import GbtParams, fit_gbt, gbt_from_dict, gbt_importance, gbt_to_dict, predict_gbt
from hzflux.nn import bilstm, cnn, mlp, net_from_dict, net_to_dict, train

__all__ = [
    "Regressor",
    "Standardizer",
    "GbtRegressor",
    "NetRegressor",
    "FAMILIES",
    "make_regressor",
    "regressor_from_dict",
]

FAMILIES = ("gbt", "mlp", "cnn", "bilstm")

NN_TRAINING_KEYS = ("learning_rate", "batch_size", "epochs", "patience")
NN_ARCH_KEYS = {
    "mlp": ("hidden", "activation", "dropout"),
    "cnn": ("filters", "kernel_sizes", "conv_activation", "dense", "dense_activation", "dropout"),
    "bilstm": ("hidden_units", "dropout"),
}
GBT_KEYS = tuple(f.name for f in fields(GbtParams) if f.name != "seed")


class Regressor(Protocol):
    family: str

    def fit(self, X, y, X_val=None, y_val=None, epochs: int | None = None) -> dict: ...

    def predict(self, X) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, a) -> "Standardizer":
        a = np.asarray(a, dtype=float)
        mean = a.mean(axis=0)
        scale = a.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(np.asarray(mean, dtype=float), np.asarray(scale, dtype=float))

    def transform(self, a):
        return (np.asarray(a, dtype=float) - self.mean) / self.scale

    def inverse(self, a):
        return np.asarray(a, dtype=float) * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": np.ravel(self.mean).tolist(), "scale": np.ravel(self.scale).tolist()}

    @classmethod
    def from_dict(cls, doc, scalar=False) -> "Standardizer":
        m, s = np.asarray(doc["mean"], dtype=float), np.asarray(doc["scale"], dtype=float)
        if scalar:
            m, s = m.reshape(()), s.reshape(())
        return cls(m, s)


def _check_keys(family, params, allowed):
    unknown = set(params) - set(allowed)
    if unknown:
        raise ValueError(f"unknown {family} hyperparameters: {sorted(unknown)}")


class GbtRegressor:
    family = "gbt"

    def __init__(self, params: dict | None = None, seed: int = 0):
        params = dict(params or {})
        _check_keys("gbt", params, GBT_KEYS)
        self.params = GbtParams(**params, seed=int(seed))
        self.model = None
        self.y_scale: Standardizer | None = None

    def fit(self, X, y, X_val=None, y_val=None, epochs=None) -> dict:
        self.y_scale = Standardizer.fit(np.asarray(y, dtype=float))
        self.model = fit_gbt(X, self.y_scale.transform(y), self.params)
        return {}

    def predict(self, X) -> np.ndarray:
        return self.y_scale.inverse(predict_gbt(self.model, X))

    def intrinsic_importance(self) -> np.ndarray:
        return gbt_importance(self.model)

    def to_dict(self) -> dict:
        return {"family": "gbt", "model": gbt_to_dict(self.model), "y_scale": self.y_scale.to_dict()}

    @classmethod
    def from_dict(cls, doc) -> "GbtRegressor":
        model = gbt_from_dict(doc["model"])
        reg = cls({k: getattr(model.params, k) for k in GBT_KEYS}, model.params.seed)
        reg.model = model
        reg.y_scale = Standardizer.from_dict(doc["y_scale"], scalar=True)
        return reg


class NetRegressor:
    def __init__(self, family: str, params: dict | None = None, seed: int = 0, n_lags: int = 13, dtype="float64"):
        if family not in NN_ARCH_KEYS:
            raise ValueError(f"unknown network family {family!r}")
        params = dict(params or {})
        _check_keys(family, params, NN_ARCH_KEYS[family] + NN_TRAINING_KEYS)
        self.family = family
        self.params = params
        self.seed = int(seed)
        self.n_lags = int(n_lags)
        self.dtype = np.dtype(dtype)
        self.net = None
        self.x_scale: Standardizer | None = None
        self.y_scale: Standardizer | None = None

    def _arch(self):
        return {k: v for k, v in self.params.items() if k in NN_ARCH_KEYS[self.family]}

    def _build(self, n_features: int):
        arch = self._arch()
        if self.family == "mlp":
            arch = {**arch, "hidden": tuple(arch.get("hidden", (60, 40)))}
            return mlp(n_features, seed=self.seed, dtype=self.dtype, **arch)
        if n_features % self.n_lags:
            raise ValueError(f"{n_features} columns do not split into {self.n_lags} lag steps")
        per_step = n_features // self.n_lags
        if self.family == "cnn":
            for k in ("filters", "kernel_sizes", "dense"):
                if k in arch:
                    arch[k] = tuple(arch[k])
            return cnn(self.n_lags, per_step, seed=self.seed, dtype=self.dtype, **arch)
        return bilstm(self.n_lags, per_step, seed=self.seed, dtype=self.dtype, **arch)

    def _inputs(self, X):
        Z = self.x_scale.transform(X).astype(self.dtype)
        if self.family == "mlp":
            return Z
        return Z.reshape(Z.shape[0], self.n_lags, -1)

    def fit(self, X, y, X_val=None, y_val=None, epochs: int | None = None) -> dict:
        """Train from a fresh initialization.

        With validation data the best validation epoch is restored; ``epochs``
        overrides the configured budget (used when retraining on the merged
        training and validation rows for the epoch count found earlier).
        """
        X = np.asarray(X, dtype=float)
        self.x_scale = Standardizer.fit(X)
        self.y_scale = Standardizer.fit(np.asarray(y, dtype=float))
        self.net = self._build(X.shape[1])
        p = self.params
        has_val = X_val is not None and len(X_val) > 0
        result = train(
            self.net,
            self._inputs(X),
            self.y_scale.transform(y),
            batch_size=int(p.get("batch_size", 1024)),
            epochs=int(p.get("epochs", 200) if epochs is None else epochs),
            learning_rate=float(p.get("learning_rate", 1e-3)),
            seed=self.seed,
            X_val=self._inputs(X_val) if has_val else None,
            y_val=self.y_scale.transform(y_val) if has_val else None,
            patience=p.get("patience", 20) if has_val else None,
        )
        return {
            "best_epoch": result.best_epoch,
            "epochs_run": result.epochs_run,
            "train_rmse": result.train_rmse,
            "val_rmse": result.val_rmse,
        }

    def predict(self, X) -> np.ndarray:
        return self.y_scale.inverse(self.net.predict(self._inputs(X)).astype(float))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "seed": self.seed,
            "n_lags": self.n_lags,
            "net": net_to_dict(self.net),
            "x_scale": self.x_scale.to_dict(),
            "y_scale": self.y_scale.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc) -> "NetRegressor":
        net = net_from_dict(doc["net"])
        reg = cls(doc["family"], doc["params"], doc["seed"], doc["n_lags"], net.dtype)
        reg.net = net
        reg.x_scale = Standardizer.from_dict(doc["x_scale"])
        reg.y_scale = Standardizer.from_dict(doc["y_scale"], scalar=True)
        return reg


def make_regressor(family: str, params: dict, seed: int, n_lags: int = 13, dtype="float64") -> Regressor:
    if family == "gbt":
        return GbtRegressor(params, seed)
    if family in NN_ARCH_KEYS:
        return NetRegressor(family, params, seed, n_lags, dtype)
    raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def regressor_from_dict(doc: dict) -> Regressor:
    if doc.get("family") == "gbt":
        return GbtRegressor.from_dict(doc)
    return NetRegressor.from_dict(doc)
