"""Lagged temperature and gradient features around each inference time.

Column order is lag-major, then depth, then kind, so a flat row reshapes to
``(n_lags, n_depths * n_kinds)`` with one row per time step; the sequence
models rely on that layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from hzflux.data import FluxSeries, TemperatureField

__all__ = [
    "Kind",
    "FeatureKey",
    "FeatureMatrix",
    "temporal_gradient",
    "spatial_gradient",
    "build_features",
    "feature_keys",
    "align_targets",
    "leak_free_rows",
    "write_feature_csv",
]


class Kind(str, enum.Enum):
    TEMP = "Temp"
    TEMPORAL_GRAD = "TemporalGrad"
    SPATIAL_GRAD = "SpatialGrad"


KIND_ORDER = (Kind.TEMP, Kind.TEMPORAL_GRAD, Kind.SPATIAL_GRAD)


class FeatureKey(NamedTuple):
    kind: Kind
    depth_m: float
    lag_steps: int

    def encode(self) -> str:
        return f"{self.kind.value}@{self.depth_m:.3f}@{self.lag_steps}"

    @classmethod
    def decode(cls, text: str) -> "FeatureKey":
        kind, depth, lag = text.split("@")
        return cls(Kind(kind), float(depth), int(lag))

    def sort_key(self):
        return (self.lag_steps, self.depth_m, KIND_ORDER.index(self.kind))


@dataclass(frozen=True)
class FeatureMatrix:
    keys: tuple[FeatureKey, ...]
    rows: np.ndarray
    row_times: np.ndarray
    dropped_times: np.ndarray
    lag_min: int = -6
    lag_max: int = 6

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.keys):
            raise ValueError("feature rows do not match the key list")
        if self.rows.shape[0] != self.row_times.size:
            raise ValueError("row_times length differs from row count")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("feature rows contain undefined values")

    @property
    def n_lags(self) -> int:
        return self.lag_max - self.lag_min + 1

    def as_sequences(self, rows: np.ndarray | None = None) -> np.ndarray:
        """Reshape flat rows to ``(n, n_lags, features_per_step)``."""
        rows = self.rows if rows is None else rows
        return rows.reshape(rows.shape[0], self.n_lags, -1)

    def subset(self, mask_or_idx) -> "FeatureMatrix":
        return FeatureMatrix(
            self.keys,
            self.rows[mask_or_idx],
            self.row_times[mask_or_idx],
            self.dropped_times,
            self.lag_min,
            self.lag_max,
        )


def temporal_gradient(field: TemperatureField, depth: float) -> np.ndarray:
    """Step-to-step difference ``T[t] - T[t-1]``; zero at the first time."""
    col = field.column(depth)
    out = np.zeros_like(col)
    out[1:] = np.diff(col)
    return out


def spatial_gradient(field: TemperatureField, depth_index: int) -> np.ndarray:
    """Difference to the next shallower sensor; zero for the shallowest one."""
    n = field.depths_m.size
    if not 0 <= depth_index < n:
        raise ValueError(f"depth_index {depth_index} out of range for {n} depths")
    if depth_index == 0:
        return np.zeros(field.n_times)
    return field.values[:, depth_index] - field.values[:, depth_index - 1]


def _kind_series(field: TemperatureField) -> np.ndarray:
    """``(n_times, n_depths, n_kinds)`` array of base series."""
    n_d = field.depths_m.size
    base = np.empty((field.n_times, n_d, len(KIND_ORDER)))
    base[:, :, 0] = field.values
    base[:, :, 1] = 0.0
    base[1:, :, 1] = np.diff(field.values, axis=0)
    base[:, 0, 2] = 0.0
    base[:, 1:, 2] = np.diff(field.values, axis=1)
    return base


def feature_keys(depths_m, lag_min: int = -6, lag_max: int = 6) -> tuple[FeatureKey, ...]:
    """Column keys in layout order: lag, then depth, then kind."""
    return tuple(
        FeatureKey(kind, float(d), int(lag))
        for lag in range(lag_min, lag_max + 1)
        for d in depths_m
        for kind in KIND_ORDER
    )


def build_features(field: TemperatureField, lag_min: int = -6, lag_max: int = 6) -> FeatureMatrix:
    if lag_min > lag_max:
        raise ValueError("lag_min must not exceed lag_max")
    if field.depths_m.size < 2:
        raise ValueError("feature construction needs at least two sensor depths")
    n = field.n_times
    first = max(0, -lag_min)
    stop = n - max(0, lag_max)
    if stop <= first:
        raise ValueError(f"{n} samples cannot cover the lag window [{lag_min}, {lag_max}]")
    base = _kind_series(field)
    lags = np.arange(lag_min, lag_max + 1)
    times = np.arange(first, stop)
    # rows[t, lag, depth, kind]
    stacked = base[times[:, None] + lags[None, :]]
    rows = stacked.reshape(times.size, -1)
    keys = feature_keys(field.depths_m, lag_min, lag_max)
    all_times = np.arange(n)
    dropped = np.setdiff1d(all_times, times)
    return FeatureMatrix(keys, rows, times, dropped, lag_min, lag_max)


def align_targets(flux: FluxSeries, matrix: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Pair each feature row with the flux at its own inference time."""
    if matrix.row_times.size and (matrix.row_times.min() < 0 or matrix.row_times.max() >= len(flux)):
        raise ValueError("flux series does not cover the feature row times")
    return matrix.rows, flux.values[matrix.row_times]


def leak_free_rows(matrix: FeatureMatrix, labels: np.ndarray, label: int | Iterable[int]) -> np.ndarray:
    """Boolean mask of rows whose whole lag window carries ``label``.

    ``label`` may also be a collection of labels, any of which is accepted.
    """
    wanted = np.isin(labels, np.atleast_1d(label))
    # cumulative count lets us test every window in O(1)
    csum = np.r_[0, np.cumsum(wanted)]
    lo = matrix.row_times + matrix.lag_min
    hi = matrix.row_times + matrix.lag_max + 1
    return (csum[hi] - csum[lo]) == (hi - lo)


def write_feature_csv(path, matrix: FeatureMatrix) -> None:
    header = ",".join(["time_index"] + [k.encode() for k in matrix.keys])
    table = np.column_stack([matrix.row_times, matrix.rows])
    fmt = ["%d"] + ["%.10g"] * matrix.rows.shape[1]
    np.savetxt(Path(path), table, delimiter=",", header=header, comments="", fmt=fmt)
