"""Time-series containers, measurement-noise injection and the alternating split.

Depths are positive downward from the streambed surface. Flux is positive
upward (groundwater discharging to the river).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "TemperatureField",
    "FluxSeries",
    "SplitPlan",
    "SplitIndices",
    "PAPER_WINDOWS",
    "PAPER_LENGTH",
    "add_noise",
    "make_split",
    "merge_train_validation",
    "scale_plan",
    "contiguous_segments",
    "read_sim_csv",
    "write_sim_csv",
]

# Six alternating training windows for a 110,000-step record, half-open.
PAPER_WINDOWS: tuple[tuple[int, int], ...] = (
    (500, 12500),
    (19000, 25000),
    (33000, 45000),
    (52000, 70000),
    (75000, 90000),
    (97000, 110000),
)
PAPER_LENGTH = 110_000


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TemperatureField:
    """Temperatures sampled at a fixed cadence, ``values[t, k]`` at ``depths_m[k]``."""

    dt_s: float
    depths_m: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        depths = _readonly(self.depths_m)
        values = _readonly(self.values)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D (times x depths), got shape {values.shape}")
        if depths.ndim != 1 or depths.size != values.shape[1]:
            raise ValueError(
                f"{depths.size} depths do not match {values.shape[1]} value columns"
            )
        if depths.size > 1 and np.any(np.diff(depths) <= 0):
            raise ValueError("depths must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("temperature field contains non-finite values")
        if not self.dt_s > 0:
            raise ValueError("dt_s must be positive")
        object.__setattr__(self, "depths_m", depths)
        object.__setattr__(self, "values", values)

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    def depth_index(self, depth: float) -> int:
        hits = np.flatnonzero(np.isclose(self.depths_m, depth, rtol=0.0, atol=1e-9))
        if hits.size == 0:
            raise ValueError(f"depth {depth} m not in field depths {self.depths_m.tolist()}")
        return int(hits[0])

    def column(self, depth: float) -> np.ndarray:
        return self.values[:, self.depth_index(depth)]

    def with_values(self, values) -> "TemperatureField":
        return TemperatureField(self.dt_s, self.depths_m, values)


@dataclass(frozen=True)
class FluxSeries:
    dt_s: float
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 1:
            raise ValueError("flux values must be 1-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("flux series contains non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class SplitPlan:
    """Training windows as half-open ``[start, end)`` ranges.

    The trailing ``validation_fraction`` of every window is held out for
    hyperparameter tuning; everything outside the windows is test data.
    """

    train_windows: tuple[tuple[int, int], ...] = PAPER_WINDOWS
    validation_fraction: float = 0.2

    def __post_init__(self):
        windows = tuple((int(a), int(b)) for a, b in self.train_windows)
        for a, b in windows:
            if a >= b or a < 0:
                raise ValueError(f"invalid window [{a}, {b})")
        for (a0, b0), (a1, b1) in zip(windows, windows[1:]):
            if a1 < b0:
                raise ValueError(f"windows [{a0}, {b0}) and [{a1}, {b1}) overlap or are unsorted")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        object.__setattr__(self, "train_windows", windows)

    def validate_for(self, n_times: int) -> None:
        for a, b in self.train_windows:
            if b > n_times:
                raise ValueError(f"window [{a}, {b}) exceeds series length {n_times}")


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    n_times: int = field(default=0)

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            object.__setattr__(self, name, _readonly(getattr(self, name), dtype=np.int64))

    def labels(self) -> np.ndarray:
        """Per-time label array: 0 train, 1 validation, 2 test."""
        lab = np.full(self.n_times, -1, dtype=np.int8)
        lab[self.train] = 0
        lab[self.validation] = 1
        lab[self.test] = 2
        return lab


def add_noise(field: TemperatureField, snr: float | None, seed: int) -> TemperatureField:
    """Superimpose zero-mean Gaussian error with variance ``var(field) / snr``.

    One variance is computed jointly over all depths and times. ``snr=None``
    or ``inf`` disables the noise and returns the input unchanged.
    """
    if snr is None or np.isinf(snr):
        return field
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    var = float(np.var(field.values))
    if not var > 0:
        raise ValueError("cannot scale noise to a zero-variance field")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, np.sqrt(var / snr), size=field.values.shape)
    return field.with_values(field.values + noise)


def make_split(n_times: int, plan: SplitPlan) -> SplitIndices:
    plan.validate_for(n_times)
    in_window = np.zeros(n_times, dtype=bool)
    is_val = np.zeros(n_times, dtype=bool)
    for a, b in plan.train_windows:
        in_window[a:b] = True
        n_val = int(round((b - a) * plan.validation_fraction))
        if n_val:
            is_val[b - n_val : b] = True
    idx = np.arange(n_times)
    return SplitIndices(
        train=idx[in_window & ~is_val],
        validation=idx[is_val],
        test=idx[~in_window],
        n_times=n_times,
    )


def merge_train_validation(split: SplitIndices) -> SplitIndices:
    merged = np.union1d(split.train, split.validation)
    return SplitIndices(merged, np.array([], dtype=np.int64), split.test, split.n_times)


def scale_plan(plan: SplitPlan, n_times: int, reference_length: int = PAPER_LENGTH) -> SplitPlan:
    """Rescale window bounds proportionally from ``reference_length`` to ``n_times``."""
    f = n_times / reference_length
    windows = tuple((int(round(a * f)), min(n_times, int(round(b * f)))) for a, b in plan.train_windows)
    return SplitPlan(windows, plan.validation_fraction)


def contiguous_segments(labels: Sequence[int]) -> list[tuple[int, int]]:
    """Half-open runs of equal label, in order, covering the whole array."""
    lab = np.asarray(labels)
    if lab.size == 0:
        return []
    cuts = np.flatnonzero(lab[1:] != lab[:-1]) + 1
    starts = np.r_[0, cuts]
    ends = np.r_[cuts, lab.size]
    return [(int(a), int(b)) for a, b in zip(starts, ends)]


def write_sim_csv(path, flux: FluxSeries, temps: TemperatureField) -> None:
    """Write ``time_s,flux_m_s,temp_<depth>...`` with depths to 3 decimals."""
    if len(flux) != temps.n_times:
        raise ValueError("flux and temperature lengths differ")
    header = ["time_s", "flux_m_s"] + [f"temp_{d:.3f}" for d in temps.depths_m]
    t = np.arange(temps.n_times) * temps.dt_s
    table = np.column_stack([t, flux.values, temps.values])
    np.savetxt(Path(path), table, delimiter=",", header=",".join(header), comments="", fmt="%.10g")


def read_sim_csv(path) -> tuple[FluxSeries, TemperatureField]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    if header[:2] != ["time_s", "flux_m_s"] or not all(h.startswith("temp_") for h in header[2:]):
        raise ValueError(f"{path}: unexpected header {header}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    depths = np.array([float(h[len("temp_"):]) for h in header[2:]])
    t = table[:, 0]
    dt = float(t[1] - t[0]) if t.size > 1 else 300.0
    return FluxSeries(dt, table[:, 1]), TemperatureField(dt, depths, table[:, 2:])
