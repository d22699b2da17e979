"""Experiment configuration: YAML loading, validation, presets and defaults.

Resolution order is built-in defaults, then a preset (``full`` or ``desk``),
then the keys present in the file. Unknown keys are rejected with their
dotted path so typos never silently fall back to a default.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from hzflux.data import PAPER_LENGTH, PAPER_WINDOWS
from hzflux.gbt import GbtParams
from hzflux.hydro import ColumnConfig, ForcingSpec
from hzflux.models import FAMILIES, GBT_KEYS, NN_ARCH_KEYS, NN_TRAINING_KEYS
from hzflux.smoothing import WindowKind

__all__ = [
    "ConfigError",
    "SCENARIOS",
    "PRESETS",
    "TUNED_DEFAULTS",
    "ModelSpec",
    "ExperimentConfig",
    "default_config_dict",
    "load_config",
    "config_from_dict",
]

SCENARIOS = ("noise_free", "noisy", "filtered")
PROFILE_HALF_WIDTH = 100


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# Per-scenario hyperparameters, one entry per model family.
TUNED_DEFAULTS: dict[str, dict[str, dict]] = {
    "gbt": {
        "noise_free": dict(n_estimators=150, learning_rate=0.1, max_depth=6, subsample=0.08, reg_alpha=0.1, reg_lambda=1.0, min_child_weight=100.0),
        "noisy": dict(n_estimators=50, learning_rate=0.3, max_depth=4, subsample=0.08, reg_alpha=0.1, reg_lambda=1.0, min_child_weight=100.0),
        "filtered": dict(n_estimators=150, learning_rate=0.1, max_depth=6, subsample=0.08, reg_alpha=0.1, reg_lambda=1.0, min_child_weight=100.0),
    },
    "mlp": {
        "noise_free": dict(hidden=[60, 40], activation="relu", dropout=0.5, learning_rate=1e-3, batch_size=1024, epochs=200, patience=20),
        "noisy": dict(hidden=[60, 40], activation="relu", dropout=0.5, learning_rate=1e-3, batch_size=512, epochs=200, patience=20),
        "filtered": dict(hidden=[60, 40], activation="relu", dropout=0.5, learning_rate=1e-3, batch_size=512, epochs=200, patience=20),
    },
    "cnn": {
        "noise_free": dict(filters=[100, 100], kernel_sizes=[4, 4], conv_activation="relu", dense=[40, 40], dense_activation="sigmoid", dropout=0.5, learning_rate=1e-4, batch_size=512, epochs=200, patience=20),
        "noisy": dict(filters=[150, 150], kernel_sizes=[4, 4], conv_activation="relu", dense=[40, 40], dense_activation="sigmoid", dropout=0.5, learning_rate=1e-4, batch_size=512, epochs=200, patience=20),
        "filtered": dict(filters=[80, 80], kernel_sizes=[3, 3], conv_activation="relu", dense=[25, 25], dense_activation="sigmoid", dropout=0.5, learning_rate=1e-4, batch_size=512, epochs=200, patience=20),
    },
    "bilstm": {
        "noise_free": dict(hidden_units=35, dropout=0.0, learning_rate=8e-4, batch_size=128, epochs=200, patience=20),
        "noisy": dict(hidden_units=45, dropout=0.0, learning_rate=8e-4, batch_size=1024, epochs=200, patience=20),
        "filtered": dict(hidden_units=35, dropout=0.0, learning_rate=8e-4, batch_size=256, epochs=200, patience=20),
    },
}

PROXY_GBT = dict(n_estimators=50, learning_rate=0.3, max_depth=4, subsample=0.08, reg_alpha=0.1, reg_lambda=1.0, min_child_weight=100.0)


def _default_models(families) -> list[dict]:
    return [{"name": f, "family": f} for f in families]


def default_config_dict() -> dict:
    """Defaults of the full preset, in the same shape as a config file."""
    return {
        "output_dir": None,
        "preset": "full",
        "simulation": {
            "n_steps": PAPER_LENGTH,
            "column": {},
            "forcing": {},
            "forcing_csv": None,
            "snapshot_times": [],
        },
        "sensors": [0.005, 0.15, 0.255, 1.995],
        "noise": {"snr": [100.0, 500.0, 1000.0, 2000.0, 4000.0], "noise_free": True, "unfiltered": True, "seed_offset": 1000},
        "filters": {
            "kinds": [k.value for k in WindowKind],
            "window_lengths": [4, 8, 12, 24, 48, 96],
            "tuning": {"scope": "filter_snr", "proxy": dict(PROXY_GBT), "seed": 7919},
        },
        "features": {"lag_min": -6, "lag_max": 6},
        "split": {"train_windows": None, "validation_fraction": 0.2},
        "models": _default_models(FAMILIES),
        "seeds": list(range(10)),
        "interpret": {"ale_bins": 10, "ale_rows": 2000, "top_k": None},
        "runtime": {"workers": 1, "nn_dtype": "float32"},
    }


PRESETS: dict[str, dict] = {
    "full": {},
    "desk": {
        "simulation": {"n_steps": 20_000},
        "noise": {"snr": [100.0]},
        "models": _default_models(("gbt", "mlp")),
        "seeds": [0, 1, 2],
        "interpret": {"ale_rows": 500},
    },
}

# Keys whose value is a free-form mapping checked elsewhere (dataclass fields, hyperparameters).
_OPEN = {("simulation", "column"), ("simulation", "forcing"), ("filters", "tuning", "proxy")}


def _merge(base: dict, over: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = ".".join(path + (str(key),))
        if key not in base and path not in _OPEN:
            raise ConfigError(f"unknown key '{key}' at {where or '<root>'}")
        if isinstance(value, dict) and isinstance(base.get(key), dict) and path + (key,) not in _OPEN:
            out[key] = _merge(base[key], value, path + (key,))
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class ModelSpec:
    name: str
    family: str
    params: dict
    overrides: dict
    grid: dict

    def scenario_params(self, scenario: str) -> dict:
        out = dict(TUNED_DEFAULTS[self.family][scenario])
        out.update(self.params)
        out.update(self.overrides.get(scenario, {}))
        return out

    def grid_points(self, scenario: str) -> list[dict]:
        """Cartesian product of the grid in declaration order, over the scenario base."""
        base = self.scenario_params(scenario)
        if not self.grid:
            return [base]
        keys = list(self.grid)
        return [{**base, **dict(zip(keys, combo))} for combo in itertools.product(*(self.grid[k] for k in keys))]

    def to_dict(self) -> dict:
        return {"name": self.name, "family": self.family, "params": self.params, "overrides": self.overrides, "grid": self.grid}


@dataclass(frozen=True)
class ExperimentConfig:
    output_dir: Path | None
    preset: str
    n_steps: int
    column: ColumnConfig
    forcing: ForcingSpec
    forcing_csv: Path | None
    snapshot_times: tuple[int, ...]
    sensors: tuple[float, ...]
    snr_levels: tuple[float, ...]
    noise_free: bool
    unfiltered: bool
    noise_seed_offset: int
    filter_kinds: tuple[WindowKind, ...]
    window_lengths: tuple[int, ...]
    tuning_scope: str
    tuning_proxy: dict
    tuning_seed: int
    lag_min: int
    lag_max: int
    train_windows: tuple[tuple[int, int], ...] | None
    validation_fraction: float
    models: tuple[ModelSpec, ...]
    seeds: tuple[int, ...]
    ale_bins: int
    ale_rows: int
    top_k: int | None
    workers: int
    nn_dtype: str
    raw: dict

    def digest(self) -> str:
        """Content hash of everything that affects results (not paths or worker count)."""
        doc = copy.deepcopy(self.raw)
        doc.pop("output_dir", None)
        doc["runtime"].pop("workers", None)
        if self.forcing_csv is not None:
            doc["simulation"]["forcing_csv"] = hashlib.sha256(self.forcing_csv.read_bytes()).hexdigest()
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _dataclass_kwargs(cls, doc: dict, where: str, exclude=()) -> dict:
    names = {f.name for f in fields(cls)} - set(exclude)
    for key in doc:
        if key not in names:
            raise ConfigError(f"unknown key '{key}' at {where}.{key}")
    return dict(doc)


def _model_spec(doc, i) -> ModelSpec:
    where = f"models[{i}]"
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a mapping")
    for key in doc:
        if key not in ("name", "family", "params", "overrides", "grid"):
            raise ConfigError(f"unknown key '{key}' at {where}.{key}")
    family = doc.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"{where}.family must be one of {list(FAMILIES)}, got {family!r}")
    allowed = GBT_KEYS if family == "gbt" else NN_ARCH_KEYS[family] + NN_TRAINING_KEYS
    params = dict(doc.get("params") or {})
    overrides = {k: dict(v or {}) for k, v in (doc.get("overrides") or {}).items()}
    grid = dict(doc.get("grid") or {})
    for key in params:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' at {where}.params.{key}")
    for scen, block in overrides.items():
        if scen not in SCENARIOS:
            raise ConfigError(f"unknown key '{scen}' at {where}.overrides.{scen}")
        for key in block:
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' at {where}.overrides.{scen}.{key}")
    for key, values in grid.items():
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' at {where}.grid.{key}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{where}.grid.{key} must be a non-empty list")
    spec = ModelSpec(str(doc.get("name") or family), family, params, overrides, grid)
    if family == "gbt":
        for scen in SCENARIOS:
            for point in spec.grid_points(scen):
                try:
                    GbtParams(**point)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{where}: invalid gbt hyperparameters for {scen}: {exc}") from exc
    return spec


def config_from_dict(doc: dict | None, preset: str | None = None, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a config mapping and fill defaults."""
    doc = dict(doc or {})
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    preset = preset or doc.get("preset") or "full"
    if preset not in PRESETS:
        raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {preset!r}")
    merged = _merge(default_config_dict(), PRESETS[preset])
    merged = _merge(merged, doc)
    merged["preset"] = preset
    base_dir = Path(base_dir or ".")

    sim = merged["simulation"]
    n_steps = sim["n_steps"]
    if not isinstance(n_steps, int) or n_steps < 2:
        raise ConfigError("simulation.n_steps must be an integer >= 2")
    try:
        column = ColumnConfig(**_dataclass_kwargs(ColumnConfig, sim["column"], "simulation.column"))
        forcing = ForcingSpec(**_dataclass_kwargs(ForcingSpec, sim["forcing"], "simulation.forcing"))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"simulation: {exc}") from exc
    forcing_csv = None
    if sim["forcing_csv"] is not None:
        forcing_csv = (base_dir / sim["forcing_csv"]).resolve()
        if not forcing_csv.is_file():
            raise ConfigError(f"simulation.forcing_csv: file not found: {forcing_csv}")
    snaps = tuple(int(t) for t in sim["snapshot_times"])
    for t in snaps:
        if t - PROFILE_HALF_WIDTH < 0 or t + PROFILE_HALF_WIDTH >= n_steps:
            raise ConfigError(f"simulation.snapshot_times: {t} needs {PROFILE_HALF_WIDTH} steps either side within the run")

    sensors = tuple(float(d) for d in merged["sensors"])
    if not sensors:
        raise ConfigError("sensors must not be empty")
    if list(sensors) != sorted(set(sensors)):
        raise ConfigError("sensors must be sorted ascending without duplicates")
    if sensors[0] < 0 or sensors[-1] > column.length_m:
        raise ConfigError(f"sensors must lie within [0, {column.length_m}] m")

    noise = merged["noise"]
    snrs = tuple(float(s) for s in noise["snr"])
    for i, s in enumerate(snrs):
        if not s > 0:
            raise ConfigError(f"noise.snr[{i}] = {s}: SNR must be positive")

    filt = merged["filters"]
    try:
        kinds = tuple(WindowKind(k) for k in filt["kinds"])
    except ValueError as exc:
        raise ConfigError(f"filters.kinds: {exc}") from exc
    lengths = tuple(int(n) for n in filt["window_lengths"])
    if snrs and kinds and not lengths:
        raise ConfigError("filters.window_lengths must not be empty")
    for n in lengths:
        if n < 2 or n % 2:
            raise ConfigError(f"filters.window_lengths: {n} is not an even integer >= 2")
    tuning = filt["tuning"]
    for key in tuning:
        if key not in ("scope", "proxy", "seed"):
            raise ConfigError(f"unknown key '{key}' at filters.tuning.{key}")
    if tuning["scope"] not in ("filter_snr", "filter_snr_model"):
        raise ConfigError("filters.tuning.scope must be 'filter_snr' or 'filter_snr_model'")
    try:
        GbtParams(**tuning["proxy"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"filters.tuning.proxy: {exc}") from exc

    feats = merged["features"]
    if not feats["lag_min"] <= 0 <= feats["lag_max"]:
        raise ConfigError("features: lag_min <= 0 <= lag_max required")

    split = merged["split"]
    windows = None
    if split["train_windows"] is not None:
        try:
            windows = tuple((int(a), int(b)) for a, b in split["train_windows"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("split.train_windows must be a list of [start, end] pairs") from exc
        if any(b > n_steps for _, b in windows):
            raise ConfigError("split.train_windows exceed simulation.n_steps")

    if not merged["models"]:
        raise ConfigError("models must not be empty")
    models = tuple(_model_spec(m, i) for i, m in enumerate(merged["models"]))
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError(f"models: duplicate names {names}")

    seeds = tuple(int(s) for s in merged["seeds"])
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be a non-empty list of distinct integers")

    interp = merged["interpret"]
    runtime = merged["runtime"]
    if int(runtime["workers"]) < 1:
        raise ConfigError("runtime.workers must be >= 1")
    if runtime["nn_dtype"] not in ("float32", "float64"):
        raise ConfigError("runtime.nn_dtype must be float32 or float64")

    out = merged["output_dir"]
    return ExperimentConfig(
        output_dir=(base_dir / out) if out is not None else None,
        preset=preset,
        n_steps=n_steps,
        column=column,
        forcing=forcing,
        forcing_csv=forcing_csv,
        snapshot_times=snaps,
        sensors=sensors,
        snr_levels=snrs,
        noise_free=bool(noise["noise_free"]),
        unfiltered=bool(noise["unfiltered"]),
        noise_seed_offset=int(noise["seed_offset"]),
        filter_kinds=kinds,
        window_lengths=lengths,
        tuning_scope=tuning["scope"],
        tuning_proxy=dict(tuning["proxy"]),
        tuning_seed=int(tuning["seed"]),
        lag_min=int(feats["lag_min"]),
        lag_max=int(feats["lag_max"]),
        train_windows=windows,
        validation_fraction=float(split["validation_fraction"]),
        models=models,
        seeds=seeds,
        ale_bins=int(interp["ale_bins"]),
        ale_rows=int(interp["ale_rows"]),
        top_k=None if interp["top_k"] is None else int(interp["top_k"]),
        workers=int(runtime["workers"]),
        nn_dtype=runtime["nn_dtype"],
        raw=merged,
    )


def load_config(path, preset: str | None = None) -> ExperimentConfig:
    """Read and validate a YAML config; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(doc, preset=preset, base_dir=path.parent)
