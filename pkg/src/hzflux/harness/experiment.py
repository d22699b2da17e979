"""The experiment grid: simulate, corrupt, filter, featurize, train, evaluate, interpret, report.

A cell is one (model, condition, seed) triple, where a condition is the
noise-free record, the record at one SNR without filtering, or the record at
one SNR smoothed by one window kind. Cells only read immutable shared inputs
and derive every random stream from their own key, so they run in any order
or in parallel and removing one never changes another.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from hzflux.data import (
    PAPER_LENGTH,
    SplitPlan,
    TemperatureField,
    add_noise,
    contiguous_segments,
    make_split,
    scale_plan,
    write_sim_csv,
)
from hzflux.features import FeatureMatrix, align_targets, build_features, feature_keys, leak_free_rows
from hzflux.harness.config import PROFILE_HALF_WIDTH, ExperimentConfig, ModelSpec
from hzflux.hydro import SimOutput, generate_forcing, read_forcing_csv, simulate, write_forcing_csv
from hzflux.interpret import ale_importance, ale_table, jaccard_topk, pool_importance, write_importance_csv, write_pooled_csv
from hzflux.metrics import EvalReport, rmse, stratified, summarize_seeds
from hzflux.models import make_regressor
from hzflux.smoothing import WindowKind, make_filter, select_window_length, smooth_by_segments

__all__ = [
    "SCHEMA_VERSION",
    "HarnessError",
    "Condition",
    "GridResult",
    "conditions",
    "cell_key",
    "noise_seed",
    "split_plan",
    "prepare_data",
    "Prepared",
    "audit_leakage",
    "grid_search",
    "fit_model",
    "tune_filters",
    "ProfileSet",
    "snapshot_times",
    "snapshot_profiles",
    "write_profiles",
    "run_experiment",
    "RunResult",
]

SCHEMA_VERSION = 1
PROFILE_STRIDE = 10
POOL_GROUPS = ("kind", "depth", "lag")

logger = logging.getLogger(__name__)


class HarnessError(RuntimeError):
    """A pipeline stage could not produce a result."""


@dataclass(frozen=True)
class Condition:
    """Data condition of a cell: noise-free, noisy, or noisy then filtered."""

    snr: float | None
    kind: WindowKind | None

    @property
    def scenario(self) -> str:
        if self.snr is None:
            return "noise_free"
        return "noisy" if self.kind is None else "filtered"

    @property
    def name(self) -> str:
        if self.snr is None:
            return "noise_free"
        return f"snr{self.snr:g}_{'none' if self.kind is None else self.kind.value}"


def conditions(cfg: ExperimentConfig) -> list[Condition]:
    out = [Condition(None, None)] if cfg.noise_free else []
    for snr in cfg.snr_levels:
        if cfg.unfiltered:
            out.append(Condition(snr, None))
        out.extend(Condition(snr, k) for k in cfg.filter_kinds)
    return out


def cell_key(model: str, cond: Condition, seed: int) -> str:
    return f"{model}__{cond.name}__s{seed}"


def noise_seed(offset: int, seed: int, snr: float) -> int:
    """Noise stream for one (seed, SNR); shared by every model and filter at that pair."""
    ss = np.random.SeedSequence([int(offset), int(seed), int(round(float(snr) * 1000))])
    return int(ss.generate_state(1)[0])


def split_plan(cfg: ExperimentConfig) -> SplitPlan:
    if cfg.train_windows is not None:
        return SplitPlan(cfg.train_windows, cfg.validation_fraction)
    return scale_plan(SplitPlan(validation_fraction=cfg.validation_fraction), cfg.n_steps, PAPER_LENGTH)


# ---------------------------------------------------------------- data


@dataclass(frozen=True)
class Prepared:
    matrix: FeatureMatrix
    X: np.ndarray
    y: np.ndarray
    train: np.ndarray
    validation: np.ndarray
    fit: np.ndarray
    test: np.ndarray


def audit_leakage(matrix: FeatureMatrix, labels: np.ndarray, fit_rows: np.ndarray, test_rows: np.ndarray) -> None:
    """Fail unless every kept row's lag window stays on one side of the train/test divide."""
    windows = np.lib.stride_tricks.sliding_window_view(labels, matrix.n_lags)[matrix.row_times + matrix.lag_min]
    for rows, allowed, name in ((fit_rows, (0, 1), "fit"), (test_rows, (2,), "test")):
        bad = rows & ~np.isin(windows, allowed).all(axis=1)
        if bad.any():
            t = int(matrix.row_times[np.argmax(bad)])
            raise HarnessError(f"leak audit: {name} row at time {t} has a lag window outside its split")
    if np.any(fit_rows & test_rows):
        raise HarnessError("leak audit: a row is used for both fitting and testing")


def prepare_data(flux, field: TemperatureField, labels: np.ndarray, lag_min: int, lag_max: int) -> Prepared:
    matrix = build_features(field, lag_min, lag_max)
    X, y = align_targets(flux, matrix)
    train = leak_free_rows(matrix, labels, 0)
    val = leak_free_rows(matrix, labels, 1)
    fit = leak_free_rows(matrix, labels, [0, 1])
    test = leak_free_rows(matrix, labels, 2)
    audit_leakage(matrix, labels, fit, test)
    return Prepared(matrix, X, y, train, val, fit, test)


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class GridResult:
    best_index: int
    best_params: dict
    best_epoch: int | None
    table: list[dict]


def grid_search(family: str, points: Sequence[dict], X_tr, y_tr, X_val, y_val, seed: int = 0, n_lags: int = 13, dtype="float64") -> GridResult:
    """Fit each point on the training rows and keep the lowest validation RMSE.

    Ties go to the earlier point. A point that raises is recorded with its
    reason; if every point fails a ``HarnessError`` lists them all.
    """
    if not points:
        raise HarnessError("empty hyperparameter grid")
    table = []
    best = None
    for i, point in enumerate(points):
        row = {"params": dict(point), "val_rmse": None, "best_epoch": None, "error": None}
        try:
            reg = make_regressor(family, point, seed, n_lags, dtype)
            info = reg.fit(X_tr, y_tr, X_val, y_val)
            score = rmse(reg.predict(X_val), y_val)
            if not math.isfinite(score):
                raise HarnessError("non-finite validation RMSE")
            row["val_rmse"] = score
            row["best_epoch"] = info.get("best_epoch")
            if best is None or score < table[best]["val_rmse"]:
                best = i
        except Exception as exc:  # noqa: BLE001 - recorded per point
            row["error"] = f"{type(exc).__name__}: {exc}"
        table.append(row)
    if best is None:
        reasons = "; ".join(f"point {i}: {r['error']}" for i, r in enumerate(table))
        raise HarnessError(f"every grid point failed ({reasons})")
    return GridResult(best, dict(points[best]), table[best]["best_epoch"], table)


def fit_model(spec: ModelSpec, scenario: str, data: Prepared, seed: int, dtype: str):
    """Grid search on train/validation, then refit the winner on train plus validation.

    Networks refit for the best validation epoch count. A single-point tree
    grid has nothing to choose, so it is fitted on the merged rows directly.
    """
    n_lags = data.matrix.n_lags
    points = spec.grid_points(scenario)
    X, y = data.X, data.y
    if spec.family == "gbt" and len(points) == 1:
        grid = GridResult(0, dict(points[0]), None, [{"params": dict(points[0]), "val_rmse": None, "best_epoch": None, "error": None}])
    else:
        if not data.validation.any():
            raise HarnessError("grid search needs validation rows")
        grid = grid_search(spec.family, points, X[data.train], y[data.train], X[data.validation], y[data.validation], seed, n_lags, dtype)
    reg = make_regressor(spec.family, grid.best_params, seed, n_lags, dtype)
    epochs = None if grid.best_epoch is None else max(1, int(grid.best_epoch))
    reg.fit(X[data.fit], y[data.fit], epochs=epochs)
    return reg, grid


# ---------------------------------------------------------------- shared state


@dataclass(frozen=True)
class Shared:
    cfg: ExperimentConfig
    sim: SimOutput
    labels: np.ndarray
    segments: tuple[tuple[int, int], ...]
    windows: dict


_SHARED: Shared | None = None


def _init_worker(shared: Shared) -> None:
    global _SHARED
    _SHARED = shared


def _map(fn, tasks: list, shared: Shared, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        _init_worker(shared)
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(shared,)) as pool:
        return list(pool.map(fn, tasks))


def _condition_field(shared: Shared, cond: Condition, seed: int, window: int | None) -> TemperatureField:
    cfg = shared.cfg
    field = shared.sim.temps
    if cond.snr is None:
        return field
    field = add_noise(field, cond.snr, noise_seed(cfg.noise_seed_offset, seed, cond.snr))
    if cond.kind is not None:
        field = smooth_by_segments(field, make_filter(cond.kind, window), shared.segments)
    return field


def _window_key(kind: WindowKind, snr: float, model: str | None) -> str:
    return f"{kind.value}@snr{snr:g}" + (f"@{model}" if model else "")


# ---------------------------------------------------------------- filter tuning


def _tune_task(task) -> dict:
    kind_value, snr, model_name = task
    shared = _SHARED
    cfg = shared.cfg
    kind = WindowKind(kind_value)
    noisy = add_noise(shared.sim.temps, snr, noise_seed(cfg.tuning_seed, 0, snr))
    if model_name is None:
        family, params = "gbt", cfg.tuning_proxy
    else:
        spec = next(m for m in cfg.models if m.name == model_name)
        family, params = spec.family, spec.grid_points("filtered")[0]

    def objective(N: int) -> float:
        smoothed = smooth_by_segments(noisy, make_filter(kind, N), shared.segments)
        data = prepare_data(shared.sim.flux, smoothed, shared.labels, cfg.lag_min, cfg.lag_max)
        reg = make_regressor(family, params, cfg.tuning_seed, data.matrix.n_lags, cfg.nn_dtype)
        X, y = data.X, data.y
        reg.fit(X[data.train], y[data.train], X[data.validation], y[data.validation])
        return rmse(reg.predict(X[data.validation]), y[data.validation])

    best, scores = select_window_length(cfg.window_lengths, objective)
    return {
        "key": _window_key(kind, snr, model_name),
        "kind": kind.value,
        "snr": snr,
        "model": model_name,
        "chosen_window": int(best),
        "validation_rmse": {str(n): float(scores[n]) for n in cfg.window_lengths},
    }


def tune_filters(shared: Shared, workers: int = 1) -> list[dict]:
    """Choose a window length per (filter, SNR), or per (filter, SNR, model).

    Each candidate smooths an independent tuning realization of the noise,
    fits on training rows and scores validation rows; test rows are never read.
    """
    cfg = shared.cfg
    models = [None] if cfg.tuning_scope == "filter_snr" else [m.name for m in cfg.models]
    tasks = [(k.value, snr, m) for snr in cfg.snr_levels for k in cfg.filter_kinds for m in models]
    return _map(_tune_task, tasks, shared, workers)


# ---------------------------------------------------------------- cells


def _ale_rows(n: int, limit: int) -> np.ndarray:
    if n <= limit:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, limit).round().astype(int))


def _cell_task(task) -> dict:
    model_name, cond, seed = task
    shared = _SHARED
    cfg = shared.cfg
    spec = next(m for m in cfg.models if m.name == model_name)
    key = cell_key(model_name, cond, seed)
    out = {"key": key, "model": model_name, "family": spec.family, "condition": cond.name, "seed": seed, "status": "ok"}
    try:
        window = None
        if cond.kind is not None:
            scope_model = model_name if cfg.tuning_scope == "filter_snr_model" else None
            window = shared.windows[_window_key(cond.kind, cond.snr, scope_model)]
        out["window"] = window
        field = _condition_field(shared, cond, seed, window)
        data = prepare_data(shared.sim.flux, field, shared.labels, cfg.lag_min, cfg.lag_max)
        if not data.test.any():
            raise HarnessError("no leak-free test rows")
        reg, grid = fit_model(spec, cond.scenario, data, seed, cfg.nn_dtype)
        X_test, y_test = data.X[data.test], data.y[data.test]
        pred = reg.predict(X_test)
        if not np.all(np.isfinite(pred)):
            raise HarnessError("non-finite predictions")
        out["metrics"] = stratified(pred, y_test).to_dict()
        out["grid"] = grid.table
        out["chosen_params"] = grid.best_params
        out["time_index"] = data.matrix.row_times[data.test].tolist()
        out["obs"] = y_test.tolist()
        out["pred"] = pred.tolist()
        ale_X = X_test[_ale_rows(X_test.shape[0], cfg.ale_rows)]
        curves = ale_table(reg.predict, ale_X, n_bins=cfg.ale_bins)
        out["ale_importance"] = [0.0 if c is None else float(ale_importance(c)) for c in curves]
        out["degenerate_features"] = [i for i, c in enumerate(curves) if c is None]
        out["gain_importance"] = reg.intrinsic_importance().tolist() if spec.family == "gbt" else None
    except Exception as exc:  # noqa: BLE001 - a failed cell is reported, the run continues
        logger.warning("cell %s failed: %s", key, exc)
        out = {key_: out[key_] for key_ in ("key", "model", "family", "condition", "seed")}
        out["status"] = "failed"
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class ProfileSet:
    time: int
    offsets: np.ndarray
    depths_m: np.ndarray
    profiles: np.ndarray
    flux_times: np.ndarray
    flux: np.ndarray


def snapshot_times(times: Sequence[int], n_steps: int, half_width: int = PROFILE_HALF_WIDTH, stride: int = PROFILE_STRIDE) -> list[int]:
    """All steps at which full profiles are needed around ``times``."""
    out = set()
    for t in times:
        t = int(t)
        if t - half_width < 0 or t + half_width >= n_steps:
            raise ValueError(f"profile time {t} needs steps {t - half_width}..{t + half_width} inside [0, {n_steps})")
        out.update(range(t - half_width, t + half_width + 1, stride))
    return sorted(out)


def snapshot_profiles(sim: SimOutput, times: Sequence[int], half_width: int = PROFILE_HALF_WIDTH, stride: int = PROFILE_STRIDE) -> list[ProfileSet]:
    """Full-column profiles every ``stride`` steps within ``half_width`` of each time, plus local flux."""
    n = len(sim.flux)
    snaps = dict(sim.full_profile_snapshots)
    needed = snapshot_times(times, n, half_width, stride)
    missing = [s for s in needed if s not in snaps]
    if missing:
        raise ValueError(f"simulation did not record profiles at steps {missing[:5]}")
    out = []
    for t in times:
        offsets = np.arange(-half_width, half_width + 1, stride)
        profiles = np.stack([snaps[t + k] for k in offsets])
        ft = np.arange(t - half_width, t + half_width + 1)
        out.append(ProfileSet(int(t), offsets, np.asarray(sim.cell_depths_m), profiles, ft, sim.flux.values[ft]))
    return out


def write_profiles(directory, sets: Sequence[ProfileSet]) -> list[dict]:
    directory = Path(directory)
    manifest = []
    for s in sets:
        pname = f"profiles_t{s.time}.csv"
        lines = ["depth_m," + ",".join(f"t{s.time + k}" for k in s.offsets)]
        for i, z in enumerate(s.depths_m):
            lines.append(f"{z:.6g}," + ",".join(f"{v:.10g}" for v in s.profiles[:, i]))
        (directory / pname).write_text("\n".join(lines) + "\n")
        fname = f"profile_flux_t{s.time}.csv"
        rows = ["time_index,flux_m_s"] + [f"{t},{q:.10g}" for t, q in zip(s.flux_times, s.flux)]
        (directory / fname).write_text("\n".join(rows) + "\n")
        manifest.append({"time": s.time, "profiles": pname, "flux": fname, "n_profiles": int(s.offsets.size)})
    return manifest


# ---------------------------------------------------------------- report


def _mean_importance(cells: list[dict], field: str) -> list[float] | None:
    rows = [c[field] for c in cells if c["status"] == "ok" and c.get(field) is not None]
    if not rows:
        return None
    return np.mean(np.sort(np.asarray(rows), axis=0), axis=0).tolist()


def _ordering(cfg: ExperimentConfig, summaries: dict) -> dict:
    """Noise-free <= best filtered <= unfiltered noisy, on mean test RMSE per model and SNR."""
    out = {}
    for spec in cfg.models:
        per = summaries.get(spec.name, {})

        def mean_rmse(cond_name):
            s = per.get(cond_name)
            return None if s is None else s["mean"]["rmse"]

        clean = mean_rmse("noise_free")
        rows = {}
        for snr in cfg.snr_levels:
            noisy = mean_rmse(Condition(snr, None).name)
            filtered = {k.value: mean_rmse(Condition(snr, k).name) for k in cfg.filter_kinds}
            filtered = {k: v for k, v in filtered.items() if v is not None}
            best_kind = min(filtered, key=lambda k: (filtered[k], k)) if filtered else None
            best = filtered.get(best_kind)
            holds = None
            if None not in (clean, noisy, best):
                holds = bool(clean <= best <= noisy)
            rows[f"{snr:g}"] = {
                "noise_free_rmse": clean,
                "best_filter": best_kind,
                "best_filtered_rmse": best,
                "unfiltered_rmse": noisy,
                "holds": holds,
            }
        out[spec.name] = rows
    return out


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.10g}"
        return str(v)

    lines = [",".join(header)] + [",".join(fmt(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def write_summary_csv(path, report: dict) -> None:
    """Mean and variance of each statistic over seeds, one row per (model, condition)."""
    stats = ("rmse", "r2", "rmse_normalized", "rmse_upward", "rmse_downward")
    header = ["model", "condition", "snr", "filter", "window", "n_seeds"]
    header += [f"{s}_{a}" for s in stats for a in ("mean", "var")]
    rows = []
    for model, per in report["summaries"].items():
        for cond, s in per.items():
            meta = report["conditions"][cond]
            row = [model, cond, meta["snr"], meta["filter"], s.get("window"), s["n_seeds"]]
            for st in stats:
                row += [s["mean"][st], s["variance"][st]]
            rows.append(row)
    _write_csv(Path(path), header, rows)


def write_jaccard_csv(path, entry: dict) -> None:
    names = entry["models"]
    rows = [[a] + entry["matrix"][i] for i, a in enumerate(names)]
    _write_csv(Path(path), ["model"] + names, rows)


@dataclass
class RunResult:
    report: dict
    output_dir: Path | None
    failed: list[str]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def _dump(report: dict) -> str:
    return json.dumps(report, indent=1, allow_nan=False) + "\n"


def run_experiment(cfg: ExperimentConfig, output_dir=None, workers: int | None = None) -> RunResult:
    """Execute the configured grid and write every artifact.

    The report payload contains no timestamps or paths, so identical
    configurations give byte-identical ``report.json`` files.
    """
    out_dir = Path(output_dir) if output_dir is not None else cfg.output_dir
    workers = cfg.workers if workers is None else int(workers)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    forcing = read_forcing_csv(cfg.forcing_csv) if cfg.forcing_csv else generate_forcing(cfg.forcing, cfg.n_steps)
    if len(forcing) != cfg.n_steps:
        raise HarnessError(f"forcing has {len(forcing)} steps, config says {cfg.n_steps}")
    snaps = snapshot_times(cfg.snapshot_times, cfg.n_steps)
    sim = simulate(cfg.column, forcing, cfg.sensors, snapshot_times=snaps)
    split = make_split(cfg.n_steps, split_plan(cfg))
    labels = split.labels()
    segments = tuple(contiguous_segments(labels))
    logger.info("simulated %d steps; %d train, %d validation, %d test", cfg.n_steps, split.train.size, split.validation.size, split.test.size)

    shared = Shared(cfg, sim, labels, segments, {})
    tuning = tune_filters(shared, workers) if cfg.filter_kinds and cfg.snr_levels else []
    shared = Shared(cfg, sim, labels, segments, {t["key"]: t["chosen_window"] for t in tuning})

    conds = conditions(cfg)
    tasks = [(m.name, c, s) for m in cfg.models for c in conds for s in cfg.seeds]
    logger.info("running %d cells on %d worker(s)", len(tasks), workers)
    cells = _map(_cell_task, tasks, shared, workers)
    failed = [c["key"] for c in cells if c["status"] != "ok"]

    keys = list(feature_keys(cfg.sensors, cfg.lag_min, cfg.lag_max))
    K = cfg.top_k or math.ceil(len(keys) / 3)

    summaries: dict = {}
    importance: dict = {}
    jaccard: dict = {}
    for cond in conds:
        entries = []
        for spec in cfg.models:
            group = [c for c in cells if c["model"] == spec.name and c["condition"] == cond.name]
            ok = [c for c in group if c["status"] == "ok"]
            if ok:
                summary = summarize_seeds([EvalReport(**c["metrics"]) for c in ok]).to_dict()
                summary["seeds"] = [c["seed"] for c in ok]
                summary["window"] = ok[0].get("window")
                summaries.setdefault(spec.name, {})[cond.name] = summary
            ale = _mean_importance(group, "ale_importance")
            gain = _mean_importance(group, "gain_importance")
            block = {}
            if ale is not None:
                block["ale"] = ale
                entries.append((spec.name, ale))
            if gain is not None:
                block["gain"] = gain
                entries.append((f"{spec.name}_gain", gain))
            if block:
                block["pooled"] = {
                    src: {by: {str(getattr(g, "value", g)): v for g, v in pool_importance(keys, vals, by).items()} for by in POOL_GROUPS}
                    for src, vals in block.items()
                    if src in ("ale", "gain")
                }
                importance.setdefault(spec.name, {})[cond.name] = block
        names = [n for n, _ in entries]
        matrix = [[jaccard_topk(a, b, K, keys) for _, b in entries] for _, a in entries]
        jaccard[cond.name] = {"models": names, "K": K, "matrix": matrix}

    report = {
        "schema_version": SCHEMA_VERSION,
        "config_digest": cfg.digest(),
        "preset": cfg.preset,
        "data": {
            "n_steps": cfg.n_steps,
            "train_windows": [list(w) for w in split_plan(cfg).train_windows],
            "n_train": int(split.train.size),
            "n_validation": int(split.validation.size),
            "n_test": int(split.test.size),
            "segments": [list(s) for s in segments],
            "feature_keys": [k.encode() for k in keys],
        },
        "conditions": {c.name: {"snr": c.snr, "filter": None if c.kind is None else c.kind.value, "scenario": c.scenario} for c in conds},
        "filter_tuning": tuning,
        "cells": {c["key"]: {k: v for k, v in c.items() if k not in ("time_index", "obs", "pred", "ale_importance", "gain_importance")} for c in cells},
        "failed": {c["key"]: c["error"] for c in cells if c["status"] != "ok"},
        "summaries": summaries,
        "ordering": _ordering(cfg, summaries),
        "importance": importance,
        "jaccard": jaccard,
        "profiles": [],
    }

    if out_dir is not None:
        write_forcing_csv(out_dir / "forcing.csv", forcing)
        write_sim_csv(out_dir / "sim.csv", sim.flux, sim.temps)
        if cfg.snapshot_times:
            report["profiles"] = write_profiles(out_dir, snapshot_profiles(sim, cfg.snapshot_times))
        for c in cells:
            if c["status"] != "ok":
                continue
            rows = zip(c["time_index"], c["obs"], c["pred"])
            _write_csv(out_dir / f"predictions_{c['key']}.csv", ["time_index", "obs_flux", "pred_flux"], rows)
            write_importance_csv(out_dir / f"importance_{c['key']}.csv", keys, c["ale_importance"])
            if c["gain_importance"] is not None:
                write_importance_csv(out_dir / f"importance_gain_{c['key']}.csv", keys, c["gain_importance"])
        for model, per in importance.items():
            for cond_name, block in per.items():
                for src in ("ale", "gain"):
                    if src in block:
                        for by in POOL_GROUPS:
                            pooled = pool_importance(keys, block[src], by)
                            write_pooled_csv(out_dir / f"pooled_{src}_{by}_{model}__{cond_name}.csv", pooled)
        for cond_name, entry in jaccard.items():
            write_jaccard_csv(out_dir / f"jaccard_{cond_name}.csv", entry)
        if jaccard:
            write_jaccard_csv(out_dir / "jaccard.csv", jaccard[conds[0].name])
        write_summary_csv(out_dir / "summary.csv", report)
        (out_dir / "report.json").write_text(_dump(report))
    return RunResult(report, out_dir, failed)
