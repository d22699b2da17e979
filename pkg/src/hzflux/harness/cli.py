"""Command-line entry point.

Stages read and write plain files so each can be rerun on its own:
``simulate`` writes the simulation CSV, ``corrupt`` writes a noisy (and
optionally filtered) copy, ``train`` writes a model JSON, ``evaluate`` writes
predictions, ``importance`` writes ALE importances, ``report`` rebuilds the
summary tables of a finished run and ``run`` does everything.

Exit codes: 0 success, 1 runtime or cell failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from hzflux.data import add_noise, contiguous_segments, make_split, read_sim_csv, write_sim_csv
from hzflux.features import feature_keys
from hzflux.harness.config import SCENARIOS, ConfigError, load_config
from hzflux.harness.experiment import (
    HarnessError,
    fit_model,
    prepare_data,
    run_experiment,
    snapshot_profiles,
    snapshot_times,
    split_plan,
    write_jaccard_csv,
    write_profiles,
    write_summary_csv,
)
from hzflux.hydro import generate_forcing, read_forcing_csv, simulate, write_forcing_csv
from hzflux.interpret import ale_importance, ale_table, write_importance_csv
from hzflux.metrics import stratified
from hzflux.models import regressor_from_dict
from hzflux.smoothing import make_filter, smooth_by_segments

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _config(args):
    return load_config(args.config, preset=getattr(args, "preset", None))


def _labels(cfg, n_times):
    if n_times != cfg.n_steps:
        raise ConfigError(f"series has {n_times} steps but simulation.n_steps is {cfg.n_steps}")
    return make_split(n_times, split_plan(cfg)).labels()


def cmd_simulate(args) -> int:
    cfg = _config(args)
    forcing = read_forcing_csv(cfg.forcing_csv) if cfg.forcing_csv else generate_forcing(cfg.forcing, cfg.n_steps)
    sim = simulate(cfg.column, forcing, cfg.sensors, snapshot_times=snapshot_times(cfg.snapshot_times, len(forcing)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sim_csv(out, sim.flux, sim.temps)
    if args.forcing_out:
        write_forcing_csv(args.forcing_out, forcing)
    if cfg.snapshot_times:
        write_profiles(out.parent, snapshot_profiles(sim, cfg.snapshot_times))
    return EXIT_OK


def cmd_corrupt(args) -> int:
    flux, field = read_sim_csv(args.sim)
    field = add_noise(field, args.snr, args.seed)
    if args.filter:
        if args.window is None:
            raise ConfigError("--window is required with --filter")
        if args.config is None:
            raise ConfigError("--config is required with --filter (it defines the split segments)")
        cfg = _config(args)
        segments = contiguous_segments(_labels(cfg, field.n_times))
        field = smooth_by_segments(field, make_filter(args.filter, args.window), segments)
    write_sim_csv(args.out, flux, field)
    return EXIT_OK


def _prepared(cfg, sim_path):
    flux, field = read_sim_csv(sim_path)
    return prepare_data(flux, field, _labels(cfg, field.n_times), cfg.lag_min, cfg.lag_max)


def cmd_train(args) -> int:
    cfg = _config(args)
    spec = next((m for m in cfg.models if m.name == args.model), None)
    if spec is None:
        raise ConfigError(f"model {args.model!r} not in config (have {[m.name for m in cfg.models]})")
    data = _prepared(cfg, args.sim)
    reg, grid = fit_model(spec, args.scenario, data, args.seed, cfg.nn_dtype)
    doc = {"regressor": reg.to_dict(), "grid": grid.table}
    Path(args.out).write_text(json.dumps(doc))
    return EXIT_OK


def _load_regressor(path):
    return regressor_from_dict(json.loads(Path(path).read_text())["regressor"])


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    data = _prepared(cfg, args.sim)
    reg = _load_regressor(args.model)
    X, y = data.X[data.test], data.y[data.test]
    pred = reg.predict(X)
    times = data.matrix.row_times[data.test]
    lines = ["time_index,obs_flux,pred_flux"] + [f"{t},{o:.10g},{p:.10g}" for t, o, p in zip(times, y, pred)]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(json.dumps(stratified(pred, y).to_dict(), indent=1))
    return EXIT_OK


def cmd_importance(args) -> int:
    cfg = _config(args)
    data = _prepared(cfg, args.sim)
    reg = _load_regressor(args.model)
    X = data.X[data.test][: cfg.ale_rows]
    curves = ale_table(reg.predict, X, n_bins=cfg.ale_bins)
    imp = np.array([0.0 if c is None else ale_importance(c) for c in curves])
    write_importance_csv(args.out, feature_keys(cfg.sensors, cfg.lag_min, cfg.lag_max), imp)
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    report = json.loads((run_dir / "report.json").read_text())
    write_summary_csv(run_dir / "summary.csv", report)
    for cond, entry in report["jaccard"].items():
        write_jaccard_csv(run_dir / f"jaccard_{cond}.csv", entry)
    print((run_dir / "summary.csv").read_text(), end="")
    for model, rows in report["ordering"].items():
        for snr, row in rows.items():
            print(f"ordering {model} snr={snr}: {row}")
    if report["failed"]:
        print(f"{len(report['failed'])} failed cells")
        return EXIT_FAILED
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out = args.output_dir or cfg.output_dir
    if out is None:
        raise ConfigError("output_dir missing: set it in the config or pass --output-dir")
    result = run_experiment(cfg, out, workers=args.workers)
    for key, reason in result.report["failed"].items():
        print(f"FAILED {key}: {reason}", file=sys.stderr)
    print(f"report written to {Path(out) / 'report.json'}")
    return result.exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hzflux", description="Streambed flux inference experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, preset=True):
        sp.add_argument("--config", required=True, help="YAML experiment config")
        if preset:
            sp.add_argument("--preset", choices=("desk", "full"), default=None)
        return sp

    s = with_config(sub.add_parser("simulate", help="run the column model and write the simulation CSV"))
    s.add_argument("--out", required=True)
    s.add_argument("--forcing-out", default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("corrupt", help="add measurement noise, optionally smooth per split segment")
    s.add_argument("--sim", required=True)
    s.add_argument("--snr", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--filter", default=None, help="window kind, e.g. Hanning")
    s.add_argument("--window", type=int, default=None, help="window length N")
    s.add_argument("--config", default=None, help="config supplying the split (needed with --filter)")
    s.add_argument("--preset", choices=("desk", "full"), default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_corrupt)

    s = with_config(sub.add_parser("train", help="fit one model on the training rows of a simulation CSV"))
    s.add_argument("--sim", required=True)
    s.add_argument("--model", required=True, help="model name from the config")
    s.add_argument("--scenario", choices=SCENARIOS, default="noise_free")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = with_config(sub.add_parser("evaluate", help="predict test rows and print stratified metrics"))
    s.add_argument("--sim", required=True)
    s.add_argument("--model", required=True, help="model JSON written by train")
    s.add_argument("--out", required=True, help="predictions CSV")
    s.set_defaults(func=cmd_evaluate)

    s = with_config(sub.add_parser("importance", help="ALE importance of every feature on test rows"))
    s.add_argument("--sim", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("report", help="rebuild summary tables from a run directory")
    s.add_argument("--run-dir", required=True)
    s.set_defaults(func=cmd_report)

    s = with_config(sub.add_parser("run", help="full pipeline over the configured grid"))
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--output-dir", default=None)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HarnessError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
