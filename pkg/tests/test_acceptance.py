"""Acceptance checks, one test group per numbered criterion.

Each test records a short ``detail`` property; ``conftest.py`` collects them
and prints one ``PASS``/``FAIL`` line per criterion at the end of the session.
Run on its own with ``python3 tests/test_acceptance.py``.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from _oracles import brute_force_gains, head_for_peclet, max_rel_error, oracle_error, toy_net
from hzflux.data import PAPER_LENGTH, PAPER_WINDOWS, SplitPlan, add_noise, make_split
from hzflux.gbt import GbtParams, fit_gbt, predict_gbt
from hzflux.harness.cli import main as cli_main
from hzflux.harness.config import load_config
from hzflux.harness.experiment import noise_seed, run_experiment
from hzflux.hydro import generate_forcing, simulate, viscosity
from hzflux.interpret import ale_main_effect, jaccard_topk
from hzflux.smoothing import WindowKind, make_filter, smooth_segment, window_coefficients

DESK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk.yaml"


# 1. viscosity


def test_criterion_01_viscosity(record_property):
    mu_20 = viscosity(293.15)
    mu_32 = viscosity(305.0)
    record_property("detail", f"mu(293.15 K)={mu_20:.5g} uP, mu(305 K)={mu_32:.5g} uP")
    assert 0.995e4 <= mu_20 <= 1.010e4
    assert abs(mu_32 / 7.666e3 - 1) <= 1e-3


# 2. simulator against the steady analytic profile


def test_criterion_02_simulator_oracle(record_property):
    t0 = time.perf_counter()
    errors = {}
    heads = {}
    for target in (-9.99, -5.0, -2.0, 2.0, 5.0, 9.99):
        heads[target] = head_for_peclet(target)
        pe, err = oracle_error(0.01, heads[target])
        errors[pe] = err
    refinement = {}
    for target in (-9.99, 5.0):
        coarse = oracle_error(0.01, heads[target])[1]
        fine = oracle_error(0.005, heads[target])[1]
        refinement[target] = (coarse, fine)
    elapsed = time.perf_counter() - t0
    worst_pe, worst = max(errors.items(), key=lambda kv: kv[1])
    ratios = ", ".join(f"Pe {t:g}: {c / f:.2f}" for t, (c, f) in refinement.items())
    record_property(
        "detail",
        f"max error {worst:.4f} C at Pe {worst_pe:.2f} (limit 0.05); "
        f"error by Pe {{{', '.join(f'{p:.2f}: {e:.4f}' for p, e in sorted(errors.items()))}}}; "
        f"refinement ratio {ratios}; {elapsed:.1f} s",
    )
    assert all(abs(pe) <= 10.0 for pe in errors)
    for coarse, fine in refinement.values():
        assert fine < coarse and coarse / fine > 1.8
    assert elapsed < 30
    assert worst < 0.05


# 3. network gradients


@pytest.mark.parametrize("arch", ["mlp", "cnn", "bilstm"])
def test_criterion_03_nn_gradients(arch, record_property):
    worst = 0.0
    for draw in range(20):
        net, shape = toy_net(arch, draw)
        rng = np.random.default_rng(100 + draw)
        x = rng.normal(size=shape)
        y = rng.normal(size=shape[0])
        worst = max(worst, max_rel_error(net, x, y))
    record_property("detail", f"{arch} worst relative error {worst:.1e} over 20 draws")
    assert worst < 1e-4


# 4. boosted trees


def test_criterion_04_gbt_oracle(record_property):
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0.0, 0.0, 2.0, 2.0])
    params = GbtParams(n_estimators=1, learning_rate=1.0, max_depth=1, subsample=1.0, reg_alpha=0.0, reg_lambda=1.0, min_child_weight=0.0)
    model = fit_gbt(X, y, params)
    tree = model.trees[0]
    leaves = sorted(tree.value[tree.feature < 0])
    pred = predict_gbt(model, X)
    expected = np.array([1 / 3, 1 / 3, 5 / 3, 5 / 3])
    ulps = np.abs(pred - expected) / np.spacing(expected)
    assert leaves == [-2 / 3, 2 / 3]
    # 1 + fl(-2/3) is not fl(1/3) in binary; the sum is correctly rounded
    np.testing.assert_array_equal(pred, 1.0 + np.array([-2 / 3, -2 / 3, 2 / 3, 2 / 3]))
    assert ulps.max() <= 1

    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        x = rng.integers(0, 6, size=n).astype(float)
        t = rng.normal(size=n)
        if np.unique(x).size < 2:
            continue
        lam = float(rng.choice([0.0, 1.0, 2.5]))
        gains = brute_force_gains(x, t, lam)
        best_thr = max(gains, key=gains.get)
        m = fit_gbt(x[:, None], t, GbtParams(n_estimators=1, learning_rate=1.0, max_depth=1, subsample=1.0, reg_alpha=0.0, reg_lambda=lam, min_child_weight=0.0))
        root = m.trees[0]
        if gains[best_thr] <= 1e-12:
            continue
        assert root.feature[0] == 0
        chosen = min(gains, key=lambda thr: abs(thr - root.threshold[0]))
        assert abs(chosen - root.threshold[0]) < 1e-9
        assert gains[chosen] == pytest.approx(gains[best_thr], rel=1e-9, abs=1e-12)
        checked += 1
    record_property("detail", f"leaves {[float(v) for v in leaves]}, predictions within {ulps.max():.0f} ulp of 1/3 and 5/3; {checked} brute-force datasets agree")
    assert checked >= 100


# 5. window filters


def test_criterion_05_filter_algebra(record_property):
    worst_sum = 0.0
    for kind in WindowKind:
        for N in range(2, 122, 2):
            c = window_coefficients(kind, N)
            worst_sum = max(worst_sum, abs(c.sum() - 1.0))
            np.testing.assert_array_equal(c, c[::-1])
        out = smooth_segment(np.full(60, 7.5), make_filter(kind, 12))
        np.testing.assert_allclose(out[6:-6], 7.5, rtol=0, atol=1e-12)
    edge = smooth_segment([1, 2, 3, 4, 5], make_filter("Flat", 2))[0]
    x = np.random.default_rng(0).normal(size=100_000)
    ratios = {}
    for kind in WindowKind:
        f = make_filter(kind, 24)
        ratios[kind.value] = (smooth_segment(x, f)[12:-12].var() / x.var()) / np.sum(f.coefficients**2)
    record_property("detail", f"max |sum-1| {worst_sum:.1e}; padded edge {edge:.12g}; variance/sum(c^2) in [{min(ratios.values()):.3f}, {max(ratios.values()):.3f}]")
    assert worst_sum < 1e-12
    assert edge == pytest.approx(1.0, abs=1e-12)
    assert all(abs(r - 1) <= 0.1 for r in ratios.values())


# 6. ALE and Jaccard


def test_criterion_06_ale_oracle(record_property):
    X = np.random.default_rng(0).uniform(0, 1, size=(5000, 2))
    curve = ale_main_effect(lambda Z: 3 * Z[:, 0], X, 0)
    dev = float(np.max(np.abs(curve.accumulated_effects - (3 * curve.bin_edges - 1.5))))
    # half a bin width in x, expressed in output units through the slope
    tol = 3 * 0.5 / curve.n_bins
    ignored = ale_main_effect(lambda Z: 3 * Z[:, 0], X, 1).importance
    a, b = [4, 3, 2, 1], [1, 3, 2, 4]  # top-3 {A,B,C} and {B,C,D}
    jac = (jaccard_topk(a, a, 3), jaccard_topk([1, 1, 0, 0], [0, 0, 1, 1], 2), jaccard_topk(a, b, 3))
    record_property("detail", f"max curve deviation {dev:.3g} (tol {tol:.3g}); ignored importance {ignored:.1e}; jaccard {jac}")
    assert dev <= tol
    assert ignored < 1e-10
    assert jac == (1.0, 0.0, 0.5)


# 7. split protocol


def test_criterion_07_split_protocol(record_property):
    s = make_split(PAPER_LENGTH, SplitPlan())
    n_fit = s.train.size + s.validation.size
    for a, b in PAPER_WINDOWS:
        n_val = round(0.2 * (b - a))
        np.testing.assert_array_equal(s.validation[(s.validation >= a) & (s.validation < b)], np.arange(b - n_val, b))
        np.testing.assert_array_equal(s.train[(s.train >= a) & (s.train < b)], np.arange(a, b - n_val))
    record_property("detail", f"{n_fit} train+validation indices ({n_fit / PAPER_LENGTH:.1%}), {s.validation.size} validation")
    assert n_fit == 76_000


# 8-10. desk preset runs


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_a")
    t0 = time.perf_counter()
    code = cli_main(["run", "--config", str(DESK_CONFIG), "--output-dir", str(out)])
    return {"code": code, "dir": out, "seconds": time.perf_counter() - t0}


@pytest.mark.slow
def test_criterion_08_pipeline_ordering(desk_run, record_property):
    assert desk_run["code"] == 0
    report = json.loads((desk_run["dir"] / "report.json").read_text())
    assert not report["failed"]
    notes = []
    holds = {}
    for model in ("gbt", "mlp"):
        row = report["ordering"][model]["100"]
        holds[model] = row["holds"] and row["noise_free_rmse"] < row["best_filtered_rmse"] < row["unfiltered_rmse"]
        notes.append(
            f"{model} {row['noise_free_rmse']:.3e} <= {row['best_filtered_rmse']:.3e} ({row['best_filter']}) <= {row['unfiltered_rmse']:.3e}"
        )
    r2 = report["summaries"]["gbt"]["noise_free"]["mean"]["r2"]
    n_seeds = {s["n_seeds"] for per in report["summaries"].values() for s in per.values()}
    record_property("detail", "; ".join(notes) + f"; gbt noise-free R2 {r2:.3f}; {desk_run['seconds']:.0f} s")
    assert n_seeds == {3}
    assert all(holds.values())
    assert r2 >= 0.7
    assert desk_run["seconds"] < 600


@pytest.mark.slow
def test_criterion_09_determinism(desk_run, tmp_path, record_property):
    cfg = load_config(DESK_CONFIG)
    run_experiment(cfg, tmp_path)
    first = (desk_run["dir"] / "report.json").read_bytes()
    second = (tmp_path / "report.json").read_bytes()
    cells = sorted(p.name for p in desk_run["dir"].glob("predictions_*.csv"))
    same_cells = all((desk_run["dir"] / n).read_bytes() == (tmp_path / n).read_bytes() for n in cells)
    record_property("detail", f"report.json {len(first)} bytes identical={first == second}; {len(cells)} prediction files identical={same_cells}")
    assert first == second
    assert same_cells


def test_criterion_10_snr_law(record_property):
    cfg = load_config(DESK_CONFIG)
    field = simulate(cfg.column, generate_forcing(cfg.forcing, cfg.n_steps), cfg.sensors).temps
    snr = 100.0
    ratios = []
    for seed in cfg.seeds:
        noisy = add_noise(field, snr, noise_seed(cfg.noise_seed_offset, seed, snr))
        ratios.append(float(np.var(noisy.values - field.values) / np.var(field.values)))
    record_property("detail", f"variance ratio x SNR over {field.values.size} entries: " + ", ".join(f"{r * snr:.4f}" for r in ratios))
    assert all(math.isclose(r * snr, 1.0, rel_tol=0.05) for r in ratios)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
