import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hzflux.nn import (
    AdamState,
    BiLSTM,
    Dense,
    Dropout,
    Net,
    TrainingError,
    adam_step,
    bilstm,
    bilstm_forward,
    cnn,
    load_net,
    mlp,
    net_from_dict,
    net_to_dict,
    save_net,
    train,
)
from hzflux.nn.layers import Conv1D, Flatten

from _oracles import max_rel_error, toy_net


@pytest.mark.parametrize("arch", ["mlp", "cnn", "bilstm"])
def test_gradients_match_central_differences(arch):
    worst = 0.0
    for draw in range(20):
        net, shape = toy_net(arch, draw)
        rng = np.random.default_rng(100 + draw)
        x = rng.normal(size=shape)
        y = rng.normal(size=shape[0])
        worst = max(worst, max_rel_error(net, x, y))
    assert worst < 1e-4


def test_shared_bilstm_gradients():
    net = Net((4, 2), [BiLSTM(3, shared=True), Flatten(), Dense(1)], seed=3)
    rng = np.random.default_rng(0)
    assert max_rel_error(net, rng.normal(size=(2, 4, 2)), rng.normal(size=2)) < 1e-4


def test_zero_weights_give_zero_prediction():
    net = Net((4,), [Dense(3, "tanh"), Dense(1, "tanh")], seed=0)
    net.set_parameters({k: np.zeros_like(v) for k, v in net.parameters().items()})
    assert np.all(net.predict(np.ones((5, 4))) == 0.0)


def test_conv_output_length():
    layer = Conv1D(7, 4)
    out = layer.build((13, 12), np.random.default_rng(0), np.float64)
    assert out == (10, 7)
    x = np.random.default_rng(1).normal(size=(2, 13, 12))
    assert layer.forward(x).shape == (2, 10, 7)


def test_dense_affine_and_hand_gradient():
    net = Net((3,), [Dense(1)], seed=0)
    w = np.array([[0.5], [-1.0], [2.0]])
    b = np.array([0.25])
    net.set_parameters({"0.W": w, "0.b": b})
    x = np.array([[1.0, 2.0, 3.0]])
    pred = net.predict(x)
    assert pred[0] == pytest.approx(0.5 - 2.0 + 6.0 + 0.25)
    y = np.array([1.0])
    _, grads = net.loss_and_grads(x, y)
    np.testing.assert_allclose(grads["0.W"][:, 0], (pred[0] - y[0]) * x[0])
    np.testing.assert_allclose(grads["0.b"], [pred[0] - y[0]])


def test_zero_residual_zero_gradients():
    net, shape = toy_net("cnn", 0)
    x = np.random.default_rng(0).normal(size=shape)
    _, grads = net.loss_and_grads(x, net.predict(x))
    assert all(np.all(g == 0) for g in grads.values())


def test_input_shape_mismatch():
    with pytest.raises(ValueError):
        mlp(5).predict(np.zeros((2, 4)))


def test_bilstm_zero_weights():
    params = {k: np.zeros(s) for k, s in [("Wx_f", (3, 8)), ("Wh_f", (2, 8)), ("b_f", (8,))]}
    params.update({k.replace("_f", "_b"): v for k, v in params.items()})
    h = bilstm_forward(params, np.random.default_rng(0).normal(size=(4, 6, 3)))
    assert h.shape == (4, 6, 2) and np.all(h == 0)


def test_bilstm_palindrome_with_shared_weights():
    rng = np.random.default_rng(2)
    p = {"Wx_f": rng.normal(size=(2, 12)), "Wh_f": rng.normal(size=(3, 12)), "b_f": rng.normal(size=12)}
    p.update({"Wx_b": p["Wx_f"], "Wh_b": p["Wh_f"], "b_b": p["b_f"]})
    half = rng.normal(size=(1, 3, 2))
    x = np.concatenate([half, half[:, ::-1]], axis=1)
    h = bilstm_forward(p, x)
    np.testing.assert_allclose(h, h[:, ::-1], atol=1e-12)


def test_bilstm_single_step_directions_agree():
    rng = np.random.default_rng(3)
    p = {"Wx_f": rng.normal(size=(2, 8)), "Wh_f": rng.normal(size=(2, 8)), "b_f": rng.normal(size=8)}
    p.update({"Wx_b": p["Wx_f"], "Wh_b": p["Wh_f"], "b_b": p["b_f"]})
    only_fwd = dict(p)
    x = rng.normal(size=(3, 1, 2))
    np.testing.assert_allclose(bilstm_forward(p, x), bilstm_forward(only_fwd, x))


def test_dropout_expectation():
    layer = Dropout(0.5)
    layer.build((50,), None, np.float64)
    x = np.linspace(0.5, 1.5, 50)[None, :]
    rng = np.random.default_rng(0)
    draws = np.stack([layer.forward(x, training=True, rng=rng)[0] for _ in range(10_000)])
    assert np.max(np.abs(draws.mean(axis=0) / x[0] - 1)) < 0.05
    assert abs(draws.mean() / x.mean() - 1) < 0.02
    np.testing.assert_array_equal(layer.forward(x, training=False), x)


def test_adam_first_step_is_signed_learning_rate():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.3, -5.0, 1e-3])}
    new, state = adam_step(p, g, AdamState(learning_rate=0.01))
    np.testing.assert_allclose(new["w"] - p["w"], -0.01 * np.sign(g["w"]), rtol=1e-4)
    assert state.step == 1


def test_adam_zero_gradient_and_purity():
    p = {"w": np.array([1.0, 2.0])}
    g = {"w": np.zeros(2)}
    state = AdamState()
    for _ in range(5):
        p2, state = adam_step(p, g, state)
        np.testing.assert_array_equal(p2["w"], p["w"])
    a = adam_step(p, {"w": np.array([1.0, -1.0])}, state)
    b = adam_step(p, {"w": np.array([1.0, -1.0])}, state)
    np.testing.assert_array_equal(a[0]["w"], b[0]["w"])
    assert a[1].step == b[1].step


def test_train_linear_fit():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(200, 1))
    y = 2 * x[:, 0] + 1
    net = Net((1,), [Dense(1)], seed=0)
    res = train(net, x, y, batch_size=32, epochs=500, learning_rate=0.05, seed=0, patience=None)
    assert res.train_rmse[-1] < 1e-3


def test_zero_epochs_leaves_net_unchanged():
    net = mlp(3, seed=1)
    before = net.copy_parameters()
    res = train(net, np.ones((4, 3)), np.ones(4), epochs=0)
    assert res.epochs_run == 0
    for k, v in net.parameters().items():
        np.testing.assert_array_equal(v, before[k])


@pytest.mark.slow
def test_mlp_fits_smooth_function():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(3000, 2))
    y = np.sin(2 * x[:, 0]) + 0.5 * x[:, 1] ** 2
    net = mlp(2, hidden=(60, 40), dropout=0.0, seed=0)
    train(net, x[:2500], y[:2500], batch_size=64, epochs=150, learning_rate=3e-3, seed=0,
          X_val=x[2500:2750], y_val=y[2500:2750])
    pred = net.predict(x[2750:])
    obs = y[2750:]
    r2 = 1 - np.sum((pred - obs) ** 2) / np.sum((obs - obs.mean()) ** 2)
    assert r2 > 0.95


def test_training_is_deterministic_and_order_invariant():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(64, 4))
    y = x @ np.array([1.0, -1.0, 0.5, 0.0])
    a = train(mlp(4, hidden=(8,), seed=2), x, y, batch_size=16, epochs=5, seed=9)
    b = train(mlp(4, hidden=(8,), seed=2), x, y, batch_size=16, epochs=5, seed=9)
    perm = rng.permutation(64)
    c = train(mlp(4, hidden=(8,), seed=2), x[perm], y[perm], batch_size=16, epochs=5, seed=9)
    assert a.train_rmse == b.train_rmse == c.train_rmse
    for k, v in a.net.parameters().items():
        np.testing.assert_array_equal(v, b.net.parameters()[k])
        np.testing.assert_array_equal(v, c.net.parameters()[k])


def test_divergence_raises_with_epoch():
    net = Net((1,), [Dense(1)], seed=0)
    x = np.array([[1.0], [2.0]])
    with pytest.raises(TrainingError, match="epoch 1"):
        train(net, x, np.array([np.inf, 1.0]), epochs=3)


def test_early_stopping_restores_best():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(100, 3))
    y = x.sum(axis=1)
    net = mlp(3, hidden=(6,), dropout=0.0, seed=0)
    res = train(net, x[:80], y[:80], batch_size=16, epochs=40, learning_rate=1e-2, seed=0,
                X_val=x[80:], y_val=y[80:], patience=3)
    best = min(res.val_rmse)
    pred = net.predict(x[80:])
    assert np.sqrt(np.mean((pred - y[80:]) ** 2)) == pytest.approx(best)
    assert res.val_rmse[res.best_epoch - 1] == best


@pytest.mark.parametrize("arch", ["mlp", "cnn", "bilstm"])
def test_serialization_round_trip(arch, tmp_path):
    net, shape = toy_net(arch, 4)
    path = tmp_path / "net.json"
    save_net(net, path)
    back = load_net(path)
    x = np.random.default_rng(0).normal(size=shape)
    np.testing.assert_array_equal(net.predict(x), back.predict(x))
    assert net_to_dict(back) == net_to_dict(net)


def test_bad_document_rejected():
    doc = net_to_dict(mlp(2))
    doc["version"] = 99
    with pytest.raises(ValueError):
        net_from_dict(doc)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.9))
def test_dropout_inactive_at_inference(seed, rate):
    net = Net((4,), [Dense(5, "relu"), Dropout(rate), Dense(1)], seed=seed % 1000)
    x = np.random.default_rng(seed).normal(size=(3, 4))
    np.testing.assert_array_equal(net.predict(x), net.predict(x))
