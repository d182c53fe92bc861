import json
import math

import numpy as np
import pytest

from lorenz_stability.errors import InvalidConfig, NumericalDivergence
from lorenz_stability.network import (
    ACTIVATIONS,
    LAYER_DIMS,
    AdamState,
    NetworkParams,
    TrainConfig,
    adam_step,
    backward,
    bce_loss,
    forward,
    init_params,
    load_model,
    one_hot,
    predict,
    predict_from_probs,
    save_model,
    train,
)

from oracles import finite_difference_grads, scalar_adam, straight_line_forward

SMALL = (6, 4, 4, 3, 2)


def random_small(seed):
    rng = np.random.default_rng(seed)
    p = init_params(seed, dims=SMALL)
    for b in p.biases:
        b[:] = rng.normal(0, 0.5, b.shape)
    return p, rng


def rel_err(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-10)


def test_default_architecture():
    p = init_params(0)
    assert p.dims == list(LAYER_DIMS) == [6, 512, 512, 256, 2]
    assert p.activations == ACTIVATIONS == ("tanh", "relu", "relu", "sigmoid")


def test_init_deterministic():
    a, b = init_params(3), init_params(3)
    for x, y in zip(a.arrays(), b.arrays()):
        assert x.tobytes() == y.tobytes()
    c = init_params(4)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_glorot_bounds_and_zero_biases():
    p = init_params(1)
    bound = math.sqrt(6 / 518)
    assert bound == pytest.approx(0.10763, abs=1e-5)
    assert np.abs(p.weights[0]).max() <= bound
    for w, (fi, fo) in zip(p.weights, zip(LAYER_DIMS[:-1], LAYER_DIMS[1:])):
        assert np.abs(w).max() <= math.sqrt(6 / (fi + fo))
    for b in p.biases:
        assert np.all(b == 0)


def test_unknown_activation():
    p = init_params(0, dims=SMALL)
    with pytest.raises(InvalidConfig):
        NetworkParams(p.weights, p.biases, ("tanh", "relu", "relu", "softplus"))


def test_zero_network_outputs_half():
    p = init_params(0)
    for w in p.weights:
        w[:] = 0
    probs = forward(p, np.ones(6))
    np.testing.assert_array_equal(probs, [0.5, 0.5])
    assert predict(p, np.ones((1, 6)))[0] == 0


def test_probs_strictly_inside_unit_interval():
    p = init_params(2)
    X = np.random.default_rng(0).normal(scale=30, size=(200, 6))
    probs = forward(p, X)
    assert probs.shape == (200, 2)
    assert np.all((probs > 0) & (probs < 1))


def test_sigmoid_saturates_without_nan():
    p = init_params(0, dims=SMALL)
    p.weights[-1][:] = 1e4
    out = forward(p, np.full((3, 6), 100.0))
    assert np.all(np.isfinite(out))


def test_forward_matches_straight_line():
    rng = np.random.default_rng(9)
    p = init_params(9, dims=(6, 16, 16, 8, 2))
    for b in p.biases:
        b[:] = rng.normal(size=b.shape)
    for _ in range(5):
        f = rng.normal(size=6)
        np.testing.assert_allclose(forward(p, f), straight_line_forward(p.weights, p.biases, f),
                                   rtol=0, atol=1e-12)


def test_prediction_rule_and_ties():
    probs = np.array([[0.6, 0.4], [0.3, 0.7], [0.5, 0.5]])
    assert predict_from_probs(probs).tolist() == [0, 1, 0]
    # any strictly increasing transform of both outputs keeps the argmax
    assert predict_from_probs(np.log(probs) * 3 + 1).tolist() == [0, 1, 0]


def test_bce_symmetric_point():
    assert bce_loss([0.5, 0.5], [1, 0]) == pytest.approx(math.log(2))
    assert bce_loss([0.5, 0.5], [0, 1]) == pytest.approx(0.69315, abs=1e-5)


def test_bce_near_perfect():
    assert bce_loss([1 - 1e-7, 1e-7], [1, 0]) == pytest.approx(1e-7, rel=1e-3)


def test_bce_hand_value():
    expected = (-math.log(0.8) - math.log(0.7)) / 2
    assert bce_loss([0.8, 0.3], [1, 0]) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.28990, abs=1e-5)


def test_bce_clamps():
    assert math.isfinite(bce_loss([1.0, 0.0], [0, 1]))


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    p, rng = random_small(seed)
    X = rng.normal(size=(8, 6))
    Y = one_hot(rng.integers(0, 2, 8))
    _, grads = backward(p, X, Y)
    fd = finite_difference_grads(lambda: bce_loss(forward(p, X), Y), p.arrays(), h=1e-5)
    for a, n in zip(grads, fd):
        assert a.shape == n.shape
        assert rel_err(a, n).max() < 1e-5


def test_duplicated_sample_same_gradient():
    p, rng = random_small(5)
    x = rng.normal(size=(1, 6))
    y = one_hot([1])
    _, g1 = backward(p, x, y)
    _, g2 = backward(p, np.vstack([x, x]), np.vstack([y, y]))
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-18)


def test_zero_input_kills_first_layer_weight_gradient():
    p = init_params(3, dims=SMALL)
    _, grads = backward(p, np.zeros((1, 6)), one_hot([1]))
    assert np.all(grads[0] == 0)
    assert np.any(grads[-1] != 0)


def test_adam_zero_gradient():
    p = init_params(0, dims=SMALL)
    before = [a.copy() for a in p.arrays()]
    st = AdamState.zeros_like(p)
    adam_step(p, [np.zeros_like(a) for a in p.arrays()], st, TrainConfig())
    assert st.t == 1
    for a, b in zip(p.arrays(), before):
        np.testing.assert_array_equal(a, b)


def test_adam_first_step_is_lr_times_sign():
    p = init_params(0, dims=SMALL)
    before = [a.copy() for a in p.arrays()]
    rng = np.random.default_rng(1)
    grads = [rng.choice([-2.0, 0.5, 3.0], size=a.shape) for a in p.arrays()]
    adam_step(p, grads, AdamState.zeros_like(p), TrainConfig(learning_rate=0.001))
    for a, b, g in zip(p.arrays(), before, grads):
        np.testing.assert_allclose(b - a, 0.001 * np.sign(g), atol=1e-6)


def test_adam_matches_scalar_reimplementation():
    p = init_params(4, dims=SMALL)
    flat0 = np.concatenate([a.ravel() for a in p.arrays()])
    rng = np.random.default_rng(2)
    seq = [[rng.normal(size=a.shape) for a in p.arrays()] for _ in range(3)]
    st = AdamState.zeros_like(p)
    cfg = TrainConfig(learning_rate=0.01)
    for g in seq:
        adam_step(p, g, st, cfg)
    got = np.concatenate([a.ravel() for a in p.arrays()])
    flat_seq = [np.concatenate([x.ravel() for x in g]).tolist() for g in seq]
    want = scalar_adam(flat0.tolist(), flat_seq, lr=0.01)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
    assert st.t == 3


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"batch_size": 0}, {"learning_rate": 0.0}])
def test_train_config_validation(kw):
    with pytest.raises(InvalidConfig):
        TrainConfig(**kw)


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = (np.arange(n) % 2).astype(np.int8)
    centres = np.where(y[:, None] == 1, 2.0, -2.0)
    return centres + rng.normal(scale=0.5, size=(n, 6)), y


def test_training_is_deterministic():
    X, y = blobs(64)
    cfg = TrainConfig(epochs=2, batch_size=16, seed=3)
    a = train(X, y, cfg, params=init_params(3, dims=(6, 8, 8, 4, 2)))
    b = train(X, y, cfg, params=init_params(3, dims=(6, 8, 8, 4, 2)))
    assert a.loss_history == b.loss_history
    for u, v in zip(a.params.arrays(), b.params.arrays()):
        assert u.tobytes() == v.tobytes()


def test_training_fits_separable_blobs():
    X, y = blobs(200)
    res = train(X, y, TrainConfig(epochs=50, batch_size=32, seed=0))
    pred = predict(res.params, X)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    assert tp / (tp + fp) >= 0.99
    assert tp / (tp + fn) >= 0.99
    assert res.loss_history[-1] < res.loss_history[0]


def test_training_divergence_is_reported():
    X, y = blobs(32)
    X[0, 0] = np.nan
    with pytest.raises(NumericalDivergence):
        train(X, y, TrainConfig(epochs=1, batch_size=32), params=init_params(0, dims=SMALL))


def test_model_file_roundtrip(tmp_path):
    p = init_params(5, dims=SMALL)
    cfg = TrainConfig(epochs=3)
    path = save_model(tmp_path / "m.json", p, cfg, normalize=True)
    back, meta = load_model(path)
    for a, b in zip(p.arrays(), back.arrays()):
        assert a.tobytes() == b.tobytes()
    assert meta["layer_dims"] == list(SMALL)
    assert meta["activations"] == list(ACTIVATIONS)
    assert meta["normalize"] is True
    assert TrainConfig(**meta["train_config"]) == cfg
    raw = json.loads(path.read_text())
    assert len(raw["weights"][0]) == 6 and len(raw["weights"][0][0]) == 4
