import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclecast import lstm
from cyclecast.datagen import case_preset, generate
from cyclecast.errors import ConfigError, DivergedError, EmptyInputError, ShapeError
from cyclecast.features import apply_scaler, channel_scaler, make_windows
from cyclecast.lstm import Architecture, LstmLayerParams, LstmNetwork, LstmState, TrainConfig


def tiny_net(seed=0, hidden=(4, 3), rates=(0.0, 0.0)):
    net = LstmNetwork.zeros("tiny", hidden, rates)
    net.flat[:] = np.random.default_rng(seed).normal(scale=0.5, size=net.flat.size)
    return net


def scalar_cell(params, x, h_prev, c_prev):
    """Entry-by-entry LSTM step written with python floats only."""
    H = params.hidden_size
    z = list(h_prev) + list(x)

    def affine(W, b, r):
        return sum(W[r][k] * z[k] for k in range(len(z))) + b[r]

    def sig(a):
        return 1.0 / (1.0 + math.exp(-a))

    h, c = [], []
    for r in range(H):
        i = sig(affine(params.W_i, params.b_i, r))
        f = sig(affine(params.W_f, params.b_f, r))
        o = sig(affine(params.W_o, params.b_o, r))
        g = math.tanh(affine(params.W_c, params.b_c, r))
        c.append(f * c_prev[r] + i * g)
        h.append(o * math.tanh(c[-1]))
    return h, c


def case1_scaled(seed, n=120, L=3):
    w = make_windows(generate(case_preset(1, n_cycles=n, seed=seed)), L, 1)
    p = channel_scaler(w)
    return apply_scaler(p, w.sequences()), apply_scaler(p, w.targets)


# -- construction ----------------------------------------------------------------

def test_case1_architecture():
    net = lstm.init_network(Architecture.CASE1, seed=0)
    assert net.hidden_sizes == (64,) and net.dropout_rates == (0.05,)
    assert net.dense_W.shape == (2, 64)
    assert net.layer(0).input_size == 2


def test_stacked_architecture():
    net = lstm.init_network("StackedArch", seed=0)
    assert net.hidden_sizes == (128, 64, 32)
    assert net.dropout_rates == (0.2, 0.2, 0.2)
    assert [l.input_size for l in net.layers] == [2, 128, 64]
    assert net.flat.size == lstm.n_parameters((128, 64, 32))


def test_init_is_deterministic_and_seeded():
    a = lstm.init_network("Case1Arch", 4).flat
    assert a.tobytes() == lstm.init_network("Case1Arch", 4).flat.tobytes()
    assert a.tobytes() != lstm.init_network("Case1Arch", 5).flat.tobytes()


def test_init_scheme():
    net = lstm.init_network("StackedArch", 1)
    for k, layer in enumerate(net.layers):
        limit = math.sqrt(6 / (layer.W_i.shape[1] + layer.hidden_size))
        for W in (layer.W_i, layer.W_f, layer.W_o, layer.W_c):
            assert np.max(np.abs(W)) <= limit
        assert np.all(layer.b_f == 1.0)
        assert not np.any(layer.b_i) and not np.any(layer.b_o) and not np.any(layer.b_c)


def test_bad_dropout_rate():
    with pytest.raises(ConfigError):
        LstmNetwork.zeros("tiny", (3,), (1.0,))


def test_layer_params_shape_invariant():
    W, b = np.zeros((3, 5)), np.zeros(3)
    with pytest.raises(ShapeError):
        LstmLayerParams(W, W, W, np.zeros((3, 6)), b, b, b, b)


# -- cell ------------------------------------------------------------------------

def test_zero_cell_is_zero(rng):
    params = LstmNetwork.zeros("tiny", (5,), (0.0,)).layer(0)
    s = lstm.cell_step(params, rng.normal(size=2), LstmState.zeros(5))
    assert np.all(s.h == 0) and np.all(s.c == 0)


def test_forget_bias_carries_cell(rng):
    net = LstmNetwork.zeros("tiny", (4,), (0.0,))
    W, b = net.stacked(0)
    b[4:8] = 20.0
    v = rng.normal(size=4)
    s = lstm.cell_step(net.layer(0), rng.normal(size=2), LstmState(np.zeros(4), v))
    assert np.max(np.abs(s.c - v)) <= 1e-6


def test_cell_matches_scalar_oracle(rng):
    params = tiny_net(3, hidden=(4,), rates=(0.0,)).layer(0)
    x, h0, c0 = rng.normal(size=2), rng.uniform(-1, 1, 4), rng.normal(size=4)
    s = lstm.cell_step(params, x, LstmState(h0, c0))
    h, c = scalar_cell(params, x, h0, c0)
    assert np.max(np.abs(s.h - h)) <= 1e-12
    assert np.max(np.abs(s.c - c)) <= 1e-12


def test_cell_dimension_mismatch():
    params = LstmNetwork.zeros("tiny", (4,), (0.0,)).layer(0)
    with pytest.raises(ShapeError):
        lstm.cell_step(params, np.zeros(3), LstmState.zeros(4))


def test_forward_matches_cell_loop(rng):
    net = tiny_net(2)
    seq = rng.normal(size=(5, 2))
    layer_in = seq
    for k, params in enumerate(net.layers):
        state = LstmState.zeros(net.hidden_sizes[k])
        outs = []
        for row in layer_in:
            state = lstm.cell_step(params, row, state)
            outs.append(state.h)
        layer_in = np.array(outs)
    expected = np.maximum(net.dense_W @ layer_in[-1] + net.dense_b, 0)
    assert np.max(np.abs(lstm.forward_sequence(net, seq) - expected)) <= 1e-12


@settings(max_examples=30)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 50))
def test_state_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    net = LstmNetwork.zeros("tiny", (6,), (0.0,))
    net.flat[:] = rng.normal(scale=scale, size=net.flat.size)
    params = net.layer(0)
    state = LstmState.zeros(6)
    for _ in range(10):
        x = rng.normal(scale=scale, size=2)
        z = np.concatenate([state.h, x])
        for W, b in ((params.W_i, params.b_i), (params.W_f, params.b_f), (params.W_o, params.b_o)):
            gate = lstm.sigmoid(W @ z + b)
            assert np.all((gate >= 0) & (gate <= 1))
        state = lstm.cell_step(params, x, state)
        assert np.all(np.abs(state.h) <= 1)


def test_sigmoid_extremes():
    assert lstm.sigmoid(np.array([-1e4, 0.0, 1e4])).tolist() == [0.0, 0.5, 1.0]


# -- forward / head --------------------------------------------------------------

def test_empty_sequence_rejected():
    with pytest.raises(EmptyInputError):
        lstm.forward_sequence(tiny_net(), np.zeros((0, 2)))


def test_dropout_zero_train_equals_infer(rng):
    net = tiny_net(1)
    seq = rng.normal(size=(4, 2))
    train_out, _ = lstm.forward_sequence(net, seq, "train", np.random.default_rng(0))
    assert np.array_equal(train_out, lstm.forward_sequence(net, seq, "infer"))


@pytest.mark.parametrize("bias,expected", [((29.0, 5.0), [29.0, 5.0]), ((-1.0, -1.0), [0.0, 0.0])])
def test_dense_bias_only(bias, expected, rng):
    net = lstm.init_network("Case1Arch", 0)
    net.flat[net._dense[0]] = 0.0
    net.flat[net._dense[1]] = bias
    for _ in range(3):
        assert lstm.forward_sequence(net, rng.normal(size=(3, 2)) * 10).tolist() == expected


@given(seed=st.integers(0, 10_000))
def test_relu_output_nonnegative(seed):
    rng = np.random.default_rng(seed)
    net = tiny_net(seed)
    assert np.all(lstm.predict(net, rng.normal(scale=5, size=(8, 3, 2))) >= 0)


def test_inverted_dropout_mean():
    net = LstmNetwork.zeros("tiny", (3,), (0.2,))
    net.flat[:] = np.random.default_rng(8).normal(scale=0.4, size=net.flat.size)
    # large positive dense bias keeps the head in its linear regime
    net.flat[net._dense[1]] = 5.0
    seq = np.random.default_rng(9).normal(size=(4, 2))
    clean = lstm.forward_sequence(net, seq)
    X = np.repeat(seq[None], 10_000, axis=0)
    masks = lstm.dropout_masks(net, X.shape[:2], np.random.default_rng(10))
    noisy, _ = lstm._forward(net, X, masks)
    assert np.all(np.abs(noisy.mean(axis=0) - clean) <= 0.02 * np.abs(clean))
    assert masks[0].mean() == pytest.approx(1.0, abs=0.01)


# -- gradients -------------------------------------------------------------------

def test_gradient_tiny_stack(rng):
    net = tiny_net(4)
    net.flat[net._dense[1]] = 3.0
    rel, _ = lstm.gradient_check(net, rng.normal(size=(4, 2)), [0.2, 0.7], n_samples=net.flat.size)
    assert rel <= 1e-6


def test_gradient_batch_tiny(rng):
    net = tiny_net(6)
    net.flat[net._dense[1]] = 3.0
    rel, _ = lstm.gradient_check(net, rng.normal(size=(5, 3, 2)), rng.uniform(size=(5, 2)), n_samples=80)
    assert rel <= 1e-6


@pytest.mark.parametrize("arch,seed", [("Case1Arch", 0), ("StackedArch", 3)])
def test_gradient_check_architectures(arch, seed, rng):
    net = lstm.init_network(arch, seed)
    rel, _ = lstm.gradient_check(net, rng.uniform(size=(3, 2)), [0.4, 0.6], seed=seed)
    assert rel <= 1e-4


def test_gradient_check_zero_net(rng):
    net = LstmNetwork.zeros("Case1Arch")
    rel, absolute = lstm.gradient_check(net, rng.uniform(size=(3, 2)), [0.4, 0.6])
    assert absolute <= 1e-6


# -- training --------------------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_constant_target_fits(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(20, 3, 2))
    Y = np.tile([0.3, 0.8], (20, 1))
    result = lstm.train(lstm.init_network("Case1Arch", seed), X, Y,
                        TrainConfig(epochs=200, learning_rate=1e-2, seed=seed))
    assert min(result.losses) <= 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_case1_loss_blocks_decrease(seed):
    X, Y = case1_scaled(seed)
    losses = lstm.train(lstm.init_network("Case1Arch", seed), X, Y, TrainConfig(epochs=100, seed=seed)).losses
    blocks = np.asarray(losses).reshape(-1, 50).mean(axis=1)
    assert np.all(np.diff(blocks) <= 0)


def test_training_is_deterministic():
    X, Y = case1_scaled(5, n=40)
    net = lstm.init_network("Case1Arch", 5)
    cfg = TrainConfig(epochs=20, seed=5)
    a, b = lstm.train(net, X, Y, cfg), lstm.train(net, X, Y, cfg)
    assert np.array(a.losses).tobytes() == np.array(b.losses).tobytes()
    assert a.network.flat.tobytes() == b.network.flat.tobytes()


def test_zero_learning_rate_freezes():
    X, Y = case1_scaled(1, n=30)
    net = lstm.init_network("Case1Arch", 1)
    out = lstm.train(net, X, Y, TrainConfig(epochs=15, learning_rate=0.0)).network
    assert out.flat.tobytes() == net.flat.tobytes()


def test_train_does_not_mutate_input():
    X, Y = case1_scaled(1, n=30)
    net = lstm.init_network("Case1Arch", 1)
    before = net.flat.copy()
    lstm.train(net, X, Y, TrainConfig(epochs=3))
    assert np.array_equal(before, net.flat)


def test_divergence_names_epoch():
    X = np.full((4, 3, 2), 1e200)
    Y = np.full((4, 2), 1e200)
    with pytest.raises(DivergedError) as info:
        lstm.train(lstm.init_network("Case1Arch", 0), X, Y, TrainConfig(epochs=5))
    assert info.value.epoch == 1


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=2.0)


def test_target_shape_checked():
    with pytest.raises(ShapeError):
        lstm.train(tiny_net(), np.zeros((4, 3, 2)), np.zeros((4, 3)))


# -- serialization ---------------------------------------------------------------

def test_text_roundtrip():
    net = lstm.init_network("StackedArch", 2)
    back = LstmNetwork.from_text(net.to_text())
    assert back.architecture == Architecture.STACKED
    assert back.hidden_sizes == net.hidden_sizes and back.dropout_rates == net.dropout_rates
    assert back.flat.tobytes() == net.flat.tobytes()


def test_text_order_is_declared():
    net = tiny_net(0, hidden=(2,), rates=(0.0,))
    keys = [line.split("=")[0] for line in net.to_text().splitlines()]
    assert keys[5:] == ["layer0.W_i", "layer0.W_f", "layer0.W_o", "layer0.W_c",
                        "layer0.b_i", "layer0.b_f", "layer0.b_o", "layer0.b_c", "dense.W", "dense.b"]


def test_unknown_format_rejected():
    text = tiny_net().to_text().replace("cyclecast-lstm/1", "other/9")
    with pytest.raises(ConfigError):
        LstmNetwork.from_text(text)


def test_stacked_epoch_cost():
    X, Y = case1_scaled(0)
    net = lstm.init_network("StackedArch", 0)
    start = time.perf_counter()
    lstm.train(net, X, Y, TrainConfig(epochs=5, architecture="StackedArch"))
    assert time.perf_counter() - start < 5.0
