import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distana import autograd as ag
from distana.autograd import Tensor
from distana.gradcheck import finite_difference_check
from distana.models import (
    MODEL_IDS,
    ConvLSTMConfig,
    ConvLSTMNetwork,
    TCNConfig,
    TCNNetwork,
    as_tensors,
    build_network,
    convlstm_param_count,
    network_from_config,
    tcn_forward,
    tcn_param_count,
)
from distana.models.convlstm import convlstm_cell


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


@pytest.mark.parametrize("hidden, expected", [((2, 1), 324), ((8, 1), 2916)])
def test_convlstm_param_counts(hidden, expected):
    assert convlstm_param_count(ConvLSTMConfig(hidden=hidden)) == expected
    net = ConvLSTMNetwork(hidden)
    assert sum(a.size for a in net.init_params(np.random.default_rng(0))) == expected


def test_tcn_param_counts_golden():
    # layout: three layers of (C_out, 3 * C_in, 3, 3) kernels
    assert tcn_param_count(TCNConfig(hidden=2)) == 216
    assert tcn_param_count(TCNConfig(hidden=9)) == 2673
    assert abs(2673 - 2826) / 2826 < 0.10
    assert TCNNetwork(9).n_params() == 2673


def test_tcn_receptive_field_covers_horizon():
    assert TCNConfig().receptive_field >= 14


def test_build_network_names():
    for name in MODEL_IDS:
        net = build_network(name)
        assert net.model_id == name
        assert network_from_config(name, net.config_ints()).n_params() == net.n_params()
    with pytest.raises(ValueError):
        build_network("lstm9")


def _params(net, seed=0, scale=1.0):
    return as_tensors([a * scale for a in net.init_params(np.random.default_rng(seed))], False)


@pytest.mark.parametrize("name", ["convlstm2", "convlstm8"])
def test_convlstm_zero_weights_and_quiescence(name):
    net = build_network(name)
    zero = as_tensors([np.zeros(s.shape) for s in net.param_specs()], False)
    state = net.step(zero, net.initial_state(5, 5), np.ones((5, 5)))
    assert not state.prediction.data.any()
    params = _params(net, seed=3)
    state = net.initial_state(5, 5)
    for _ in range(40):
        state = net.step(params, state, np.zeros((5, 5)))
        assert not state.prediction.data.any()


def test_convlstm_1x1_is_scalar_lstm():
    # a 3x3 kernel on a 1x1 zero-padded field only uses its centre tap
    rng = np.random.default_rng(5)
    w = [rng.normal(size=(1, 2, 3, 3)) for _ in range(4)]
    x, h, c = 0.7, -0.3, 0.2
    h_new, c_new = convlstm_cell(as_tensors(w, False), Tensor([[[x]]]), Tensor([[[h]]]), Tensor([[[c]]]))
    z = [k[0, 0, 1, 1] * x + k[0, 1, 1, 1] * h for k in w]
    i, f, g, o = sig(z[0]), sig(z[1]), math.tanh(z[2]), sig(z[3])
    c_ref = f * c + i * g
    assert c_new.data.item() == pytest.approx(c_ref, abs=1e-14)
    assert h_new.data.item() == pytest.approx(o * math.tanh(c_ref), abs=1e-14)


@pytest.mark.parametrize("hidden", [2, 9])
def test_tcn_zero_window_gives_zero(hidden):
    cfg = TCNConfig(hidden=hidden)
    w = _params(TCNNetwork(hidden))
    assert not tcn_forward(cfg, w, np.zeros((15, 6, 6))).data.any()


def test_tcn_short_window_rejected():
    with pytest.raises(ValueError):
        tcn_forward(TCNConfig(), _params(TCNNetwork(2)), np.zeros((13, 4, 4)))


def test_tcn_impulse_beyond_horizon_has_no_effect():
    cfg, w = TCNConfig(), _params(TCNNetwork(2), seed=1)
    rng = np.random.default_rng(2)
    window = rng.normal(size=(20, 5, 5))
    last = window.shape[0] - 1
    base = tcn_forward(cfg, w, window).data
    far = window.copy()
    far[last - 15] += 10.0
    assert np.array_equal(tcn_forward(cfg, w, far).data, base)
    near = window.copy()
    near[last - 14] += 10.0
    assert not np.array_equal(tcn_forward(cfg, w, near).data, base)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(15, 30))
def test_tcn_causality_property(seed, lag):
    rng = np.random.default_rng(seed)
    cfg, w = TCNConfig(), _params(TCNNetwork(2), seed=seed)
    window = rng.normal(size=(31, 4, 4))
    changed = window.copy()
    changed[30 - lag] = rng.normal(size=(4, 4))
    np.testing.assert_array_equal(tcn_forward(cfg, w, changed).data, tcn_forward(cfg, w, window).data)


def test_tcn_1x1_matches_direct_summation():
    cfg = TCNConfig(hidden=1)
    rng = np.random.default_rng(7)
    w = [rng.normal(size=(1, 3, 3, 3)) for _ in range(3)]
    u = rng.normal(size=20)
    out = tcn_forward(cfg, as_tensors(w, False), u.reshape(20, 1, 1)).data.item()

    taps = [k[0, :, 1, 1] for k in w]

    def layer(seq, a, d, act):
        res = np.zeros_like(seq)
        for t in range(len(seq)):
            for j in range(3):
                if t - j * d >= 0:
                    res[t] += a[j] * seq[t - j * d]
        return np.tanh(res) if act else res

    # the network only looks at the last 15 frames
    seq = u[-15:]
    y = layer(layer(layer(seq, taps[0], 1, True), taps[1], 2, True), taps[2], 4, False)
    assert out == pytest.approx(y[-1], abs=1e-12)


def test_tcn_step_matches_forward():
    net = TCNNetwork(2)
    w = _params(net, seed=4)
    frames = np.random.default_rng(4).normal(size=(18, 4, 4))
    state = net.initial_state(4, 4)
    for f in frames:
        state = net.step(w, state, f)
    ref = tcn_forward(net.config, w, frames)
    np.testing.assert_allclose(state.prediction.data, ref.data, atol=1e-13)


def test_conv_translation_equivariance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 20, 20))
    k = rng.normal(size=(2, 1, 3, 3))
    a = ag.conv2d(x, k).data
    b = ag.conv2d(np.roll(x, 1, axis=2), k).data
    np.testing.assert_allclose(b[:, 2:-2, 3:-2], a[:, 2:-2, 2:-3], atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("name", MODEL_IDS)
def test_one_step_loss_gradient(name, seed):
    # step 1e-4: at 1e-5 float64 roundoff dominates the smallest DISTANA24 components
    net = build_network(name)
    rng = np.random.default_rng(seed)
    params = as_tensors(net.init_params(rng), True)
    frames = rng.uniform(-1, 1, size=(net.context + 1, 4, 4))

    def f():
        return net.teacher_forced_loss(params, frames)

    assert finite_difference_check(f, params, step=1e-4) < 1e-4
