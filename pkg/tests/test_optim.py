import numpy as np
import pytest

from distana.autograd import Tensor
from distana.optim import Adam, AdamState, adam_step


def test_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0, 3.0])
    state = AdamState.for_params([p])
    adam_step([p], [np.zeros(3)], state)
    np.testing.assert_array_equal(p, [1.0, -2.0, 3.0])
    assert state.step == 1


def test_first_step_moves_by_lr_times_sign():
    # m_hat = g, v_hat = g^2  =>  update = lr * g / (|g| + eps)
    p = np.array([1.0])
    state = AdamState.for_params([p], lr=0.001)
    adam_step([p], [np.array([0.5])], state)
    expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8)
    assert p[0] == pytest.approx(expected, abs=1e-15)
    assert p[0] == pytest.approx(0.999, abs=1e-9)


def test_second_step_against_hand_formula():
    p = np.array([0.0])
    state = AdamState.for_params([p], lr=0.1)
    g1, g2 = 1.0, -3.0
    adam_step([p], [np.array([g1])], state)
    adam_step([p], [np.array([g2])], state)
    m1, v1 = 0.1 * g1, 0.001 * g1**2
    m2, v2 = 0.9 * m1 + 0.1 * g2, 0.999 * v1 + 0.001 * g2**2
    x1 = -0.1 * g1 / (abs(g1) + 1e-8)
    x2 = x1 - 0.1 * (m2 / (1 - 0.9**2)) / (np.sqrt(v2 / (1 - 0.999**2)) + 1e-8)
    assert p[0] == pytest.approx(x2, rel=1e-12)


def test_identical_inputs_give_bitwise_identical_updates():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = a.copy()
    grads = [rng.normal(size=(3, 4)) for _ in range(5)]
    sa, sb = AdamState.for_params([a]), AdamState.for_params([b])
    for g in grads:
        adam_step([a], [g], sa)
        adam_step([b], [g.copy()], sb)
    assert a.tobytes() == b.tobytes()


def test_shape_mismatch_rejected():
    p = np.zeros(3)
    with pytest.raises(ValueError):
        adam_step([p], [np.zeros(4)], AdamState.for_params([p]))


def test_wrapper_uses_tensor_grads_and_zeroes():
    t = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([t], lr=0.01)
    t.grad = np.array([2.0])
    opt.step()
    assert t.data[0] == pytest.approx(0.99)
    opt.zero_grad()
    assert t.grad is None
