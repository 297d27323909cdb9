import numpy as np
import pytest

from gsifn import tensor as T
from gsifn.optim import Adam, AdamState, adam_step


def test_adam_first_two_steps_by_hand():
    p = np.array([1.0])
    state = AdamState()
    adam_step([p], [np.array([0.5])], state, lr=0.1)
    # bias-corrected m = 0.5, v = 0.25, so the step is lr * 0.5 / (0.5 + eps)
    assert p[0] == pytest.approx(0.9, abs=1e-8)
    adam_step([p], [np.array([-0.25])], state, lr=0.1)
    # m = 0.02, v = 3.1225e-4, corrections 0.19 and 1.999e-3
    assert p[0] == pytest.approx(0.8733662987078464, abs=1e-12)
    assert state.step == 2


def test_decoupled_weight_decay():
    p = np.array([1.0])
    adam_step([p], [np.array([0.5])], AdamState(), lr=0.1, weight_decay=0.01)
    assert p[0] == pytest.approx(0.899000002, abs=1e-12)


def test_coupled_weight_decay_enters_gradient():
    p = np.array([2.0])
    state = AdamState()
    adam_step([p], [np.array([0.0])], state, lr=0.1, weight_decay=0.5, decoupled=False)
    # effective gradient 1.0 -> unit normalised step
    assert p[0] == pytest.approx(1.9, abs=1e-7)


@pytest.mark.parametrize("lr", [0.0, -1e-3])
def test_non_positive_lr_rejected(lr):
    with pytest.raises(ValueError, match="learning rate"):
        adam_step([np.ones(2)], [np.ones(2)], AdamState(), lr=lr)


def test_misaligned_shapes_rejected():
    with pytest.raises(ValueError):
        adam_step([np.ones(2)], [np.ones(3)], AdamState(), lr=0.1)
    with pytest.raises(ValueError):
        adam_step([np.ones(2)], [], AdamState(), lr=0.1)


def test_none_gradient_is_zero():
    p = np.array([3.0])
    adam_step([p], [None], AdamState(), lr=0.1)
    assert p[0] == 3.0


def test_frozen_group_is_untouched_and_others_move(f64):
    a, b = T.parameter(np.ones(3)), T.parameter(np.ones(3))
    opt = Adam([{"params": [a], "lr": 0.0}, {"params": [b], "lr": 0.1, "weight_decay": 0.0}])
    before = a.data.copy()
    T.backward(T.sum(T.square(a) + T.square(b)))
    opt.step()
    assert np.array_equal(a.data, before)
    assert np.allclose(b.data, 0.9)
    opt.zero_grad()
    assert a.grad is None and b.grad is None


def test_adam_minimises_quadratic(f64):
    x = T.parameter(np.array([4.0, -3.0]))
    opt = Adam([{"params": [x], "lr": 0.1}])
    for _ in range(500):
        opt.zero_grad()
        T.backward(T.sum(T.square(T.add_const(x, np.array([-1.0, 2.0])))))
        opt.step()
    assert np.allclose(x.data, [1.0, -2.0], atol=1e-3)
