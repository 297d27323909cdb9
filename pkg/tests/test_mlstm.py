import math

import numpy as np
import pytest

from gsifn import tensor as T
from gsifn.cost import mlstm_params
from gsifn.mlstm import (
    MLSTMCell,
    MLSTMConfig,
    MLSTMOverflowError,
    MLSTMStack,
    MLSTMState,
    mlstm_block,
    mlstm_forward,
    mlstm_parallel,
    mlstm_step,
)
from gsifn.tensor import Tensor

from gradcheck import check_grads


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def reference_recurrence(x: np.ndarray, cell: MLSTMCell) -> np.ndarray:
    """Plain double-precision loop over the unstabilized equations, one sample at a time."""
    W = {name: (getattr(cell, name).weight.data.astype(np.float64), getattr(cell, name).bias.data.astype(np.float64))
         for name in ("q", "k", "v", "o", "igate", "fgate")}
    d = cell.d
    C = np.zeros((d, d))
    n = np.zeros(d)
    out = []
    for x_t in x.astype(np.float64):
        q = x_t @ W["q"][0] + W["q"][1]
        k = x_t @ W["k"][0] / math.sqrt(d) + W["k"][1]
        v = x_t @ W["v"][0] + W["v"][1]
        o = sig(x_t @ W["o"][0] + W["o"][1])
        i = math.exp((x_t @ W["igate"][0] + W["igate"][1])[0])
        f_pre = (x_t @ W["fgate"][0] + W["fgate"][1])[0]
        f = sig(f_pre) if cell.forget == "sigmoid" else math.exp(f_pre)
        C = f * C + i * np.outer(v, k)
        n = f * n + i * k
        out.append(o * (C @ q) / max(abs(n @ q), 1.0))
    return np.stack(out)


def set_all(cell: MLSTMCell, value: float):
    for p in cell.parameters():
        p.data[...] = value


def test_scalar_step_by_hand(f64):
    cell = MLSTMCell(1, 1, T.make_rng(0), stabilize=False)
    set_all(cell, 1.0)
    for lin in (cell.q, cell.k, cell.v, cell.o, cell.igate, cell.fgate):
        lin.bias.data[...] = 0.0
    state = MLSTMState.zeros(1, 1)
    # x = 1: q = k = v = 1, i = e, f = o = sigmoid(1); C = n = e, so h~ = 1
    h, state = mlstm_step(Tensor(np.array([[1.0]])), state, cell)
    e = math.e
    assert h.data[0, 0] == pytest.approx(sig(1.0), abs=1e-15)
    assert state.C.data[0, 0, 0] == pytest.approx(e) and state.n.data[0, 0] == pytest.approx(e)
    # x = -1: q = k = v = -1, i = 1/e, f = o = sigmoid(-1)
    h, state = mlstm_step(Tensor(np.array([[-1.0]])), state, cell)
    c2 = sig(-1.0) * e + 1 / e
    n2 = sig(-1.0) * e - 1 / e
    assert abs(n2) < 1  # the denominator floor is active
    assert state.C.data[0, 0, 0] == pytest.approx(c2)
    assert h.data[0, 0] == pytest.approx(sig(-1.0) * (-c2), abs=1e-15)


def test_scalar_step_stabilized_agrees(f64):
    for stabilize in (False, True):
        cell = MLSTMCell(1, 1, T.make_rng(0), stabilize=stabilize)
        set_all(cell, 1.0)
        for lin in (cell.q, cell.k, cell.v, cell.o, cell.igate, cell.fgate):
            lin.bias.data[...] = 0.0
        out = mlstm_forward(Tensor(np.array([[1.0], [-1.0]])), cell).data
        assert out[:, 0] == pytest.approx([sig(1.0), -sig(-1.0) * (sig(-1.0) * math.e + 1 / math.e)], abs=1e-14)


@pytest.mark.parametrize("stabilize", [False, True])
def test_closed_input_gate_and_open_forget_gate_carry_state(f64, rng, stabilize):
    cell = MLSTMCell(3, 4, rng, forget="exp", stabilize=stabilize)
    cell.fgate.weight.data[...] = 0.0
    cell.fgate.bias.data[...] = 0.0  # f = exp(0) = 1
    cell.igate.weight.data[...] = 0.0
    cell.igate.bias.data[...] = -1e4  # i = exp(-1e4) = 0
    state = MLSTMState(Tensor(rng.normal(size=(2, 4, 4))), Tensor(rng.normal(size=(2, 4))), np.zeros(2))
    for _ in range(3):
        _, new = mlstm_step(Tensor(rng.normal(size=(2, 3)) * 10), state, cell)
        assert np.array_equal(new.C.data, state.C.data)
        assert np.array_equal(new.n.data, state.n.data)
        state = new


@pytest.mark.parametrize("forget", ["sigmoid", "exp"])
@pytest.mark.parametrize("stabilize", [False, True])
def test_five_steps_match_double_precision_oracle(f64, rng, forget, stabilize):
    cell = MLSTMCell(3, 3, rng, forget=forget, stabilize=stabilize)
    x = rng.normal(size=(5, 3))
    ref = reference_recurrence(x, cell)
    for out in (mlstm_forward(Tensor(x), cell).data, mlstm_parallel(Tensor(x), cell).data):
        assert np.max(np.abs(out - ref)) / np.max(np.abs(ref)) <= 1e-5


def test_float32_matches_oracle(rng):
    cell = MLSTMCell(3, 3, rng)
    x = rng.normal(size=(5, 3)).astype(np.float32)
    ref = reference_recurrence(x, cell)
    out = mlstm_forward(Tensor(x), cell).data
    assert np.max(np.abs(out - ref)) / np.max(np.abs(ref)) <= 1e-5


def test_single_step_equals_forward(f64, rng):
    cell = MLSTMCell(4, 5, rng)
    x = rng.normal(size=(2, 1, 4))
    h, _ = mlstm_step(Tensor(x[:, 0]), MLSTMState.zeros(2, 5), cell)
    assert np.array_equal(mlstm_forward(Tensor(x), cell).data[:, 0], h.data)


def test_prefix_and_causality(f64, rng):
    cell = MLSTMCell(4, 4, rng)
    x = rng.normal(size=(2, 8, 4))
    full = mlstm_forward(Tensor(x), cell).data
    full_par = mlstm_parallel(Tensor(x), cell).data
    for k in (1, 4, 7):
        assert np.allclose(mlstm_forward(Tensor(x[:, :k]), cell).data, full[:, :k], rtol=0, atol=1e-14)
        y = x.copy()
        y[:, k:] += rng.normal(size=y[:, k:].shape)
        assert np.array_equal(mlstm_forward(Tensor(y), cell).data[:, :k], full[:, :k])
        assert np.allclose(mlstm_parallel(Tensor(y), cell).data[:, :k], full_par[:, :k], rtol=0, atol=1e-14)


@pytest.mark.parametrize("forget", ["sigmoid", "exp"])
def test_parallel_matches_recurrent(f64, rng, forget):
    cell = MLSTMCell(6, 6, rng, forget=forget)
    x = rng.normal(size=(3, 12, 6)) * 3
    a = mlstm_forward(Tensor(x), cell).data
    b = mlstm_parallel(Tensor(x), cell).data
    assert np.max(np.abs(a - b)) <= 1e-5 * max(1.0, np.max(np.abs(a)))


@pytest.mark.parametrize("mode", ["recurrent", "parallel"])
def test_ten_step_gradients(f64, rng, mode):
    cell = MLSTMCell(3, 3, rng)
    x = T.parameter(rng.normal(size=(1, 10, 3)))
    w = Tensor(rng.normal(size=(1, 10, 3)))
    fn = mlstm_forward if mode == "recurrent" else mlstm_parallel
    params = [x, cell.q.weight, cell.k.weight, cell.v.bias, cell.o.weight, cell.igate.weight, cell.fgate.bias]
    assert check_grads(lambda: T.sum(fn(x, cell) * w), params) <= 1e-3


def test_denominator_floor_bounds_output(f64, rng):
    cell = MLSTMCell(3, 3, rng, stabilize=False)
    cell.o.weight.data[...] = 0.0
    cell.o.bias.data[...] = 50.0  # output gate saturates at 1, so h = h~
    state = MLSTMState.zeros(64, 3)
    for _ in range(6):
        _, state = mlstm_step(Tensor(rng.normal(size=(64, 3))), state, cell)
    x = rng.normal(size=(64, 3))
    h, new = mlstm_step(Tensor(x), state, cell)
    qv = x @ cell.q.weight.data + cell.q.bias.data
    cq = np.einsum("bij,bj->bi", new.C.data, qv)
    assert np.all(np.abs(h.data) <= np.abs(cq) + 1e-12)


@pytest.mark.parametrize("mode", ["recurrent", "parallel"])
def test_stabilized_outputs_stay_finite_at_large_scale(rng, mode):
    cell = MLSTMCell(4, 4, rng)
    x = Tensor((rng.uniform(-1, 1, size=(10_000, 10, 4)) * 1e3).astype(np.float32))
    out = (mlstm_forward if mode == "recurrent" else mlstm_parallel)(x, cell).data
    assert out.shape == (10_000, 10, 4)  # 1e5 steps
    assert np.isfinite(out).all()


def test_unstabilized_overflow_is_reported(f64, rng):
    cell = MLSTMCell(2, 2, rng, stabilize=False)
    cell.igate.bias.data[...] = 1e4
    with pytest.raises(MLSTMOverflowError, match="mLSTM overflow"):
        mlstm_forward(Tensor(np.ones((3, 2))), cell)


def test_zero_weights_make_blocks_identity(rng):
    stack = MLSTMStack(MLSTMConfig(input_dim=8, num_blocks=4), rng)
    for block in stack.blocks:
        set_all(block.cell, 0.0)
    x = rng.normal(size=(2, 5, 8)).astype(np.float32)
    out = mlstm_block(Tensor(x), stack).data
    assert out.shape == x.shape
    assert np.array_equal(out, x)


def test_block_parameter_count():
    stack = MLSTMStack(MLSTMConfig(input_dim=128, num_blocks=4), T.make_rng(0))
    d = 128
    per_block = 2 * d + 4 * (d * d + d) + 2 * (d + 1)  # LayerNorm, q/k/v/o, two scalar gates
    assert stack.num_parameters() == 4 * per_block == mlstm_params(stack.config)


def test_config_validation():
    with pytest.raises(ValueError):
        MLSTMConfig(forget="tanh")
    with pytest.raises(ValueError):
        MLSTMConfig(mode="chunked")
    with pytest.raises(ValueError):
        MLSTMStack(MLSTMConfig(input_dim=4, head_dim=8), T.make_rng(0))
