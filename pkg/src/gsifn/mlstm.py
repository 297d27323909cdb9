"""mLSTM: LSTM with a d x d matrix memory and covariance update.

Per step::

    C_t = f_t C_{t-1} + i_t v_t k_t^T
    n_t = f_t n_{t-1} + i_t k_t
    h_t = o_t * C_t q_t / max(|n_t^T q_t|, 1)

with ``i_t = exp(i~_t)`` and ``f_t`` either ``sigmoid(f~_t)`` or ``exp(f~_t)``.

In stabilized mode the state is stored scaled by ``exp(-m_t)`` where
``m_t = max(log f_t + m_{t-1}, i~_t, 0)``; the floor of the denominator is
scaled the same way, so the output is unchanged while every exponential stays
in ``(0, 1]``. ``m`` only rescales, so it is carried as a constant and never
differentiated.

Two evaluation paths produce the same outputs: :func:`mlstm_forward` runs the
recurrence step by step, :func:`mlstm_parallel` evaluates all steps at once
through a causal decay matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module
from .tensor import NEG_INF, NonFiniteError, ShapeError, Tensor


class MLSTMOverflowError(ArithmeticError):
    pass


@dataclass
class MLSTMConfig:
    input_dim: int = 128
    head_dim: int | None = None  # defaults to input_dim; must equal it inside residual blocks
    num_blocks: int = 4
    forget: str = "sigmoid"  # or "exp"
    stabilize: bool = True
    mode: str = "parallel"  # or "recurrent"

    def __post_init__(self):
        if self.head_dim is None:
            self.head_dim = self.input_dim
        if self.input_dim < 1 or self.head_dim < 1 or self.num_blocks < 0:
            raise ValueError("mLSTM dims must be positive")
        if self.forget not in ("sigmoid", "exp"):
            raise ValueError(f"forget gate activation must be 'sigmoid' or 'exp', got {self.forget!r}")
        if self.mode not in ("parallel", "recurrent"):
            raise ValueError(f"mLSTM mode must be 'parallel' or 'recurrent', got {self.mode!r}")


@dataclass
class MLSTMState:
    C: Tensor  # (B, d, d)
    n: Tensor  # (B, d)
    m: np.ndarray  # (B,) stabilizer, untracked

    @classmethod
    def zeros(cls, batch: int, d: int, dtype=None) -> "MLSTMState":
        dtype = dtype or T.get_default_dtype()
        return cls(Tensor(np.zeros((batch, d, d), dtype)), Tensor(np.zeros((batch, d), dtype)), np.zeros(batch, dtype))


class MLSTMCell(Module):
    """Projection parameters of one mLSTM layer."""

    def __init__(self, d_in: int, d: int, rng: np.random.Generator, forget: str = "sigmoid", stabilize: bool = True):
        self.d = d
        self.q = Linear(d_in, d, rng)
        self.k = Linear(d_in, d, rng)
        self.v = Linear(d_in, d, rng)
        self.o = Linear(d_in, d, rng)
        self.igate = Linear(d_in, 1, rng)
        self.fgate = Linear(d_in, 1, rng)
        self.forget = forget
        self.stabilize = stabilize

    def project(self, x: Tensor):
        """q, k, v, o-preactivation, input-gate and forget-gate preactivations for ``x (..., d_in)``."""
        q = self.q(x)
        k = T.linear(x, T.scale(self.k.weight, 1.0 / math.sqrt(self.d)), self.k.bias)
        v = self.v(x)
        o = self.o(x)
        i_pre = T.reshape(self.igate(x), x.shape[:-1])
        f_pre = T.reshape(self.fgate(x), x.shape[:-1])
        return q, k, v, o, i_pre, f_pre

    def log_forget(self, f_pre: Tensor) -> Tensor:
        return T.log_sigmoid(f_pre) if self.forget == "sigmoid" else f_pre

    def forward(self, x: Tensor, mode: str = "parallel") -> Tensor:
        return mlstm_parallel(x, self) if mode == "parallel" else mlstm_forward(x, self)


def _bcast(a: Tensor, d: int, dims: int) -> Tensor:
    # (B,) -> (B, d) or (B, d, d)
    for axis in range(1, dims + 1):
        a = T.expand(a, axis, d)
    return a


def mlstm_step(x_t: Tensor, state: MLSTMState, cell: MLSTMCell) -> tuple[Tensor, MLSTMState]:
    """One recurrence step for a batch ``x_t (B, d_in)``; returns ``(h_t (B, d), new_state)``."""
    if x_t.ndim != 2 or x_t.shape[0] != state.C.shape[0]:
        raise ShapeError(f"mlstm_step expects (B, d_in) input matching state batch, got {x_t.shape}")
    d = cell.d
    try:
        q, k, v, o, i_pre, f_pre = cell.project(x_t)
        log_f = cell.log_forget(f_pre)
        B = x_t.shape[0]
        if cell.stabilize:
            m_new = np.maximum(np.maximum(log_f.data + state.m, i_pre.data), 0.0)
            i_gate = T.exp(T.add_const(i_pre, -m_new))
            f_gate = T.exp(T.add_const(log_f, state.m - m_new))
            floor = np.exp(-m_new)
        else:
            m_new = state.m
            i_gate = T.exp(i_pre)
            f_gate = T.exp(log_f)
            floor = np.ones(B, dtype=x_t.dtype)
        outer = T.matmul(T.reshape(v, (B, d, 1)), T.reshape(k, (B, 1, d)))
        C = _bcast(f_gate, d, 2) * state.C + _bcast(i_gate, d, 2) * outer
        n = _bcast(f_gate, d, 1) * state.n + _bcast(i_gate, d, 1) * k
        num = T.reshape(T.matmul(C, T.reshape(q, (B, d, 1))), (B, d))
        den = T.maximum(T.abs(T.sum(n * q, axis=-1)), Tensor(floor.astype(x_t.dtype)))
        h = T.sigmoid(o) * (num / _bcast(den, d, 1))
    except NonFiniteError as exc:
        raise MLSTMOverflowError(f"mLSTM overflow: {exc}") from None
    return h, MLSTMState(C, n, np.asarray(m_new, dtype=x_t.dtype))


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return T.reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise ShapeError(f"mLSTM expects (T, d_in) or (B, T, d_in), got {x.shape}")
    return x, False


def mlstm_forward(x: Tensor, cell: MLSTMCell, state: MLSTMState | None = None) -> Tensor:
    """Run the recurrence from the zero state over ``x (B, T, d_in)`` (or ``(T, d_in)``)."""
    x, squeeze = _batched(x)
    B, steps, _ = x.shape
    if steps < 1:
        raise ShapeError("mLSTM needs at least one time step")
    state = state or MLSTMState.zeros(B, cell.d, x.dtype)
    outs = []
    for t in range(steps):
        h, state = mlstm_step(T.reshape(T.slice_axis(x, t, t + 1, axis=1), (B, x.shape[2])), state, cell)
        outs.append(T.reshape(h, (B, 1, cell.d)))
    out = T.concat(outs, axis=1)
    return T.reshape(out, out.shape[1:]) if squeeze else out


def mlstm_parallel(x: Tensor, cell: MLSTMCell) -> Tensor:
    """All steps at once: ``h~ = (S V) / max(|rowsum S|, floor)`` with ``S = (Q K^T) * D``.

    ``D[t, s] = exp(F_t - F_s + i~_s - m_t)`` for ``s <= t`` (``F`` the running sum of log
    forget gates) and 0 above the diagonal.
    """
    x, squeeze = _batched(x)
    B, steps, _ = x.shape
    d = cell.d
    try:
        q, k, v, o, i_pre, f_pre = cell.project(x)
        F = T.cumsum(cell.log_forget(f_pre), axis=1)  # (B, T)
        log_d = T.expand(F, 2, steps) - T.expand(F - i_pre, 1, steps)
        causal = np.where(np.tril(np.ones((steps, steps), dtype=bool)), 0.0, NEG_INF)
        log_d = T.add_const(log_d, causal)
        if cell.stabilize:
            m = np.maximum(log_d.data.max(axis=-1), 0.0)
        else:
            m = np.zeros((B, steps), dtype=x.dtype)
        decay = T.exp(T.add_const(log_d, np.broadcast_to(-m[..., None], (B, steps, steps))))
        S = T.matmul(q, T.swap_last(k)) * decay
        num = T.matmul(S, v)
        den = T.maximum(T.abs(T.sum(S, axis=-1)), Tensor(np.exp(-m).astype(x.dtype)))
        h = T.sigmoid(o) * (num / T.expand(den, 2, d))
    except NonFiniteError as exc:
        raise MLSTMOverflowError(f"mLSTM overflow: {exc}") from None
    return T.reshape(h, h.shape[1:]) if squeeze else h


class MLSTMBlock(Module):
    """LayerNorm -> mLSTM -> residual add."""

    def __init__(self, d: int, rng: np.random.Generator, forget: str = "sigmoid", stabilize: bool = True,
                 mode: str = "parallel"):
        self.norm = LayerNorm(d)
        self.cell = MLSTMCell(d, d, rng, forget, stabilize)
        self.mode = mode

    def forward(self, x: Tensor) -> Tensor:
        return x + self.cell(self.norm(x), self.mode)


class MLSTMStack(Module):
    def __init__(self, config: MLSTMConfig, rng: np.random.Generator):
        if config.head_dim != config.input_dim:
            raise ValueError("residual mLSTM blocks need head_dim == input_dim")
        self.config = config
        self.blocks = [
            MLSTMBlock(config.input_dim, rng, config.forget, config.stabilize, config.mode)
            for _ in range(config.num_blocks)
        ]

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


def mlstm_block(x: Tensor, stack: MLSTMStack) -> Tensor:
    return stack(x)
