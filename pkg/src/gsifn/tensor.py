"""Dense tensors with a reverse-mode differentiation tape.

Every op is a plain function over :class:`Tensor` values. When at least one
input is tracked, the op appends a :class:`Node` holding its inputs and a
closure that maps the output gradient to input gradients. :func:`backward`
orders the recorded nodes topologically and walks them once in reverse.

Shapes are explicit: elementwise ops require identical shapes, and the only
implicit alignments are the documented ones (a shared ``(k, n)`` weight in
:func:`matmul`/:func:`linear`, and an additive softmax mask matching the
trailing dims of the scores).
"""

from __future__ import annotations

import builtins
import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

NEG_INF = -1e9  # stands in for -inf in additive masks

_default_dtype = np.float32
_grad_enabled = True
_check_finite = True
_flop_counters: list["FlopCounter"] = []


class ShapeError(ValueError):
    pass


class FullyMaskedRowError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    pass


# ----------------------------------------------------------------------------
# global switches


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    _default_dtype = np.dtype(dtype).type


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    prev = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_finite_check(enabled: bool) -> None:
    global _check_finite
    _check_finite = bool(enabled)


@contextlib.contextmanager
def bit_exact() -> Iterator[None]:
    """Pin BLAS to a single thread so repeated runs agree bit for bit."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


@dataclass
class FlopCounter:
    """Instrumentation sink: matmul-class ops add 2 * multiply-accumulates."""

    matmul: int = 0

    def add(self, macs: int) -> None:
        self.matmul += 2 * int(macs)


@contextlib.contextmanager
def count_ops() -> Iterator[FlopCounter]:
    counter = FlopCounter()
    _flop_counters.append(counter)
    try:
        yield counter
    finally:
        _flop_counters.remove(counter)


def _record_macs(macs: int) -> None:
    for c in _flop_counters:
        c.add(macs)


# ----------------------------------------------------------------------------
# RNG


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) seeded deterministically."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(bg) for bg in rng.bit_generator.spawn(n)]


# ----------------------------------------------------------------------------
# core types


class Node:
    __slots__ = ("op", "parents", "backward_fn")

    def __init__(self, op: str, parents: tuple["Tensor", ...], backward_fn: Callable):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_default_dtype)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __rsub__(self, other):
        return add_scalar(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Tensor) else scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data, dtype=_default_dtype), requires_grad=True, name=name)


def _finite(arr: np.ndarray, op: str) -> None:
    if _check_finite and not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {op}")


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable, op: str) -> Tensor:
    _finite(data, op)
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op, parents, backward_fn)
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _axis(axis: int, ndim: int) -> int:
    return axis + ndim if axis < 0 else axis


# ----------------------------------------------------------------------------
# backward


def topological_order(root: Tensor) -> list[Tensor]:
    """Tracked tensors reachable from ``root``; inputs always precede users."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for p in t._node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss: Tensor, retain_graph: bool = False) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` and return them keyed by leaf.

    The recorded graph is released afterwards unless ``retain_graph``.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss is not tracked; no input requires grad")
    order = topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[Tensor, np.ndarray] = {}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        if node is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            leaves[t] = t.grad
            continue
        for p, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not p.requires_grad:
                continue
            if pg.shape != p.shape:
                raise ShapeError(f"{node.op}: gradient shape {pg.shape} vs input {p.shape}")
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg
        if not retain_graph:
            t._node = None
    return leaves


# ----------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    out = a.data / b.data
    return _make(out, (a, b), lambda g: (g / b.data, -g * out / b.data), "div")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _make(a.data + a.data.dtype.type(c), (a,), lambda g: (g,), "add_scalar")


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Add an untracked array whose shape equals the trailing dims of ``a``."""
    c = np.asarray(c, dtype=a.dtype)
    if a.shape[a.ndim - c.ndim:] != c.shape:
        raise ShapeError(f"add_const: shape mismatch {a.shape} vs {c.shape}")
    return _make(a.data + c, (a,), lambda g: (g,), "add_const")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow surfaces as NonFiniteError instead
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _make(out, (a,), lambda g: (g / a.data,), "log")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype, copy=False)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def log_sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))
    return _make(out.astype(x.dtype, copy=False), (a,), lambda g: (g * _sigmoid(-x),), "log_sigmoid")


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _make(a.data * pos, (a,), lambda g: (g * pos,), "relu")


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def maximum(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "maximum")
    pick_a = a.data >= b.data
    out = np.where(pick_a, a.data, b.data)
    return _make(out, (a, b), lambda g: (g * pick_a, g * ~pick_a), "maximum")


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2 * g * a.data,), "square")


# ----------------------------------------------------------------------------
# reductions


def _expand_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = sorted(_axis(ax, len(shape)) for ax in axes)
        for ax in axes:
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    shape = a.shape
    return _make(out, (a,), lambda g: (np.array(_expand_reduced(g, shape, axis, keepdims)),), "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    n = a.size // builtins.max(out.size, 1)
    shape = a.shape
    return _make(out, (a,), lambda g: (np.array(_expand_reduced(g, shape, axis, keepdims)) / n,), "mean")


def max(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along one axis; the gradient flows to the first maximal entry."""
    axis = _axis(axis, a.ndim)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        gg = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, np.expand_dims(idx, axis), gg, axis=axis)
        return (full,)

    return _make(out, (a,), bw, "max")


def cumsum(a: Tensor, axis: int = -1) -> Tensor:
    out = np.cumsum(a.data, axis=axis)
    return _make(out, (a,), lambda g: (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),), "cumsum")


# ----------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def expand(a: Tensor, axis: int, size: int) -> Tensor:
    """Insert a new axis at ``axis`` and repeat ``a`` ``size`` times along it."""
    axis = _axis(axis, a.ndim + 1)
    out = np.repeat(np.expand_dims(a.data, axis), size, axis=axis)
    return _make(out, (a,), lambda g: (g.sum(axis=axis),), "expand")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input")
    nd = tensors[0].ndim
    ax = _axis(axis, nd)
    for t in tensors[1:]:
        if t.ndim != nd or t.shape[:ax] + t.shape[ax + 1:] != tensors[0].shape[:ax] + tensors[0].shape[ax + 1:]:
            raise ShapeError(f"concat: shape mismatch {tensors[0].shape} vs {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=ax)

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors)))

    return _make(out, tuple(tensors), bw, "concat")


def slice_axis(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    ax = _axis(axis, a.ndim)
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    shape = a.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _make(a.data[index].copy(), (a,), bw, "slice")


def split(a: Tensor, lengths: Sequence[int], axis: int = 0) -> list[Tensor]:
    ax = _axis(axis, a.ndim)
    if builtins.sum(lengths) != a.shape[ax] or any(n < 0 for n in lengths):
        raise ShapeError(f"split: lengths {list(lengths)} do not cover axis of size {a.shape[ax]} in {a.shape}")
    out, start = [], 0
    for n in lengths:
        out.append(slice_axis(a, start, start + n, ax))
        start += n
    return out


def pick(a: Tensor, index: np.ndarray) -> Tensor:
    """Select ``a[b, index[b]]`` for every batch row ``b`` of a ``(B, T, ...)`` tensor."""
    index = np.asarray(index, dtype=np.int64)
    if a.ndim < 2 or index.shape != (a.shape[0],):
        raise ShapeError(f"pick: index shape {index.shape} vs tensor {a.shape}")
    if (index < 0).any() or (index >= a.shape[1]).any():
        raise IndexError(f"pick: index out of range for axis of size {a.shape[1]}")
    rows = np.arange(a.shape[0])
    shape = a.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[rows, index] = g
        return (full,)

    return _make(a.data[rows, index], (a,), bw, "pick")


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise IndexError(f"token id out of range for vocabulary of size {weight.shape[0]}")

    def bw(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (full,)

    return _make(weight.data[ids], (weight,), bw, "embedding")


# ----------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``(..., m, k) @ (k, n)`` with a shared right operand, or batched with equal leading dims."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    shared = b.ndim == 2 and a.ndim > 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ {a.shape} vs {b.shape}")
    out = np.matmul(a.data, b.data)
    _record_macs(out.size * a.shape[-1])

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if shared:
            k, n = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return _make(out, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` for ``x (..., in)``, ``w (in, out)``, ``b (out,)``."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: shape mismatch {x.shape} vs {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias shape {b.shape} vs weight {w.shape}")
    x2 = x.data.reshape(-1, w.shape[0])
    out2 = x2 @ w.data
    if b is not None:
        out2 = out2 + b.data
    _record_macs(out2.size * w.shape[0])
    out = out2.reshape(x.shape[:-1] + (w.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = (g2 @ w.data.T).reshape(x.shape)
        gw = x2.T @ g2
        return (gx, gw) if b is None else (gx, gw, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, bw, "linear")


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Temporal convolution with same padding.

    ``x (B, T, c_in)``, ``w (k, c_in, c_out)`` with odd ``k``; output ``(B, T, c_out)``.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeError(f"conv1d: shape mismatch {x.shape} vs {w.shape}")
    k, c_in, c_out = w.shape
    if k % 2 == 0:
        raise ValueError(f"conv1d: kernel size must be odd, got {k}")
    B, T, _ = x.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    # cols[b, t, j, c] = xp[b, t + j, c]
    cols = np.stack([xp[:, j:j + T, :] for j in range(k)], axis=2).reshape(B * T, k * c_in)
    w2 = w.data.reshape(k * c_in, c_out)
    out2 = cols @ w2
    if b is not None:
        out2 = out2 + b.data
    _record_macs(out2.size * k * c_in)

    def bw(g):
        g2 = g.reshape(B * T, c_out)
        gw = (cols.T @ g2).reshape(k, c_in, c_out)
        gcols = (g2 @ w2.T).reshape(B, T, k, c_in)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, j:j + T, :] += gcols[:, :, j, :]
        gx = gxp[:, pad:pad + T, :]
        return (gx, gw) if b is None else (gx, gw, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out2.reshape(B, T, c_out), parents, bw, "conv1d")


# ----------------------------------------------------------------------------
# attention / normalisation helpers


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis after adding an additive ``{0, NEG_INF}`` mask.

    ``mask`` must match the trailing dims of ``x``. Masked positions come out as
    exact zeros; a row whose mask hides every entry raises
    :class:`FullyMaskedRowError`.
    """
    z = x.data
    if mask is not None:
        mask = np.asarray(mask)
        if x.shape[x.ndim - mask.ndim:] != mask.shape:
            raise ShapeError(f"softmax: mask shape {mask.shape} vs scores {x.shape}")
        if (mask <= NEG_INF / 2).all(axis=-1).any():
            raise FullyMaskedRowError("fully-masked row")
        z = z + mask.astype(z.dtype, copy=False)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    if mask is not None:
        e = e * (mask > NEG_INF / 2)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (x,), bw, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine shape {gamma.shape} vs features {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        red = tuple(range(g.ndim - 1))
        ggamma = (g * xhat).sum(axis=red)
        gbeta = g.sum(axis=red)
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return _make(out.astype(x.dtype, copy=False), (x, gamma, beta), bw, "layer_norm")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: kept values are divided by ``1 - p``; identity when not training."""
    if not train or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    draw_dtype = np.float32 if x.dtype == np.float32 else np.float64
    keep = (rng.random(x.shape, dtype=draw_dtype) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def sinusoidal_positions(length: int, dim: int, dtype=None) -> np.ndarray:
    """``pe[pos, 2i] = sin(pos / 10000^(2i/dim))``, ``pe[pos, 2i+1] = cos(...)``."""
    dtype = dtype or _default_dtype
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, dim, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / dim)
    pe = np.zeros((length, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : dim // 2])
    return pe.astype(dtype)


def numel(shape: Iterable[int]) -> int:
    return int(math.prod(shape))
