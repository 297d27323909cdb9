"""Adam with per-group learning rates and weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float | Sequence[float],
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float | Sequence[float] = 0.0,
    decoupled: bool = True,
) -> AdamState:
    """One in-place Adam update of ``params``.

    ``lr`` and ``weight_decay`` may be scalars or one value per parameter.
    With ``decoupled`` the decay is applied directly to the weights
    (``p -= lr * wd * p``); otherwise it is folded into the gradient as an L2
    term. Missing gradients (``None``) are treated as zeros.
    """
    n = len(params)
    lrs = [lr] * n if np.isscalar(lr) else list(lr)
    wds = [weight_decay] * n if np.isscalar(weight_decay) else list(weight_decay)
    if len(grads) != n or len(lrs) != n or len(wds) != n:
        raise ValueError("params, grads, lr and weight_decay must align")
    if any(x <= 0 for x in lrs):
        raise ValueError(f"learning rate must be positive, got {min(lrs)}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, m in zip(params, state.m):
        if p.shape != m.shape:
            raise ValueError(f"optimizer state shape {m.shape} does not match parameter {p.shape}")

    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, p in enumerate(params):
        g = np.zeros_like(p) if grads[i] is None else grads[i]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if wds[i] and not decoupled:
            g = g + wds[i] * p
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        if wds[i] and decoupled:
            p -= (lrs[i] * wds[i]) * p
        p -= (lrs[i] * update).astype(p.dtype, copy=False)
    return state


class Adam:
    """Stateful wrapper over :func:`adam_step` for a list of parameter groups.

    Each group is ``{"params": [...], "lr": float, "weight_decay": float}``.
    Groups with ``lr == 0`` are frozen and never touched.
    """

    def __init__(self, groups: Sequence[dict], betas=(0.9, 0.999), eps: float = 1e-8, decoupled: bool = True):
        self.groups = [dict(g) for g in groups]
        self.betas = betas
        self.eps = eps
        self.decoupled = decoupled
        self.state = AdamState()
        self.params: list[Tensor] = [p for g in self.groups for p in g["params"]]
        active = [(p, g["lr"], g.get("weight_decay", 0.0)) for g in self.groups for p in g["params"] if g["lr"] > 0]
        self._active = [a[0] for a in active]
        self._lrs = [a[1] for a in active]
        self._wds = [a[2] for a in active]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        if not self._active:
            return
        adam_step(
            [p.data for p in self._active],
            [p.grad for p in self._active],
            self.state,
            self._lrs,
            self.betas,
            self.eps,
            self._wds,
            self.decoupled,
        )
