"""Unimodal label generation and the weighted multi-task loss.

Each modality ``u`` in ``(m, t, v, a)`` keeps running means of its hidden
states for positive and negative samples. A sample's relative position
between the two centers, compared with the fused representation's, shifts
the multimodal label into a per-modality label; labels for the same sample
are blended across epochs with a momentum that forgets the early, noisy
estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .nn import Linear, Module
from .tensor import Tensor

UNIMODAL = ("t", "v", "a")
ALL = ("m",) + UNIMODAL


class ColdCentersError(RuntimeError):
    pass


@dataclass
class ULGMConfig:
    epsilon: float = 1e-8
    warmup_epochs: int = 2
    label_min: float = -3.0
    label_max: float = 3.0
    offset_scale: float | None = None  # defaults to half the label range

    def __post_init__(self):
        if self.label_max <= self.label_min:
            raise ValueError("label range is empty")
        if self.offset_scale is None:
            self.offset_scale = (self.label_max - self.label_min) / 2
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")


@dataclass
class Centers:
    """Positive/negative running-mean centers per modality."""

    pos: dict[str, np.ndarray] = field(default_factory=dict)
    neg: dict[str, np.ndarray] = field(default_factory=dict)
    n_pos: dict[str, int] = field(default_factory=dict)
    n_neg: dict[str, int] = field(default_factory=dict)

    def ready(self, u: str) -> bool:
        return self.n_pos.get(u, 0) > 0 and self.n_neg.get(u, 0) > 0

    def get(self, u: str) -> tuple[np.ndarray, np.ndarray]:
        if not self.ready(u):
            raise ColdCentersError(f"centers cold for modality '{u}'")
        return self.pos[u], self.neg[u]

    def to_json(self) -> dict:
        return {
            "pos": {u: c.tolist() for u, c in self.pos.items()},
            "neg": {u: c.tolist() for u, c in self.neg.items()},
            "n_pos": dict(self.n_pos),
            "n_neg": dict(self.n_neg),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Centers":
        return cls({u: np.asarray(c) for u, c in data["pos"].items()},
                   {u: np.asarray(c) for u, c in data["neg"].items()},
                   dict(data["n_pos"]), dict(data["n_neg"]))


def _running_update(center, count: int, batch: np.ndarray) -> tuple[np.ndarray, int]:
    new = count + batch.shape[0]
    total = batch.sum(axis=0, dtype=np.float64)
    if count:
        total = total + center * count
    return total / new, new


def update_centers(hidden: dict[str, np.ndarray], y_m, centers: Centers) -> Centers:
    """Fold a batch of hidden states into the running centers (in place; also returned).

    Samples with ``y_m > 0`` update the positive center, ``y_m < 0`` the negative
    one and neutral samples neither.
    """
    y_m = np.asarray(y_m, dtype=np.float64)
    pos, neg = y_m > 0, y_m < 0
    for u, h in hidden.items():
        h = np.asarray(h, dtype=np.float64)
        if h.shape[0] != y_m.shape[0]:
            raise ValueError(f"hidden '{u}' has {h.shape[0]} rows for {y_m.shape[0]} labels")
        if pos.any():
            centers.pos[u], centers.n_pos[u] = _running_update(centers.pos.get(u), centers.n_pos.get(u, 0), h[pos])
        if neg.any():
            centers.neg[u], centers.n_neg[u] = _running_update(centers.neg.get(u), centers.n_neg.get(u, 0), h[neg])
    return centers


def relative_distance(h, centers: Centers, u: str, eps: float = 1e-8) -> np.ndarray:
    """``(d_n - d_p) / (d_n + d_p + eps)`` with squared distances to the two centers; in ``[-1, 1]``."""
    c_pos, c_neg = centers.get(u)
    h = np.asarray(h, dtype=np.float64)
    d_p = ((h - c_pos) ** 2).sum(axis=-1)
    d_n = ((h - c_neg) ** 2).sum(axis=-1)
    return (d_n - d_p) / (d_n + d_p + eps)


class LabelStore:
    """Generated per-modality labels and update counters for every sample id."""

    def __init__(self, label_min: float = -3.0, label_max: float = 3.0):
        self.label_min = label_min
        self.label_max = label_max
        self.labels: dict[str, dict[str, float]] = {}
        self.iters: dict[str, int] = {}

    def register(self, ids: Sequence[str], y_m) -> None:
        """Start every new sample at its multimodal label with counter 0."""
        for sid, y in zip(ids, np.asarray(y_m, dtype=np.float64)):
            if sid not in self.labels:
                y = float(np.clip(y, self.label_min, self.label_max))
                self.labels[sid] = {u: y for u in UNIMODAL}
                self.iters[sid] = 0

    def _check(self, sid: str) -> None:
        if sid not in self.labels:
            raise KeyError(f"unknown sample id '{sid}'")

    def get(self, ids: Sequence[str], u: str) -> np.ndarray:
        for sid in ids:
            self._check(sid)
        return np.array([self.labels[sid][u] for sid in ids])

    def to_json(self) -> dict:
        return {"range": [self.label_min, self.label_max],
                "labels": {k: self.labels[k] for k in sorted(self.labels)},
                "iters": {k: self.iters[k] for k in sorted(self.iters)}}

    @classmethod
    def from_json(cls, data: dict) -> "LabelStore":
        store = cls(*data["range"])
        store.labels = {k: {u: float(x) for u, x in v.items()} for k, v in data["labels"].items()}
        store.iters = {k: int(v) for k, v in data["iters"].items()}
        return store

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path) -> "LabelStore":
        return cls.from_json(json.loads(Path(path).read_text()))


def target_label(alpha_u, alpha_m, y_m, offset_scale: float, label_min: float, label_max: float) -> np.ndarray:
    """Instantaneous estimate ``clamp(y_m + (alpha_u - alpha_m) * R)``."""
    y = np.asarray(y_m, dtype=np.float64) + (np.asarray(alpha_u) - np.asarray(alpha_m)) * offset_scale
    return np.clip(y, label_min, label_max)


def momentum_blend(previous: float, target: float, i: int) -> float:
    """``((i-1)/(i+1)) * previous + (2/(i+1)) * target`` for the i-th update (i >= 1).

    Evaluated as ``previous + 2/(i+1) * (target - previous)`` so that a label already
    at its target stays there bit for bit.
    """
    if i < 1:
        raise ValueError("update counter starts at 1")
    return previous + 2.0 / (i + 1) * (target - previous)


def generate_labels(alpha_u: dict[str, np.ndarray], alpha_m, y_m, store: LabelStore, ids: Sequence[str],
                    offset_scale: float = 3.0) -> dict[str, np.ndarray]:
    """Advance each sample's counter by one and blend in a fresh estimate for every modality given."""
    for sid in ids:
        store._check(sid)
    out = {u: np.empty(len(ids)) for u in alpha_u}
    targets = {u: target_label(a, alpha_m, y_m, offset_scale, store.label_min, store.label_max)
               for u, a in alpha_u.items()}
    for row, sid in enumerate(ids):
        i = store.iters[sid] + 1
        store.iters[sid] = i
        for u in alpha_u:
            y = momentum_blend(store.labels[sid][u], float(targets[u][row]), i)
            y = float(np.clip(y, store.label_min, store.label_max))
            store.labels[sid][u] = y
            out[u][row] = y
    return out


@dataclass
class HiddenStates:
    h: dict[str, Tensor]  # (B, width) per modality in (m, t, v, a)
    preds: dict[str, Tensor]  # (B,) per modality


class HiddenHeads(Module):
    """Projects each stream to a common width (linear + relu) and predicts a scalar from it.

    The fused stream's projection and predictor together form its two-layer head.
    """

    def __init__(self, dims: dict[str, int], width: int, rng: np.random.Generator):
        self.order = tuple(u for u in ALL if u in dims)
        self.width = width
        self.proj = [Linear(dims[u], width, rng) for u in self.order]
        self.head = [Linear(width, 1, rng) for u in self.order]

    def forward(self, features: dict[str, Tensor]) -> HiddenStates:
        h, preds = {}, {}
        for u, proj, head in zip(self.order, self.proj, self.head):
            if u not in features:
                continue
            hu = T.relu(proj(features[u]))
            h[u] = hu
            preds[u] = T.reshape(head(hu), (hu.shape[0],))
        return HiddenStates(h, preds)


def extract_hidden(heads: HiddenHeads, x_t: Tensor | None, x_v: Tensor | None, x_a: Tensor | None, x_m: Tensor,
                   lengths: dict[str, np.ndarray] | None, cls_index: int = 0) -> HiddenStates:
    """Text uses its [CLS] position, vision/audio their last valid step, fusion its vector directly."""
    feats = {"m": x_m}
    if x_t is not None:
        feats["t"] = T.pick(x_t, np.full(x_t.shape[0], cls_index))
    for u, x in (("v", x_v), ("a", x_a)):
        if x is None:
            continue
        if lengths is None or u not in lengths:
            raise ValueError(f"length metadata missing for modality '{u}'")
        feats[u] = T.pick(x, np.asarray(lengths[u]) - 1)
    return heads({u: f for u, f in feats.items() if u in heads.order})


def loss_weights(preds: dict[str, np.ndarray], u: str) -> np.ndarray:
    """Per-sample weight of modality ``u``: 1 for the fused stream, ``tanh(|y_u - y_m|)`` otherwise."""
    if u == "m":
        return np.ones_like(np.asarray(preds["m"], dtype=np.float64))
    return np.tanh(np.abs(np.asarray(preds[u], dtype=np.float64) - np.asarray(preds["m"], dtype=np.float64)))


def weighted_loss(preds: dict[str, Tensor], y_m, y_uni: dict[str, np.ndarray] | None = None,
                  unimodal: bool = True) -> tuple[Tensor, dict[str, float]]:
    """Sum over modalities of the weighted mean absolute error; weights carry no gradient.

    With ``unimodal=False`` (warm-up) the unimodal weights are forced to zero.
    """
    y_m = np.asarray(y_m, dtype=np.float64)
    B = y_m.shape[0]
    if B == 0:
        raise ValueError("weighted loss over an empty batch")
    raw = {u: p.data for u, p in preds.items()}
    total, parts = None, {}
    for u in ALL:
        if u not in preds:
            continue
        target = y_m if u == "m" else np.asarray((y_uni or {})[u], dtype=np.float64)
        w = loss_weights(raw, u) if (u == "m" or unimodal) else np.zeros(B)
        pred = preds[u]
        if pred.shape != (B,) or target.shape != (B,):
            raise ValueError(f"loss term '{u}': prediction {pred.shape} and target {target.shape} must be ({B},)")
        err = T.abs(T.add_const(pred, -target.astype(pred.dtype)))
        term = T.scale(T.sum(T.mul(Tensor(w.astype(pred.dtype)), err)), 1.0 / B)
        parts[u] = float(term.data)
        total = term if total is None else total + term
    return total, parts
