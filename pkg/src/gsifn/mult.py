"""Cross-modal transformer baseline: one transformer per directed modality pair plus one self transformer per target."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .gsit import Transformer
from .masking import MODALITIES
from .nn import Module
from .tensor import ShapeError, Tensor


@dataclass
class CrossModalConfig:
    d_model: int = 128
    heads: int = 4
    layers: int = 1
    dropout: float = 0.2
    ffn: bool = True
    ffn_mult: int = 4
    self_layers: int | None = None  # defaults to max(layers, 3)

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.self_layers is None:
            self.self_layers = max(self.layers, 3)


def crossmodal_transformer(target: Tensor, source: Tensor, transformer: Transformer) -> Tensor:
    """Queries from ``target``, keys and values from ``source``; output has the target's length."""
    if target.shape[-1] != source.shape[-1]:
        raise ShapeError(f"cross-modal feature dims differ: {target.shape} vs {source.shape}")
    squeeze = target.ndim == 2
    if squeeze:
        target = T.reshape(target, (1,) + target.shape)
        source = T.reshape(source, (1,) + source.shape)
    out = transformer(target, None, source)
    return T.reshape(out, out.shape[1:]) if squeeze else out


class MulTFusion(Module):
    """Per target: cross transformers from every other modality, feature concat, then a self transformer."""

    def __init__(self, config: CrossModalConfig, rng: np.random.Generator, modalities: Sequence[str] = MODALITIES):
        self.config = config
        self.modalities = tuple(modalities)
        if len(self.modalities) < 2:
            raise ValueError("cross-modal fusion needs at least two modalities")
        c = config
        self.pairs = [(tgt, src) for tgt in self.modalities for src in self.modalities if src != tgt]
        self.cross = [
            Transformer(c.d_model, c.heads, c.layers, rng, c.dropout, c.ffn, c.ffn_mult, cross=True)
            for _ in self.pairs
        ]
        width = c.d_model * (len(self.modalities) - 1)
        self.memory = [
            Transformer(width, c.heads, c.self_layers, rng, c.dropout, c.ffn, c.ffn_mult)
            for _ in self.modalities
        ]

    @property
    def out_dim(self) -> int:
        return self.config.d_model * (len(self.modalities) - 1) * len(self.modalities)

    @property
    def num_transformers(self) -> int:
        return len(self.cross) + len(self.memory)

    def forward(self, *xs: Tensor, lengths: Sequence[np.ndarray] | None = None,
                record: bool = False) -> tuple[Tensor, None]:
        if len(xs) != len(self.modalities):
            raise ValueError(f"expected {len(self.modalities)} modality inputs, got {len(xs)}")
        by_mod = dict(zip(self.modalities, xs))
        crossed = {tgt: [] for tgt in self.modalities}
        for (tgt, src), tr in zip(self.pairs, self.cross):
            crossed[tgt].append(crossmodal_transformer(by_mod[tgt], by_mod[src], tr))
        finals = []
        for i, (tgt, mem) in enumerate(zip(self.modalities, self.memory)):
            h = mem(T.concat(crossed[tgt], axis=-1))
            last = np.full(h.shape[0], h.shape[1] - 1) if lengths is None else np.asarray(lengths[i]) - 1
            finals.append(T.pick(h, last))
        return T.concat(finals, axis=-1), None


def mult_forward(x_t: Tensor, x_v: Tensor, x_a: Tensor, fusion: MulTFusion, head=None,
                 lengths: Sequence[np.ndarray] | None = None) -> Tensor:
    """Fusion vector ``(B, out_dim)``, or the scalar prediction ``(B,)`` when a hidden-state head is given."""
    x_m = fusion(x_t, x_v, x_a, lengths=lengths)[0]
    if head is None:
        return x_m
    return head({"m": x_m}).preds["m"]
