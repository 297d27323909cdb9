"""Graph-structured interlaced-masked transformer (GsiT).

The three modality sequences are stacked into one vertex sequence (the MGE).
Two transformers fuse it under opposing ring masks, their outputs are joined
on the feature axis, and a third transformer refines each modality subgraph
under the intra mask. The refined sequence is cut back into modalities and
the final hidden state of each is concatenated into the fusion feature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .masking import MODALITIES, STRUCTURES, BlockMask, SegLengths, gen_interlaced_mask, gen_structure_mask
from .mft import write_mft
from .nn import Dropout, LayerNorm, Linear, Module
from .tensor import NEG_INF, FullyMaskedRowError, ShapeError, Tensor


@dataclass
class GsiTConfig:
    d_model: int = 128
    heads: int = 4
    layers: int = 1
    ffn: bool = False
    ffn_mult: int = 4
    dropout: float = 0.2
    dropout_position: str = "post"  # "post": on softmax output, "pre": on masked scores
    structure: str = "original"

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.dropout_position not in ("pre", "post"):
            raise ValueError(f"attn dropout position must be 'pre' or 'post', got {self.dropout_position!r}")
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure id '{self.structure}'")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads


@dataclass
class MGE:
    """Concatenated vertex sequence with the per-modality segment lengths."""

    values: Tensor  # (B, total, d) or (total, d)
    seg: tuple[int, ...]

    def split(self) -> list[Tensor]:
        return T.split(self.values, list(self.seg), axis=-2)


@dataclass
class AttentionRecord:
    """Post-softmax adjacency maps keyed by transformer name, one array per layer of shape (B, heads, Lq, Lk)."""

    seg: tuple[int, ...]
    modalities: tuple[str, ...] = MODALITIES
    maps: dict[str, list[np.ndarray]] = field(default_factory=dict)
    masks: dict[str, np.ndarray | None] = field(default_factory=dict)

    def add(self, name: str, weights: np.ndarray, mask: np.ndarray | None) -> None:
        self.maps.setdefault(name, []).append(weights)
        self.masks[name] = mask

    def __len__(self) -> int:
        return sum(m.shape[1] for maps in self.maps.values() for m in maps)


def concat_mge(x_t: Tensor, x_v: Tensor, x_a: Tensor) -> MGE:
    xs = (x_t, x_v, x_a)
    dims = {x.shape[-1] for x in xs}
    if len(dims) != 1:
        raise ShapeError(f"feature dims differ: {[x.shape for x in xs]}")
    return MGE(T.concat(list(xs), axis=-2), tuple(x.shape[-2] for x in xs))


def _mask_matrix(mask) -> np.ndarray | None:
    if mask is None:
        return None
    return mask.matrix if isinstance(mask, BlockMask) else np.asarray(mask)


class MultiHeadAttention(Module):
    """Multi-head attention with an additive mask; queries from ``x``, keys/values from ``source``."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, dropout: float = 0.0,
                 dropout_position: str = "post"):
        if d_model % heads:
            raise ValueError(f"d_model={d_model} is not divisible by heads={heads}")
        self.heads = heads
        self.d_model = d_model
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.o = Linear(d_model, d_model, rng)
        self.dropout = Dropout(dropout)
        self.dropout_position = dropout_position

    def forward(self, x: Tensor, mask=None, source: Tensor | None = None,
                record: AttentionRecord | None = None, name: str = "attn") -> Tensor:
        src = x if source is None else source
        if x.ndim != 3 or src.ndim != 3 or x.shape[-1] != self.d_model or src.shape[-1] != self.d_model:
            raise ShapeError(f"attention expects (B, L, {self.d_model}) inputs, got {x.shape} and {src.shape}")
        B, Lq, d = x.shape
        Lk = src.shape[1]
        h, dh = self.heads, d // self.heads
        mask = _mask_matrix(mask)
        if mask is not None:
            if mask.shape != (Lq, Lk):
                raise ShapeError(f"mask shape {mask.shape} does not match attention ({Lq}, {Lk})")
            if (mask <= NEG_INF / 2).all(axis=-1).any():
                raise FullyMaskedRowError("fully-masked row")

        q = T.transpose(T.reshape(self.q(x), (B, Lq, h, dh)), (0, 2, 1, 3))
        k = T.transpose(T.reshape(self.k(src), (B, Lk, h, dh)), (0, 2, 3, 1))
        v = T.transpose(T.reshape(self.v(src), (B, Lk, h, dh)), (0, 2, 1, 3))
        scores = T.scale(T.matmul(q, k), 1.0 / math.sqrt(dh))
        if self.dropout_position == "pre":
            if mask is not None:
                scores = T.add_const(scores, mask)
            weights = T.softmax(self.dropout(scores))
        else:
            weights = T.softmax(scores, mask)
        if record is not None:
            record.add(name, weights.data.copy(), mask)
        if self.dropout_position == "post":
            weights = self.dropout(weights)
        mixed = T.matmul(weights, v)  # (B, h, Lq, dh)
        return self.o(T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (B, Lq, d)))


def masked_mha(values, mask, attn: MultiHeadAttention):
    """Apply ``attn`` to an MGE (or a bare ``(L, d)``/``(B, L, d)`` tensor) under ``mask``."""
    seg = values.seg if isinstance(values, MGE) else None
    x = values.values if isinstance(values, MGE) else values
    squeeze = x.ndim == 2
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    out = attn(x, mask)
    if squeeze:
        out = T.reshape(out, out.shape[1:])
    return MGE(out, seg) if seg is not None else out


class FeedForward(Module):
    def __init__(self, d: int, mult: int, rng: np.random.Generator, dropout: float = 0.0):
        self.fc1 = Linear(d, mult * d, rng)
        self.fc2 = Linear(mult * d, d, rng)
        self.dropout = Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.dropout(T.relu(self.fc1(x))))


class TransformerBlock(Module):
    """Pre-norm block: LN -> attention -> residual [-> LN -> FFN -> residual].

    With ``cross`` the keys/values come from a separately normalised source.
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dropout: float = 0.0,
                 ffn: bool = True, ffn_mult: int = 4, dropout_position: str = "post", cross: bool = False):
        self.norm = LayerNorm(d)
        self.source_norm = LayerNorm(d) if cross else None
        self.attn = MultiHeadAttention(d, heads, rng, dropout, dropout_position)
        self.ffn_norm = LayerNorm(d) if ffn else None
        self.ffn = FeedForward(d, ffn_mult, rng, dropout) if ffn else None

    def forward(self, x: Tensor, mask=None, source: Tensor | None = None,
                record: AttentionRecord | None = None, name: str = "attn") -> Tensor:
        src = None
        if self.source_norm is not None:
            if source is None:
                raise ValueError("cross-modal block needs a source sequence")
            src = self.source_norm(source)
        x = x + self.attn(self.norm(x), mask, src, record, name)
        if self.ffn is not None:
            x = x + self.ffn(self.ffn_norm(x))
        return x


class Transformer(Module):
    def __init__(self, d: int, heads: int, layers: int, rng: np.random.Generator, dropout: float = 0.0,
                 ffn: bool = True, ffn_mult: int = 4, dropout_position: str = "post", cross: bool = False):
        self.d = d
        self.blocks = [
            TransformerBlock(d, heads, rng, dropout, ffn, ffn_mult, dropout_position, cross) for _ in range(layers)
        ]

    def forward(self, x: Tensor, mask=None, source: Tensor | None = None,
                record: AttentionRecord | None = None, name: str = "transformer") -> Tensor:
        for block in self.blocks:
            x = block(x, mask, source, record, name)
        return x


def _subset_pattern(n: int, kind: str) -> np.ndarray:
    """Block grid for fewer than three modalities; one modality means no masking at all."""
    if n == 1:
        return np.ones((1, 1), dtype=bool)
    eye = np.eye(n, dtype=bool)
    return eye if kind == "intra" else ~eye


def _expand(pattern: np.ndarray, lengths: Sequence[int], dtype) -> np.ndarray:
    visible = np.repeat(np.repeat(pattern, lengths, axis=0), lengths, axis=1)
    return np.where(visible, 0.0, NEG_INF).astype(dtype)


class GsiT(Module):
    """Forward ring, backward ring and intra-enhancement transformers."""

    def __init__(self, config: GsiTConfig, rng: np.random.Generator, modalities: Sequence[str] = MODALITIES):
        self.config = config
        self.modalities = tuple(modalities)
        if not self.modalities or any(m not in MODALITIES for m in self.modalities):
            raise ValueError(f"modalities must be a non-empty subset of {MODALITIES}, got {modalities}")
        c = config
        kw = dict(dropout=c.dropout, ffn=c.ffn, ffn_mult=c.ffn_mult, dropout_position=c.dropout_position)
        self.forward_ring = Transformer(c.d_model, c.heads, c.layers, rng, **kw)
        self.backward_ring = Transformer(c.d_model, c.heads, c.layers, rng, **kw)
        self.enhance = Transformer(2 * c.d_model, c.heads, c.layers, rng, **kw)
        self._mask_cache: dict = {}

    @property
    def out_dim(self) -> int:
        return 2 * self.config.d_model * len(self.modalities)

    def masks(self, seg: Sequence[int]) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray | None]:
        """(forward, backward, intra) additive masks for the given segment lengths."""
        seg = tuple(int(s) for s in seg)
        dtype = T.get_default_dtype()
        key = (seg, self.config.structure, np.dtype(dtype).str)
        if key not in self._mask_cache:
            if len(seg) == 3:
                fwd = gen_structure_mask(seg, self.config.structure, "forward", dtype).matrix
                bwd = gen_structure_mask(seg, self.config.structure, "backward", dtype).matrix
                intra = gen_interlaced_mask(seg, "intra", dtype=dtype).matrix
            elif len(seg) == 2:
                fwd = bwd = _expand(_subset_pattern(2, "inter"), seg, dtype)
                intra = _expand(_subset_pattern(2, "intra"), seg, dtype)
            else:
                fwd = bwd = intra = None
            self._mask_cache[key] = (fwd, bwd, intra)
        return self._mask_cache[key]

    def forward(self, *xs: Tensor, lengths: Sequence[np.ndarray] | None = None,
                record: bool = False) -> tuple[Tensor, AttentionRecord | None]:
        """Fuse one ``(B, T_u, d_model)`` sequence per configured modality into ``(B, 2 * d_model * n)``.

        ``lengths`` (one int array per modality) selects the last valid step of
        each padded segment; without it the last position is used.
        """
        if len(xs) != len(self.modalities):
            raise ValueError(f"expected {len(self.modalities)} modality inputs, got {len(xs)}")
        d = self.config.d_model
        for x in xs:
            if x.ndim != 3 or x.shape[-1] != d:
                raise ShapeError(f"GsiT expects (B, T, {d}) inputs, got {x.shape}")
        seg = tuple(x.shape[1] for x in xs)
        rec = AttentionRecord(seg, self.modalities) if record else None
        fwd_mask, bwd_mask, intra_mask = self.masks(seg)

        mge = T.concat(list(xs), axis=1)
        fused_fwd = self.forward_ring(mge, fwd_mask, record=rec, name="forward")
        fused_bwd = self.backward_ring(mge, bwd_mask, record=rec, name="backward")
        bidirectional = T.concat([fused_fwd, fused_bwd], axis=-1)
        enhanced = self.enhance(bidirectional, intra_mask, record=rec, name="enhance")

        finals = []
        for i, part in enumerate(T.split(enhanced, list(seg), axis=1)):
            if lengths is None:
                last = np.full(part.shape[0], part.shape[1] - 1)
            else:
                last = np.asarray(lengths[i]) - 1
            finals.append(T.pick(part, last))
        return T.concat(finals, axis=-1), rec


def export_attention(record: AttentionRecord, path, sample: int = 0) -> list[Path]:
    """Write one MFT file per (transformer, layer, head) plus ``index.json``."""
    if record is None or len(record) == 0:
        raise ValueError("no attention maps recorded")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write attention maps to {out}: {exc}") from exc
    names = list(record.maps)
    bounds = np.cumsum((0,) + tuple(record.seg)).tolist()
    entries, files = [], []
    for name in names:
        for layer, weights in enumerate(record.maps[name]):
            for head in range(weights.shape[1]):
                fname = f"{name}_l{layer}_h{head}.mft"
                write_mft(out / fname, weights[sample, head])
                files.append(out / fname)
                entries.append({"transformer": name, "layer": layer, "head": head, "file": fname})
    index = {"seg": list(record.seg), "modalities": list(record.modalities),
             "boundaries": bounds, "sample": sample, "maps": entries}
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))
    return files
