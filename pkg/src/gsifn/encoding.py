"""Modal encoding front end: temporal projections, a toy text encoder and feature ingestion.

Dataset manifests are JSON lines, one sample per line::

    {"id": "s0001", "label": 1.2, "text": "s0001_t.mft" | [1, 17, 9, 2],
     "vision": "s0001_v.mft", "audio": "s0001_a.mft", "lengths": {"t": 4, "v": 30, "a": 28}}

Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .masking import MODALITIES
from .mft import read_mft
from .nn import Conv1d, Module
from .tensor import ShapeError, Tensor

DEFAULT_KERNELS = {"t": 1, "v": 3, "a": 3}
CLS_ID, SEP_ID, PAD_ID = 1, 2, 0


class AlignmentError(ValueError):
    pass


@dataclass
class RawModalSequence:
    modality: str
    values: np.ndarray  # (T, d) float features, or (T,) int token ids for text
    length: int

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality '{self.modality}'")
        if self.length < 1:
            raise ValueError(f"{self.modality}: sequence length must be >= 1")
        if self.values.shape[0] < self.length:
            raise ShapeError(f"{self.modality}: length {self.length} exceeds stored rows {self.values.shape[0]}")

    @property
    def is_tokens(self) -> bool:
        return self.values.ndim == 1

    @property
    def feature_dim(self) -> int:
        return 0 if self.is_tokens else self.values.shape[1]


@dataclass
class EncodedModal:
    values: Tensor  # (B, T, d_model)
    lengths: np.ndarray  # (B,)


class ModalProjection(Module):
    """Same-padded Conv1D from raw feature width to ``d_model``."""

    def __init__(self, d_in: int, d_model: int, rng: np.random.Generator, kernel: int = 3):
        self.conv = Conv1d(d_in, d_model, kernel, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


def conv1d_project(seq: Tensor, proj: ModalProjection, lengths: np.ndarray | None = None) -> EncodedModal:
    """Project ``(B, T, d_in)`` (or ``(T, d_in)``) features; sequence length is preserved."""
    squeeze = seq.ndim == 2
    x = T.reshape(seq, (1,) + seq.shape) if squeeze else seq
    out = proj(x)
    if lengths is None:
        lengths = np.full(out.shape[0], out.shape[1])
    if squeeze:
        out = T.reshape(out, out.shape[1:])
    return EncodedModal(out, np.asarray(lengths))


class ToyTextEncoder(Module):
    """Learned token embeddings plus fixed sinusoidal positions; position 0 holds [CLS]."""

    def __init__(self, vocab: int, d_model: int, rng: np.random.Generator):
        if vocab <= SEP_ID:
            raise ValueError(f"vocab must exceed the reserved ids, got {vocab}")
        self.vocab = vocab
        self.d_model = d_model
        self.embedding = T.parameter(rng.normal(0.0, d_model ** -0.5, size=(vocab, d_model)))

    def forward(self, ids) -> tuple[Tensor, int]:
        ids = np.asarray(ids)
        if not np.issubdtype(ids.dtype, np.integer):
            raise TypeError("token ids must be integers")
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab):
            raise ValueError(f"token id out of range for vocab {self.vocab}")
        squeeze = ids.ndim == 1
        ids2 = ids[None] if squeeze else ids
        if ids2.shape[1] < 1:
            raise ShapeError("token sequence is empty")
        emb = T.embedding(self.embedding, ids2)
        pos = T.sinusoidal_positions(ids2.shape[1], self.d_model, emb.dtype)
        out = T.add_const(emb, pos)
        return (T.reshape(out, out.shape[1:]) if squeeze else out), 0


def wrap_tokens(body: Sequence[int]) -> list[int]:
    return [CLS_ID, *body, SEP_ID]


@dataclass
class ManifestEntry:
    id: str
    label: float
    text: str | list[int]
    vision: str
    audio: str
    lengths: dict[str, int]
    root: Path = field(default_factory=Path, compare=False)

    @classmethod
    def from_json(cls, record: dict, root: Path) -> "ManifestEntry":
        missing = {"id", "label", "text", "vision", "audio", "lengths"} - set(record)
        if missing:
            raise ValueError(f"manifest record missing fields {sorted(missing)}")
        lengths = record["lengths"]
        if not isinstance(lengths, dict) or set(lengths) != set(MODALITIES):
            raise ValueError(f"sample {record['id']}: lengths must have keys t, v, a")
        return cls(str(record["id"]), float(record["label"]), record["text"], record["vision"], record["audio"],
                   {k: int(v) for k, v in lengths.items()}, root)

    def to_json(self) -> dict:
        return {"id": self.id, "label": self.label, "text": self.text, "vision": self.vision,
                "audio": self.audio, "lengths": dict(self.lengths)}

    def source(self, modality: str):
        return {"t": self.text, "v": self.vision, "a": self.audio}[modality]


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            entries.append(ManifestEntry.from_json(record, path.parent))
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise AlignmentError("duplicate sample ids in manifest")
    return entries


def write_manifest(path, entries: Iterable[ManifestEntry]) -> None:
    with open(path, "w") as f:
        for e in entries:
            f.write(json.dumps(e.to_json(), sort_keys=True) + "\n")


def load_features(entry: ManifestEntry, modality: str) -> RawModalSequence:
    """Read one modality of a manifest sample, cut to its declared length."""
    src = entry.source(modality)
    length = entry.lengths[modality]
    if isinstance(src, list):
        if modality != "t":
            raise ValueError(f"sample {entry.id}: only text may be given as token ids")
        values = np.asarray(src, dtype=np.int64)
    else:
        path = Path(src)
        if not path.is_absolute():
            path = entry.root / path
        if not path.exists():
            raise FileNotFoundError(f"sample {entry.id}: feature file not found: {path}")
        values = read_mft(path)
        if values.ndim != 2:
            raise ShapeError(f"sample {entry.id}/{modality}: expected a (T, d) tensor, got shape {values.shape}")
    seq = RawModalSequence(modality, values, length)
    seq.values = seq.values[:length]
    return seq


@dataclass
class Sample:
    id: str
    label: float
    seqs: dict[str, RawModalSequence]


def join_by_id(per_modality: dict[str, dict[str, RawModalSequence]], labels: dict[str, float]) -> list[Sample]:
    """Assemble samples from per-modality collections keyed by sample id; any id mismatch is an error."""
    keys = {m: set(d) for m, d in per_modality.items()}
    reference = set(labels)
    for m, ks in keys.items():
        if ks != reference:
            diff = sorted(ks ^ reference)[:5]
            raise AlignmentError(f"modality '{m}' is misaligned with the labels (ids differ: {diff})")
    return [Sample(i, labels[i], {m: per_modality[m][i] for m in per_modality}) for i in sorted(reference)]


def load_dataset(manifest_path) -> list[Sample]:
    entries = read_manifest(manifest_path)
    samples = [Sample(e.id, e.label, {m: load_features(e, m) for m in MODALITIES}) for e in entries]
    for m in MODALITIES:
        dims = {s.seqs[m].feature_dim for s in samples}
        if len(dims) > 1:
            raise ShapeError(f"modality '{m}' has inconsistent feature dims {sorted(dims)}")
    return samples


@dataclass
class Batch:
    ids: list[str]
    labels: np.ndarray  # (B,)
    inputs: dict[str, np.ndarray]  # (B, T_max, d) zero-padded, or (B, T_max) int ids for text
    lengths: dict[str, np.ndarray]  # (B,) true lengths

    def __len__(self) -> int:
        return len(self.ids)


def make_batch(samples: Sequence[Sample], dtype=None) -> Batch:
    """Left-align and zero-pad every modality to the batch maximum length."""
    if not samples:
        raise ValueError("cannot batch zero samples")
    dtype = dtype or T.get_default_dtype()
    inputs, lengths = {}, {}
    for m in MODALITIES:
        seqs = [s.seqs[m] for s in samples]
        n = np.array([s.length for s in seqs])
        t_max = int(n.max())
        if seqs[0].is_tokens:
            arr = np.full((len(seqs), t_max), PAD_ID, dtype=np.int64)
        else:
            arr = np.zeros((len(seqs), t_max, seqs[0].feature_dim), dtype=dtype)
        for i, s in enumerate(seqs):
            arr[i, : s.length] = s.values[: s.length]
        inputs[m], lengths[m] = arr, n
    labels = np.array([s.label for s in samples], dtype=np.float64)
    return Batch([s.id for s in samples], labels, inputs, lengths)
