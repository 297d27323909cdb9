"""Synthetic trimodal sentiment data with a known label and per-modality noise level.

Every modality carries the label as a fixed direction ``p_u`` scaled by ``y / 3``;
vision and audio modulate it with a per-sample sinusoidal envelope while text is
constant over time. Gaussian noise of standard deviation ``1 / snr_u`` is added
(``snr = inf`` means noise-free). Sequence lengths are drawn uniformly from
per-modality ranges.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..encoding import ManifestEntry, write_manifest
from ..masking import MODALITIES
from ..mft import write_mft
from ..tensor import make_rng


@dataclass
class SynthSpec:
    n_samples: int = 715
    lengths: dict[str, tuple[int, int]] = field(default_factory=lambda: {"t": (18, 20), "v": (26, 30), "a": (26, 30)})
    dims: dict[str, int] = field(default_factory=lambda: {"t": 16, "v": 12, "a": 8})
    snr: dict[str, float] = field(default_factory=lambda: {"t": 0.4, "v": 0.3, "a": 0.25})
    label_min: float = -3.0
    label_max: float = 3.0
    label_step: float = 0.2
    envelope_period: float = 8.0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        for u in MODALITIES:
            lo, hi = self.lengths[u]
            if lo < 1 or hi < lo:
                raise ValueError(f"bad length range for '{u}': {self.lengths[u]}")
            if self.snr[u] < 0:
                raise ValueError(f"snr for '{u}' must be >= 0")


def sample_id(i: int) -> str:
    return f"s{i:05d}"


def split_of(sid: str, train_fraction: float = 0.70, val_fraction: float = 0.15) -> str:
    """Stable train/val/test assignment from a hash of the sample id."""
    bucket = int.from_bytes(hashlib.sha256(sid.encode()).digest()[:8], "little") / 2.0 ** 64
    if bucket < train_fraction:
        return "train"
    if bucket < train_fraction + val_fraction:
        return "val"
    return "test"


def label_grid(spec: SynthSpec) -> np.ndarray:
    n = int(round((spec.label_max - spec.label_min) / spec.label_step)) + 1
    return np.round(np.linspace(spec.label_min, spec.label_max, n), 6)


def modality_directions(spec: SynthSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {u: rng.normal(size=spec.dims[u]) for u in MODALITIES}


def render(u: str, y: float, length: int, direction: np.ndarray, phase: float, snr: float, period: float,
           rng: np.random.Generator, label_scale: float = 3.0) -> np.ndarray:
    """One modality sequence ``(length, d)`` encoding label ``y``."""
    t = np.arange(length)
    env = np.ones(length) if u == "t" else 1.0 + 0.5 * np.sin(2 * math.pi * t / period + phase)
    x = (y / label_scale) * env[:, None] * direction[None, :]
    if snr != math.inf and snr > 0:
        x = x + rng.normal(scale=1.0 / snr, size=x.shape)
    elif snr == 0:
        x = rng.normal(size=x.shape)
    return x.astype(np.float32)


def synth_dataset(spec: SynthSpec, seed: int, out_dir) -> Path:
    """Write one MFT file per sample and modality plus ``manifest.jsonl``; returns the manifest path."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)
    directions = modality_directions(spec, rng)
    grid = label_grid(spec)
    scale = (spec.label_max - spec.label_min) / 2
    entries = []
    for i in range(spec.n_samples):
        sid = sample_id(i)
        y = float(grid[rng.integers(len(grid))])
        phase = float(rng.uniform(0, 2 * math.pi))
        lengths, files = {}, {}
        for u in MODALITIES:
            lo, hi = spec.lengths[u]
            n = int(rng.integers(lo, hi + 1))
            seq = render(u, y, n, directions[u], phase, spec.snr[u], spec.envelope_period, rng, scale)
            rel = f"features/{sid}_{u}.mft"
            write_mft(out / rel, seq)
            lengths[u], files[u] = n, rel
        entries.append(ManifestEntry(sid, y, files["t"], files["v"], files["a"], lengths))
    manifest = out / "manifest.jsonl"
    write_manifest(manifest, entries)
    return manifest
