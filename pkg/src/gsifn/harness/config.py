"""Run configuration: nested dataclasses loaded from and saved as flat dotted-key JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..masking import MODALITIES, STRUCTURES
from ..model import ModelConfig
from ..ulgm import ULGMConfig


@dataclass
class OptimConfig:
    lr_text: float = 5e-5
    lr_audio: float = 5e-5
    lr_video: float = 5e-5
    lr_other: float = 5e-4
    wd_text: float = 1e-3
    wd_audio: float = 1e-3
    wd_video: float = 1e-3
    wd_other: float = 1e-3

    def groups(self) -> dict[str, tuple[float, float]]:
        return {g: (getattr(self, f"lr_{g}"), getattr(self, f"wd_{g}")) for g in ("text", "audio", "video", "other")}


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    target_mae: float | None = None  # stop early once validation MAE falls below this
    dtype: str = "float32"
    bit_exact: bool = False


@dataclass
class DataConfig:
    manifest: str = ""
    train_fraction: float = 0.70
    val_fraction: float = 0.15


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    ulgm: ULGMConfig = field(default_factory=ULGMConfig)
    seed: int = 0

    def to_flat(self) -> dict:
        return to_flat(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_flat(), sort_keys=True, indent=2) + "\n")

    def validate(self, check_paths: bool = True) -> "RunConfig":
        if self.train.epochs < 1 or self.train.batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")
        if self.model.structure not in STRUCTURES:
            raise ValueError(f"unknown structure id '{self.model.structure}'")
        if check_paths and self.data.manifest and not Path(self.data.manifest).exists():
            raise FileNotFoundError(f"manifest not found: {self.data.manifest}")
        if not 0 < self.data.train_fraction < 1 or not 0 <= self.data.val_fraction < 1:
            raise ValueError("split fractions must lie in (0, 1)")
        return self


# flat key -> (section, field); "model" alone selects the architecture
_ALIASES: dict[str, tuple[str, str]] = {
    "model": ("model", "model"),
    "seed": ("", "seed"),
    "structure": ("model", "structure"),
    "gsit.d_model": ("model", "d_model"),
    "gsit.heads": ("model", "heads"),
    "gsit.layers": ("model", "layers"),
    "gsit.dropout": ("model", "dropout"),
    "gsit.ffn": ("model", "ffn"),
    "gsit.ffn_mult": ("model", "ffn_mult"),
    "gsit.structure": ("model", "structure"),
    "attn.dropout_position": ("model", "dropout_position"),
    "mlstm.blocks": ("model", "mlstm_blocks"),
    "mlstm.forget": ("model", "mlstm_forget"),
    "mlstm.stabilize": ("model", "mlstm_stabilize"),
    "mlstm.mode": ("model", "mlstm_mode"),
    "model.hidden_width": ("model", "hidden_width"),
    "model.text_input": ("model", "text_input"),
    "model.vocab": ("model", "vocab"),
    "model.modalities": ("model", "modalities"),
    "model.kernels": ("model", "kernels"),
    "model.input_dims": ("model", "input_dims"),
}
for _sec, _cls in (("optim", OptimConfig), ("train", TrainConfig), ("data", DataConfig), ("ulgm", ULGMConfig)):
    for _f in fields(_cls):
        _ALIASES[f"{_sec}.{_f.name}"] = (_sec, _f.name)


def to_flat(cfg: RunConfig) -> dict:
    flat = {}
    for key, (sec, name) in _ALIASES.items():
        if key == "structure":  # short alias of gsit.structure
            continue
        obj = cfg if not sec else getattr(cfg, sec)
        value = getattr(obj, name)
        flat[key] = list(value) if isinstance(value, tuple) else value
    return flat


def from_flat(flat: dict) -> RunConfig:
    unknown = sorted(set(flat) - set(_ALIASES))
    if unknown:
        raise KeyError(f"unknown config keys: {unknown}")
    sections: dict[str, dict] = {"model": {}, "optim": {}, "train": {}, "data": {}, "ulgm": {}}
    seed = 0
    for key, value in flat.items():
        sec, name = _ALIASES[key]
        if not sec:
            seed = int(value)
        else:
            sections[sec][name] = value
    m = sections["model"]
    if "modalities" in m:
        mods = m["modalities"]
        m["modalities"] = tuple(mods.split(",") if isinstance(mods, str) else mods)
        if any(u not in MODALITIES for u in m["modalities"]):
            raise ValueError(f"model.modalities must be drawn from {MODALITIES}")
    return RunConfig(ModelConfig(**m), OptimConfig(**sections["optim"]), TrainConfig(**sections["train"]),
                     DataConfig(**sections["data"]), ULGMConfig(**sections["ulgm"]), seed)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    flat = {}
    if path is not None:
        try:
            flat = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path}: invalid JSON ({exc.msg})") from None
        if not isinstance(flat, dict):
            raise ValueError(f"config {path}: expected a JSON object of dotted keys")
    flat.update(overrides or {})
    return from_flat(flat)


def standard_config(manifest: str = "", seed: int = 0) -> RunConfig:
    """Desk-scale settings used for the synthetic learning and ablation checks."""
    flat = {
        "seed": seed,
        "gsit.d_model": 32,
        "gsit.heads": 4,
        "gsit.dropout": 0.1,
        "mlstm.blocks": 1,
        "optim.lr_audio": 1e-3,
        "optim.lr_video": 1e-3,
        "optim.lr_other": 2e-3,
        "train.epochs": 50,
        "train.batch_size": 32,
        "data.manifest": manifest,
    }
    return from_flat(flat)


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
