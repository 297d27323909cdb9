"""End-to-end models: modal encoders, mLSTM enhancers, a fusion module and the hidden-state heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .encoding import DEFAULT_KERNELS, Batch, ModalProjection, ToyTextEncoder
from .gsit import GsiT, GsiTConfig, Transformer
from .masking import MODALITIES
from .mlstm import MLSTMConfig, MLSTMStack
from .mult import CrossModalConfig, MulTFusion
from .nn import Module
from .tensor import Tensor
from .ulgm import HiddenHeads, HiddenStates, extract_hidden


@dataclass
class ModelConfig:
    model: str = "gsifn"  # or "mult"
    d_model: int = 128
    heads: int = 4
    layers: int = 1
    dropout: float = 0.2
    ffn: bool | None = None  # GsiT: attention-only by default; MulT: with FFN by default
    ffn_mult: int = 4
    dropout_position: str = "post"
    structure: str = "original"
    mlstm_blocks: int = 4
    mlstm_forget: str = "sigmoid"
    mlstm_stabilize: bool = True
    mlstm_mode: str = "parallel"
    hidden_width: int | None = None  # defaults to d_model
    text_input: str = "features"  # or "tokens"
    vocab: int = 1000
    input_dims: dict[str, int] = field(default_factory=lambda: {"t": 16, "v": 12, "a": 8})
    kernels: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_KERNELS))
    modalities: tuple[str, ...] = MODALITIES

    def __post_init__(self):
        if self.model not in ("gsifn", "mult"):
            raise ValueError(f"model must be 'gsifn' or 'mult', got {self.model!r}")
        if self.text_input not in ("features", "tokens"):
            raise ValueError(f"text_input must be 'features' or 'tokens', got {self.text_input!r}")
        self.modalities = tuple(m for m in MODALITIES if m in self.modalities)
        if not self.modalities:
            raise ValueError("at least one modality is required")
        if self.hidden_width is None:
            self.hidden_width = self.d_model
        for k in ("kernels", "input_dims"):
            missing = set(MODALITIES) - set(getattr(self, k))
            if missing:
                raise ValueError(f"{k} missing modalities {sorted(missing)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modalities"] = list(self.modalities)
        return d

    def gsit(self) -> GsiTConfig:
        return GsiTConfig(self.d_model, self.heads, self.layers, bool(self.ffn) if self.ffn is not None else False,
                          self.ffn_mult, self.dropout, self.dropout_position, self.structure)

    def crossmodal(self) -> CrossModalConfig:
        return CrossModalConfig(self.d_model, self.heads, self.layers, self.dropout,
                                True if self.ffn is None else bool(self.ffn), self.ffn_mult)

    def mlstm(self) -> MLSTMConfig:
        return MLSTMConfig(self.d_model, self.d_model, self.mlstm_blocks, self.mlstm_forget, self.mlstm_stabilize,
                           self.mlstm_mode)


class FusionModel(Module):
    """Encoders -> fusion (GsiT or cross-modal baseline) -> heads; vision/audio also pass through mLSTM for ULGM."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        c = config
        self.text_encoder = ToyTextEncoder(c.vocab, c.d_model, rng) if c.text_input == "tokens" else None
        text_in = c.d_model if c.text_input == "tokens" else c.input_dims["t"]
        dims_in = {"t": text_in, "v": c.input_dims["v"], "a": c.input_dims["a"]}
        self.proj = [ModalProjection(dims_in[u], c.d_model, rng, c.kernels[u]) for u in c.modalities]
        self.mlstm = [
            MLSTMStack(c.mlstm(), rng) if u in ("v", "a") and c.mlstm_blocks > 0 else None for u in c.modalities
        ]
        if c.model == "gsifn":
            self.fusion = GsiT(c.gsit(), rng, c.modalities)
        else:
            self.fusion = MulTFusion(c.crossmodal(), rng, c.modalities)
        head_dims = {"m": self.fusion.out_dim, **{u: c.d_model for u in c.modalities}}
        self.heads = HiddenHeads(head_dims, c.hidden_width, rng)

    def param_groups(self) -> dict[str, list[Tensor]]:
        """Parameters split into the text / audio / video / other optimiser groups."""
        groups: dict[str, list[Tensor]] = {"text": [], "audio": [], "video": [], "other": []}
        if self.text_encoder is not None:
            groups["text"] += self.text_encoder.parameters()
        for u, stack in zip(self.config.modalities, self.mlstm):
            if stack is not None:
                groups["audio" if u == "a" else "video"] += stack.parameters()
        for p in self.proj:
            groups["other"] += p.parameters()
        groups["other"] += self.fusion.parameters() + self.heads.parameters()
        return groups

    def encode(self, batch: Batch) -> dict[str, Tensor]:
        xs = {}
        for u, proj in zip(self.config.modalities, self.proj):
            raw = batch.inputs[u]
            if u == "t" and self.text_encoder is not None:
                x, _ = self.text_encoder(raw)
            else:
                x = Tensor(np.asarray(raw, dtype=T.get_default_dtype()))
            xs[u] = proj(x)
        return xs

    def forward(self, batch: Batch, record: bool = False):
        xs = self.encode(batch)
        mods = self.config.modalities
        x_m, rec = self.fusion(*(xs[u] for u in mods), lengths=[batch.lengths[u] for u in mods], record=record)
        enhanced = dict(xs)
        for u, stack in zip(mods, self.mlstm):
            if stack is not None:
                enhanced[u] = stack(xs[u])
        hidden: HiddenStates = extract_hidden(self.heads, enhanced.get("t"), enhanced.get("v"), enhanced.get("a"),
                                              x_m, batch.lengths)
        return hidden, rec


def build_model(config: ModelConfig, seed_or_rng) -> FusionModel:
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else T.make_rng(seed_or_rng)
    return FusionModel(config, rng)


def count_transformers(module: Module) -> int:
    return sum(isinstance(m, Transformer) for m in module.modules())
