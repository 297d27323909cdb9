"""Parameter counts and analytic FLOP estimates.

FLOP convention (one forward pass, batch of one):

* every matrix product ``(m x k) @ (k x n)`` costs ``2 m k n``; this covers linear
  layers (bias excluded), Conv1D (``2 T k c_in c_out``) and both attention
  products (``2 Lq Lk d`` for scores and again for value mixing);
* softmax and layer-norm cost 5 flops per element;
* bias adds, residual adds, activations, gates and other elementwise work cost
  1 flop per output element.

The matrix-product part is exact: it equals what :func:`gsifn.tensor.count_ops`
records during a real forward pass.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

from .gsit import GsiTConfig
from .masking import MODALITIES
from .mlstm import MLSTMConfig
from .model import ModelConfig, count_transformers
from .mult import CrossModalConfig
from .nn import Module

CONVENTION = "matmul (m x k)(k x n) = 2mkn flops, bias excluded; softmax/layer-norm 5 flops per element; other elementwise 1 flop per element; batch 1"
NORM_FLOPS = 5


@dataclass
class Flops:
    matmul: int = 0
    elementwise: int = 0

    @property
    def total(self) -> int:
        return self.matmul + self.elementwise

    def __add__(self, other: "Flops") -> "Flops":
        return Flops(self.matmul + other.matmul, self.elementwise + other.elementwise)

    def __mul__(self, k: int) -> "Flops":
        return Flops(self.matmul * k, self.elementwise * k)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"matmul": self.matmul, "elementwise": self.elementwise, "total": self.total}


# --- parameters ---------------------------------------------------------------


def linear_params(d_in: int, d_out: int, bias: bool = True) -> int:
    return d_in * d_out + (d_out if bias else 0)


def mha_params(d: int) -> int:
    return 4 * linear_params(d, d)


def block_params(d: int, ffn: bool = True, ffn_mult: int = 4, cross: bool = False) -> int:
    n = 2 * d + mha_params(d)
    if cross:
        n += 2 * d
    if ffn:
        n += 2 * d + linear_params(d, ffn_mult * d) + linear_params(ffn_mult * d, d)
    return n


def transformer_params(d: int, layers: int, ffn: bool = True, ffn_mult: int = 4, cross: bool = False) -> int:
    return layers * block_params(d, ffn, ffn_mult, cross)


def gsit_params(c: GsiTConfig) -> int:
    return 2 * transformer_params(c.d_model, c.layers, c.ffn, c.ffn_mult) + transformer_params(
        2 * c.d_model, c.layers, c.ffn, c.ffn_mult)


def mult_params(c: CrossModalConfig, n_modalities: int = 3) -> int:
    pairs = n_modalities * (n_modalities - 1)
    width = c.d_model * (n_modalities - 1)
    return (pairs * transformer_params(c.d_model, c.layers, c.ffn, c.ffn_mult, cross=True)
            + n_modalities * transformer_params(width, c.self_layers, c.ffn, c.ffn_mult))


def mlstm_params(c: MLSTMConfig) -> int:
    d = c.input_dim
    return c.num_blocks * (2 * d + 4 * linear_params(d, d) + 2 * linear_params(d, 1))


def model_params(c: ModelConfig) -> dict[str, int]:
    """Analytic per-component parameter counts of a full model."""
    d, mods = c.d_model, c.modalities
    out = {}
    if c.text_input == "tokens":
        out["text_encoder"] = c.vocab * d
    text_in = d if c.text_input == "tokens" else c.input_dims["t"]
    dims_in = {"t": text_in, "v": c.input_dims["v"], "a": c.input_dims["a"]}
    out["proj"] = sum(c.kernels[u] * dims_in[u] * d + d for u in mods)
    out["mlstm"] = sum(mlstm_params(c.mlstm()) for u in mods if u in ("v", "a"))
    if c.model == "gsifn":
        out["fusion"] = gsit_params(c.gsit())
        fusion_out = 2 * d * len(mods)
    else:
        out["fusion"] = mult_params(c.crossmodal(), len(mods))
        fusion_out = d * (len(mods) - 1) * len(mods)
    w = c.hidden_width
    out["heads"] = linear_params(fusion_out, w) + linear_params(w, 1) + len(mods) * (
        linear_params(d, w) + linear_params(w, 1))
    return out


def count_params(module: Module) -> dict:
    """Exact learnable-scalar count of an instantiated module with a per-child breakdown."""
    breakdown: dict[str, int] = {}
    for name, p in module.named_parameters():
        top = name.split(".")[0]
        breakdown[top] = breakdown.get(top, 0) + p.size
    return {"total": sum(breakdown.values()), "breakdown": breakdown}


# --- FLOPs ----------------------------------------------------------------------


def matmul_flops(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


def linear_flops(rows: int, d_in: int, d_out: int, bias: bool = True) -> Flops:
    return Flops(matmul_flops(rows, d_in, d_out), rows * d_out if bias else 0)


def layer_norm_flops(rows: int, d: int) -> Flops:
    return Flops(0, NORM_FLOPS * rows * d)


def attention_flops(lq: int, lk: int, d: int, heads: int) -> Flops:
    """Projections, scores, softmax and value mixing of one multi-head attention."""
    f = linear_flops(lq, d, d) * 2 + linear_flops(lk, d, d) * 2  # q, o over queries; k, v over keys
    f += Flops(matmul_flops(lq, d, lk), lq * lk * heads)  # scores and their scaling
    f += Flops(0, NORM_FLOPS * heads * lq * lk)  # softmax
    f += Flops(matmul_flops(lq, lk, d), 0)  # value mixing
    return f


def block_flops(lq: int, lk: int, d: int, heads: int, ffn: bool = True, ffn_mult: int = 4,
                cross: bool = False) -> Flops:
    f = layer_norm_flops(lq, d) + attention_flops(lq, lk, d, heads) + Flops(0, lq * d)
    if cross:
        f += layer_norm_flops(lk, d)
    if ffn:
        f += layer_norm_flops(lq, d) + linear_flops(lq, d, ffn_mult * d) + Flops(0, lq * ffn_mult * d)
        f += linear_flops(lq, ffn_mult * d, d) + Flops(0, lq * d)
    return f


def transformer_flops(lq: int, lk: int, d: int, heads: int, layers: int, ffn: bool = True, ffn_mult: int = 4,
                      cross: bool = False) -> Flops:
    return block_flops(lq, lk, d, heads, ffn, ffn_mult, cross) * layers


def gsit_flops(c: GsiTConfig, seg: Sequence[int]) -> Flops:
    total = sum(seg)
    ring = transformer_flops(total, total, c.d_model, c.heads, c.layers, c.ffn, c.ffn_mult)
    enh = transformer_flops(total, total, 2 * c.d_model, c.heads, c.layers, c.ffn, c.ffn_mult)
    return ring * 2 + enh


def mult_flops(c: CrossModalConfig, seg: Sequence[int]) -> Flops:
    n = len(seg)
    f = Flops()
    for i, lt in enumerate(seg):
        for j, ls in enumerate(seg):
            if i != j:
                f += transformer_flops(lt, ls, c.d_model, c.heads, c.layers, c.ffn, c.ffn_mult, cross=True)
        f += transformer_flops(lt, lt, c.d_model * (n - 1), c.heads, c.self_layers, c.ffn, c.ffn_mult)
    return f


def mlstm_flops(c: MLSTMConfig, steps: int) -> Flops:
    """One stack of residual mLSTM blocks over a length-``steps`` sequence."""
    d, t = c.input_dim, steps
    per = layer_norm_flops(t, d) + linear_flops(t, d, d) * 4 + linear_flops(t, d, 1) * 2
    if c.mode == "parallel":
        per += Flops(matmul_flops(t, d, t) + matmul_flops(t, t, d), NORM_FLOPS * t * t + 2 * t * d + t * t)
    else:
        # per step: outer product v k^T and the read-out C q, both d x d
        per += Flops(t * (matmul_flops(d, 1, d) + matmul_flops(d, d, 1)), t * (3 * d * d + 5 * d))
    per += Flops(0, 3 * t * d)  # output gate, normaliser division, residual
    return per * c.num_blocks


def model_flops(c: ModelConfig, seg: Sequence[int]) -> dict[str, Flops]:
    """Per-component analytic FLOPs of a full model for one sample with lengths ``seg`` (t, v, a)."""
    lengths = dict(zip(MODALITIES, seg))
    mods = c.modalities
    d = c.d_model
    text_in = d if c.text_input == "tokens" else c.input_dims["t"]
    dims_in = {"t": text_in, "v": c.input_dims["v"], "a": c.input_dims["a"]}
    out: dict[str, Flops] = {}
    if c.text_input == "tokens" and "t" in mods:
        out["text_encoder"] = Flops(0, lengths["t"] * d)  # positional add
    out["proj"] = Flops()
    for u in mods:
        k, t = c.kernels[u], lengths[u]
        out["proj"] += Flops(matmul_flops(t, k * dims_in[u], d), t * d)
    out["mlstm"] = Flops()
    if c.mlstm_blocks > 0:
        for u in mods:
            if u in ("v", "a"):
                out["mlstm"] += mlstm_flops(c.mlstm(), lengths[u])
    sub = [lengths[u] for u in mods]
    if c.model == "gsifn":
        out["fusion"] = gsit_flops(c.gsit(), sub)
        fusion_out = 2 * d * len(mods)
    else:
        out["fusion"] = mult_flops(c.crossmodal(), sub)
        fusion_out = d * (len(mods) - 1) * len(mods)
    w = c.hidden_width
    heads = linear_flops(1, fusion_out, w) + linear_flops(1, w, 1) + Flops(0, w)
    for _ in mods:
        heads += linear_flops(1, d, w) + linear_flops(1, w, 1) + Flops(0, w)
    out["heads"] = heads
    return out


@dataclass
class CostReport:
    model: str
    seg: tuple[int, ...]
    params: int
    flops: int
    flops_matmul: int
    flops_elementwise: int
    transformers: int
    params_breakdown: dict[str, int] = field(default_factory=dict)
    flops_breakdown: dict[str, dict] = field(default_factory=dict)
    convention: str = CONVENTION

    CSV_FIELDS = ("model", "seg", "params", "flops", "flops_matmul", "flops_elementwise", "transformers")

    def to_dict(self) -> dict:
        return {"model": self.model, "seg": list(self.seg), "params": self.params, "flops": self.flops,
                "flops_matmul": self.flops_matmul, "flops_elementwise": self.flops_elementwise,
                "transformers": self.transformers, "params_breakdown": self.params_breakdown,
                "flops_breakdown": self.flops_breakdown, "convention": self.convention}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_row(self) -> dict:
        row = {k: getattr(self, k) for k in self.CSV_FIELDS}
        row["seg"] = "x".join(str(s) for s in self.seg)
        return row

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerow(self.csv_row())
        return buf.getvalue()


def count_flops(config: ModelConfig, seg: Sequence[int]) -> Flops:
    total = Flops()
    for f in model_flops(config, seg).values():
        total += f
    return total


def cost_report(config: ModelConfig, seg: Sequence[int], model: Module | None = None) -> CostReport:
    """Analytic cost of ``config``; with an instantiated ``model`` the parameter count is taken from it."""
    seg = tuple(int(s) for s in seg)
    if model is not None:
        counted = count_params(model)
        params, p_break = counted["total"], counted["breakdown"]
        n_tr = count_transformers(model)
    else:
        p_break = model_params(config)
        params = sum(p_break.values())
        n_tr = 3 if config.model == "gsifn" else len(config.modalities) ** 2
    f_break = model_flops(config, seg)
    total = count_flops(config, seg)
    return CostReport(config.model, seg, params, total.total, total.matmul, total.elementwise, n_tr,
                      p_break, {k: v.to_dict() for k, v in f_break.items()})
