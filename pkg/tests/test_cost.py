import csv
import io
import json

import numpy as np
import pytest

from gsifn import tensor as T
from gsifn.cost import (
    attention_flops,
    count_params,
    cost_report,
    gsit_flops,
    linear_params,
    matmul_flops,
    model_flops,
    model_params,
)
from gsifn.encoding import Batch
from gsifn.gsit import GsiTConfig, MultiHeadAttention
from gsifn.model import ModelConfig, build_model
from gsifn.nn import Linear
from gsifn.tensor import Tensor


def one_sample_batch(cfg: ModelConfig, seg, rng) -> Batch:
    lengths = dict(zip("tva", seg))
    inputs = {}
    for u in "tva":
        if u == "t" and cfg.text_input == "tokens":
            inputs[u] = rng.integers(3, cfg.vocab, size=(1, lengths[u]))
        else:
            inputs[u] = rng.normal(size=(1, lengths[u], cfg.input_dims[u])).astype(np.float32)
    return Batch(["x"], np.zeros(1), inputs, {u: np.array([n]) for u, n in lengths.items()})


def test_linear_params():
    assert linear_params(4, 3) == 15
    assert count_params(Linear(4, 3, T.make_rng(0)))["total"] == 15


def test_attention_params():
    assert count_params(MultiHeadAttention(8, 2, T.make_rng(0)))["total"] == 288 == 4 * (8 * 8 + 8)


def test_single_matmul_flops():
    assert matmul_flops(2, 3, 4) == 48
    with T.count_ops() as c:
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
    assert c.matmul == 48


def test_attention_decomposition():
    L, d = 10, 16
    f = attention_flops(L, L, d, 4)
    assert f.matmul == 4 * 2 * L * d * d + 2 * (2 * L * L * d)


def test_scaling_law():
    cfg = GsiTConfig(d_model=16, heads=4)
    base = gsit_flops(cfg, (3, 4, 5)).matmul
    double = gsit_flops(cfg, (6, 8, 10)).matmul
    quad = gsit_flops(cfg, (12, 16, 20)).matmul
    # matmul = a * L + b * L^2 with a the projections and b the score/mixing products
    b = (double - 2 * base) / 2
    a = base - b
    assert a > 0 and b > 0
    assert quad == 4 * a + 16 * b
    L = 12
    per_transformer = lambda width: 2 * L * L * width + 2 * L * L * width  # scores plus value mixing
    assert b == 2 * per_transformer(16) + per_transformer(32)  # two rings at d, enhancement at 2d


@pytest.mark.parametrize("model", ["gsifn", "mult"])
@pytest.mark.parametrize("mode", ["parallel", "recurrent"])
@pytest.mark.parametrize("text_input", ["features", "tokens"])
def test_instrumented_matmul_count_matches(model, mode, text_input):
    cfg = ModelConfig(model=model, d_model=8, heads=2, dropout=0.0, mlstm_blocks=2, mlstm_mode=mode,
                      text_input=text_input, vocab=20, hidden_width=6)
    seg = (3, 5, 4)
    net = build_model(cfg, 0).eval()
    batch = one_sample_batch(cfg, seg, np.random.default_rng(0))
    with T.count_ops() as c:
        net(batch)
    analytic = sum(f.matmul for f in model_flops(cfg, seg).values())
    assert c.matmul == analytic


@pytest.mark.parametrize("model", ["gsifn", "mult"])
@pytest.mark.parametrize("text_input", ["features", "tokens"])
@pytest.mark.parametrize("modalities", [("t", "v", "a"), ("t", "a")])
def test_analytic_params_match_instance(model, text_input, modalities):
    cfg = ModelConfig(model=model, d_model=8, heads=2, mlstm_blocks=1, text_input=text_input, vocab=30,
                      modalities=modalities)
    net = build_model(cfg, 0)
    counted = count_params(net)
    assert counted["total"] == sum(model_params(cfg).values())
    assert counted["breakdown"].get("fusion") == model_params(cfg)["fusion"]


@pytest.mark.parametrize("d", [32, 128])
@pytest.mark.parametrize("heads", [2, 4])
@pytest.mark.parametrize("seg", [(8, 8, 8), (5, 38, 50)])
def test_mult_costs_at_least_three_times_gsit(d, heads, seg):
    g = cost_report(ModelConfig(model="gsifn", d_model=d, heads=heads), seg).flops_breakdown["fusion"]
    m = cost_report(ModelConfig(model="mult", d_model=d, heads=heads), seg).flops_breakdown["fusion"]
    gp = model_params(ModelConfig(model="gsifn", d_model=d, heads=heads))["fusion"]
    mp = model_params(ModelConfig(model="mult", d_model=d, heads=heads))["fusion"]
    assert mp / gp >= 3
    assert m["total"] / g["total"] >= 3


def test_report_serialisation():
    cfg = ModelConfig(d_model=8, heads=2, mlstm_blocks=1)
    report = cost_report(cfg, (2, 3, 4), build_model(cfg, 0))
    data = json.loads(report.to_json())
    assert data["params"] > 0 and data["flops"] == data["flops_matmul"] + data["flops_elementwise"] > 0
    assert data["transformers"] == 3 and "2mkn" in data["convention"]
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert rows[0]["seg"] == "2x3x4" and int(rows[0]["params"]) == report.params
    assert cost_report(ModelConfig(model="mult", d_model=8, heads=2), (2, 3, 4)).transformers == 9
