import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from gsifn.encoding import load_dataset, read_manifest
from gsifn.harness import cli
from gsifn.harness.config import RunConfig, from_flat, load_config, to_flat
from gsifn.harness.synth import SynthSpec, split_of, synth_dataset
from gsifn.harness.train import (
    LOG_HEADER,
    ConfigMismatchError,
    ablate,
    evaluate,
    load_checkpoint,
    mean_mae_by_structure,
    train,
)
from gsifn.mft import read_mft

SMALL = dict(lengths={"t": (3, 5), "v": (4, 6), "a": (4, 6)}, dims={"t": 6, "v": 5, "a": 4})


def tiny_flat(manifest, **extra):
    flat = {
        "gsit.d_model": 8,
        "gsit.heads": 2,
        "gsit.dropout": 0.0,
        "mlstm.blocks": 1,
        "model.input_dims": {"t": 6, "v": 5, "a": 4},
        "train.epochs": 1,
        "train.batch_size": 8,
        "data.manifest": str(manifest),
    }
    flat.update(extra)
    return flat


@pytest.fixture(scope="module")
def small_set(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return synth_dataset(SynthSpec(n_samples=40, **SMALL), 3, out)


def files_of(run: Path) -> dict[str, bytes]:
    return {str(p.relative_to(run)): p.read_bytes() for p in sorted(run.rglob("*")) if p.is_file()}


# --- synthetic data ------------------------------------------------------------


def test_synth_is_deterministic(tmp_path):
    spec = SynthSpec(n_samples=12, **SMALL)
    a = synth_dataset(spec, 5, tmp_path / "a")
    b = synth_dataset(spec, 5, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    assert files_of(tmp_path / "a") == files_of(tmp_path / "b")
    c = synth_dataset(spec, 6, tmp_path / "c")
    assert files_of(tmp_path / "a") != files_of(tmp_path / "c")


def test_synth_line_count(tmp_path):
    manifest = synth_dataset(SynthSpec(n_samples=100, **SMALL), 0, tmp_path)
    assert len(manifest.read_text().splitlines()) == 100
    entries = read_manifest(manifest)
    assert all(-3 <= e.label <= 3 for e in entries)
    for e in entries[:5]:
        assert read_mft(tmp_path / e.vision).shape == (e.lengths["v"], 5)


def test_noise_free_text_is_linearly_decodable(tmp_path):
    snr = {"t": math.inf, "v": 0.3, "a": 0.3}
    manifest = synth_dataset(SynthSpec(n_samples=60, snr=snr, **SMALL), 11, tmp_path)
    samples = load_dataset(manifest)
    X = np.stack([s.seqs["t"].values.mean(0) for s in samples])
    y = np.array([s.label for s in samples])
    A = np.concatenate([X, np.ones((len(X), 1))], 1)
    fit, *_ = np.linalg.lstsq(A[:40], y[:40], rcond=None)
    assert np.mean(np.abs(A[40:] @ fit - y[40:])) < 0.05


def test_split_is_stable_and_roughly_proportional():
    ids = [f"s{i:05d}" for i in range(2000)]
    splits = [split_of(i) for i in ids]
    assert splits == [split_of(i) for i in ids]
    frac = {k: splits.count(k) / len(ids) for k in ("train", "val", "test")}
    assert abs(frac["train"] - 0.70) < 0.04 and abs(frac["val"] - 0.15) < 0.04


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(n_samples=0)
    with pytest.raises(ValueError):
        SynthSpec(snr={"t": -1.0, "v": 1.0, "a": 1.0})


# --- config --------------------------------------------------------------------


def test_flat_config_roundtrip(tmp_path):
    cfg = from_flat({"gsit.d_model": 16, "structure": "self_only", "optim.lr_other": 0.01, "seed": 9,
                     "model.modalities": "t,a"})
    assert cfg.model.structure == "self_only" and cfg.model.modalities == ("t", "a")
    again = from_flat(to_flat(cfg))
    assert to_flat(again) == to_flat(cfg)
    cfg.save(tmp_path / "c.json")
    assert to_flat(load_config(tmp_path / "c.json")) == to_flat(cfg)


def test_unknown_key_and_bad_values():
    with pytest.raises(KeyError):
        from_flat({"gsit.width": 3})
    with pytest.raises(ValueError):
        from_flat({"structure": "ring"}).validate()
    with pytest.raises(FileNotFoundError):
        from_flat({"data.manifest": "/nonexistent/m.jsonl"}).validate()


def test_default_config_values():
    cfg = RunConfig()
    assert cfg.train.batch_size == 64
    assert cfg.model.heads == 4 and cfg.model.d_model == 128


# --- training ------------------------------------------------------------------


def test_one_epoch_writes_complete_run_dir(small_set, tmp_path):
    result = train(from_flat(tiny_flat(small_set)), tmp_path / "run", load_dataset(small_set)[:10])
    run = result.out_dir
    for name in ("config.json", "cost.json", "log.csv", "metrics.json", "checkpoint/manifest.json"):
        assert (run / name).exists(), name
    rows = list(csv.reader((run / "log.csv").open()))
    assert tuple(rows[0]) == LOG_HEADER and len(rows) == 2
    assert json.loads((run / "metrics.json").read_text())["epochs_run"] == 1


def test_zero_learning_rate_keeps_parameters(small_set, tmp_path):
    zero = {f"optim.lr_{g}": 0.0 for g in ("text", "audio", "video", "other")}
    zero.update({f"optim.wd_{g}": 0.0 for g in ("text", "audio", "video", "other")})
    cfg = from_flat(tiny_flat(small_set, **zero, **{"train.epochs": 2}))
    from gsifn.model import build_model
    from gsifn.harness.train import run_context

    with run_context(cfg):
        from gsifn import tensor as T

        init = build_model(cfg.model, T.split_rng(T.make_rng(cfg.seed), 3)[0]).state_dict()
    train(cfg, tmp_path / "run")
    trained, *_ = load_checkpoint(tmp_path / "run" / "checkpoint")
    after = trained.state_dict()
    assert init.keys() == after.keys()
    for k in init:
        assert np.array_equal(init[k], after[k]), k


def test_evaluate_is_reproducible_and_rejects_bad_input(small_set, tmp_path):
    train(from_flat(tiny_flat(small_set)), tmp_path / "run")
    ckpt = tmp_path / "run" / "checkpoint"
    a = evaluate(ckpt, small_set)
    b = evaluate(ckpt, small_set)
    assert a.to_json() == b.to_json()
    with pytest.raises(ValueError):
        evaluate(ckpt, [])
    other = synth_dataset(SynthSpec(n_samples=4, lengths=SMALL["lengths"], dims={"t": 6, "v": 7, "a": 4}), 0,
                          tmp_path / "other")
    with pytest.raises(ConfigMismatchError):
        evaluate(ckpt, other)


def test_overfit_run_fits_training_set_better(tmp_path):
    manifest = synth_dataset(SynthSpec(n_samples=32, snr={"t": 0.3, "v": 0.3, "a": 0.3}, **SMALL), 2,
                             tmp_path / "d")
    flat = tiny_flat(manifest, **{"gsit.d_model": 16, "train.epochs": 60, "optim.lr_other": 5e-3,
                                  "optim.lr_audio": 5e-3, "optim.lr_video": 5e-3, "optim.wd_other": 0.0})
    train(from_flat(flat), tmp_path / "run")
    ckpt = tmp_path / "run" / "checkpoint"
    assert evaluate(ckpt, manifest, "train").MAE < evaluate(ckpt, manifest, "val").MAE


def test_single_text_modality_trains(small_set, tmp_path):
    cfg = from_flat(tiny_flat(small_set, **{"model.modalities": ["t"], "train.epochs": 2}))
    result = train(cfg, tmp_path / "run")
    assert result.epochs_run == 2 and np.isfinite(result.best_val.MAE)
    model, *_ = load_checkpoint(tmp_path / "run" / "checkpoint")
    assert model.config.modalities == ("t",)


def test_bit_exact_runs_are_byte_identical(small_set, tmp_path):
    flat = tiny_flat(small_set, **{"train.bit_exact": True, "train.epochs": 2, "gsit.dropout": 0.2, "seed": 7})
    train(from_flat(flat), tmp_path / "a")
    train(from_flat(flat), tmp_path / "b")
    assert files_of(tmp_path / "a") == files_of(tmp_path / "b")


def test_empty_training_split_raises(small_set, tmp_path):
    with pytest.raises(ValueError):
        train(from_flat(tiny_flat(small_set)), tmp_path / "run", [])


def test_ablation_table(small_set, tmp_path):
    structures = ["original", "self_only", "structure1"]
    rows = ablate(from_flat(tiny_flat(small_set)), structures, tmp_path / "abl")
    assert [r["structure"] for r in rows] == structures
    assert len({(r["params"], r["flops"]) for r in rows}) == 1
    table = list(csv.DictReader((tmp_path / "abl" / "ablation.csv").open()))
    assert len(table) == 3 and set(mean_mae_by_structure(rows)) == set(structures)
    with pytest.raises(ValueError):
        ablate(from_flat(tiny_flat(small_set)), ["original"], tmp_path / "one")


# --- command line --------------------------------------------------------------


def test_cli_count(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"gsit.d_model": 16, "gsit.heads": 2}))
    assert cli.main(["count", "--config", str(tmp_path / "c.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["params"] > 0 and report["transformers"] == 3


def test_cli_dump_masks(tmp_path, capsys):
    assert cli.main(["dump-masks", "--seg", "4,3,2", "--structure", "original", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["backward.mft", "forward.mft", "intra.mft", "patterns.json"]
    assert read_mft(tmp_path / "forward.mft").shape == (9, 9)
    patterns = json.loads((tmp_path / "patterns.json").read_text())
    assert patterns["intra"] == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]


def test_cli_train_eval_and_attention(small_set, tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps(tiny_flat(small_set)))
    assert cli.main(["train", "--config", str(tmp_path / "c.json"), "--seed", "7", "--out", str(tmp_path / "r")]) == 0
    assert json.loads(capsys.readouterr().out)["best_epoch"] == 1
    ckpt = str(tmp_path / "r" / "checkpoint")
    assert cli.main(["eval", "--checkpoint", ckpt, "--manifest", str(small_set), "--split", "val"]) == 0
    assert "MAE" in json.loads(capsys.readouterr().out)
    assert cli.main(["dump-attn", "--checkpoint", ckpt, "--manifest", str(small_set), "--out",
                     str(tmp_path / "attn")]) == 0
    assert json.loads(capsys.readouterr().out)["files"] == 3 * 2  # three transformers, one layer, two heads


def test_cli_train_twice_bit_exact(small_set, tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps(tiny_flat(small_set, **{"gsit.dropout": 0.2})))
    for name in ("a", "b"):
        argv = ["train", "--config", str(tmp_path / "c.json"), "--seed", "7", "--bit-exact", "--out",
                str(tmp_path / name)]
        assert cli.main(argv) == 0
    assert files_of(tmp_path / "a" / "checkpoint") == files_of(tmp_path / "b" / "checkpoint")


def test_cli_errors_are_one_line(tmp_path, capsys):
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "none"), "--manifest", str(tmp_path / "m")]) == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and err.startswith("error: FileNotFoundError:")
    (tmp_path / "bad.json").write_text(json.dumps({"nope": 1}))
    assert cli.main(["count", "--config", str(tmp_path / "bad.json")]) == 1
    assert capsys.readouterr().err.startswith("error: KeyError:")


def test_cli_usage_errors_exit_two(capsys):
    for argv in (["count", "--bogus"], ["dump-masks", "--seg", "1,2"], ["frobnicate"]):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err
