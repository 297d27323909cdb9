"""Training, evaluation and structure ablation on manifest datasets."""

from __future__ import annotations

import contextlib
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import tensor as T
from ..cost import cost_report
from ..encoding import Sample, load_dataset, make_batch
from ..masking import MODALITIES
from ..metrics import FIELDS, MetricReport, msa_metrics
from ..mft import read_mft_stream, write_mft, write_mft_stream
from ..model import FusionModel, ModelConfig, build_model
from ..optim import Adam
from ..tensor import NonFiniteError
from ..ulgm import Centers, LabelStore, generate_labels, relative_distance, update_centers, weighted_loss
from .config import RunConfig, from_flat
from .synth import split_of

LOG_HEADER = ("epoch", "loss", "L_m", "L_t", "L_v", "L_a", "val_MAE", "val_Corr", "val_Acc2_NN", "val_Acc2_NP",
              "val_F1_NP", "val_Acc7", "best")


class TrainingDivergedError(ArithmeticError):
    pass


class ConfigMismatchError(ValueError):
    pass


@dataclass
class TrainResult:
    out_dir: Path
    best_epoch: int
    epochs_run: int
    best_val: MetricReport
    test: MetricReport | None
    history: list[dict] = field(default_factory=list)


@contextlib.contextmanager
def run_context(cfg: RunConfig):
    dtype = np.dtype(cfg.train.dtype).type
    with T.default_dtype(dtype), (T.bit_exact() if cfg.train.bit_exact else contextlib.nullcontext()):
        yield


def split_samples(samples: Sequence[Sample], cfg: RunConfig) -> dict[str, list[Sample]]:
    parts: dict[str, list[Sample]] = {"train": [], "val": [], "test": []}
    for s in samples:
        parts[split_of(s.id, cfg.data.train_fraction, cfg.data.val_fraction)].append(s)
    return parts


def check_compatible(model_cfg: ModelConfig, samples: Sequence[Sample]) -> None:
    if not samples:
        raise ValueError("dataset is empty")
    for u in model_cfg.modalities:
        seq = samples[0].seqs[u]
        if u == "t" and seq.is_tokens != (model_cfg.text_input == "tokens"):
            raise ConfigMismatchError("config mismatch: text input kind differs from the dataset")
        if not seq.is_tokens and seq.feature_dim != model_cfg.input_dims[u]:
            raise ConfigMismatchError(
                f"config mismatch: modality '{u}' has feature dim {seq.feature_dim}, model expects "
                f"{model_cfg.input_dims[u]}")


def predict(model: FusionModel, samples: Sequence[Sample], batch_size: int = 64) -> np.ndarray:
    model.eval()
    out = []
    with T.no_grad():
        for i in range(0, len(samples), batch_size):
            hidden, _ = model(make_batch(samples[i:i + batch_size]))
            out.append(hidden.preds["m"].data.astype(np.float64))
    return np.concatenate(out)


def evaluate_model(model: FusionModel, samples: Sequence[Sample], batch_size: int = 64) -> MetricReport:
    if not samples:
        raise ValueError("cannot evaluate on an empty dataset")
    return msa_metrics(predict(model, samples, batch_size), [s.label for s in samples])


# --- checkpoints -------------------------------------------------------------------


def save_checkpoint(path, model: FusionModel, cfg: RunConfig, store: LabelStore, centers: Centers,
                    epoch: int) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    names = list(state)
    manifest = {"config": cfg.to_flat(), "epoch": epoch,
                "params": [{"name": n, "shape": list(state[n].shape)} for n in names]}
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    write_mft_stream(path / "params.bin", [state[n] for n in names])
    labels = {"store": store.to_json(), "centers": centers.to_json()}
    (path / "labels.json").write_text(json.dumps(labels, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[FusionModel, RunConfig, LabelStore, dict]:
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    manifest = json.loads((path / "manifest.json").read_text())
    cfg = from_flat(manifest["config"])
    with run_context(cfg):
        model = build_model(cfg.model, cfg.seed)
    arrays = list(read_mft_stream(path / "params.bin"))
    specs = manifest["params"]
    if len(arrays) != len(specs):
        raise ConfigMismatchError(f"config mismatch: checkpoint has {len(arrays)} tensors, manifest lists {len(specs)}")
    state = {}
    for spec, arr in zip(specs, arrays):
        if list(arr.shape) != spec["shape"]:
            raise ConfigMismatchError(f"config mismatch: {spec['name']} stored as {arr.shape}")
        state[spec["name"]] = arr
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise ConfigMismatchError(f"config mismatch: {exc}") from None
    labels = json.loads((path / "labels.json").read_text())
    return model, cfg, LabelStore.from_json(labels["store"]), manifest


def evaluate(checkpoint, dataset, split: str | None = None) -> MetricReport:
    """Eval-mode metrics of a checkpoint on a manifest path or a list of samples (optionally one split)."""
    model, cfg, _, _ = load_checkpoint(checkpoint)
    samples = load_dataset(dataset) if isinstance(dataset, (str, Path)) else list(dataset)
    if split is not None:
        samples = split_samples(samples, cfg)[split]
    if not samples:
        raise ValueError("cannot evaluate on an empty dataset")
    check_compatible(cfg.model, samples)
    with run_context(cfg):
        return evaluate_model(model, samples, cfg.train.batch_size)


# --- training ------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 8))
    return str(x)


def _dump_batch(out_dir: Path, batch, epoch: int, step: int, message: str) -> Path:
    dump = out_dir / "nan_dump"
    dump.mkdir(parents=True, exist_ok=True)
    for u, arr in batch.inputs.items():
        write_mft(dump / f"input_{u}.mft", np.asarray(arr, dtype=np.float32))
    info = {"epoch": epoch, "step": step, "ids": batch.ids, "labels": batch.labels.tolist(),
            "lengths": {u: v.tolist() for u, v in batch.lengths.items()}, "error": message}
    (dump / "batch.json").write_text(json.dumps(info, sort_keys=True, indent=1))
    return dump


def _ulgm_update(hidden, batch, epoch: int, cfg: RunConfig, store: LabelStore, centers: Centers) -> None:
    h = {u: t.data for u, t in hidden.h.items()}
    update_centers(h, batch.labels, centers)
    if epoch <= cfg.ulgm.warmup_epochs:
        return
    unimodal = [u for u in h if u != "m"]
    if not unimodal or not all(centers.ready(u) for u in h):
        return
    eps = cfg.ulgm.epsilon
    alpha_m = relative_distance(h["m"], centers, "m", eps)
    alphas = {u: relative_distance(h[u], centers, u, eps) for u in unimodal}
    generate_labels(alphas, alpha_m, batch.labels, store, batch.ids, cfg.ulgm.offset_scale)


def train(cfg: RunConfig, out_dir, samples: Sequence[Sample] | None = None) -> TrainResult:
    """Train with per-group Adam, ULGM labels and best-validation checkpointing.

    The run directory receives ``config.json``, ``cost.json``, ``log.csv``,
    ``metrics.json`` and ``checkpoint/``.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if samples is None:
        if not cfg.data.manifest:
            raise ValueError("no dataset: set data.manifest")
        samples = load_dataset(cfg.data.manifest)
    parts = split_samples(samples, cfg)
    train_set, val_set = parts["train"], parts["val"] or parts["train"]
    if not train_set:
        raise ValueError("training split is empty")
    check_compatible(cfg.model, train_set)

    with run_context(cfg):
        init_rng, order_rng, drop_rng = T.split_rng(T.make_rng(cfg.seed), 3)
        model = build_model(cfg.model, init_rng)
        model.set_rng(drop_rng)
        groups = model.param_groups()
        opt = Adam([{"params": groups[g], "lr": lr, "weight_decay": wd}
                    for g, (lr, wd) in cfg.optim.groups().items() if groups[g]])
        store = LabelStore(cfg.ulgm.label_min, cfg.ulgm.label_max)
        store.register([s.id for s in train_set], [s.label for s in train_set])
        centers = Centers()

        cfg.save(out / "config.json")
        seg = [int(round(np.mean([s.seqs[u].length for s in train_set]))) for u in MODALITIES]
        (out / "cost.json").write_text(cost_report(cfg.model, seg, model).to_json() + "\n")

        history: list[dict] = []
        best_mae, best_epoch, best_report = math.inf, 0, None
        log_file = open(out / "log.csv", "w", newline="")
        writer = csv.writer(log_file, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        try:
            for epoch in range(1, cfg.train.epochs + 1):
                model.train()
                order = order_rng.permutation(len(train_set))
                sums = {k: 0.0 for k in ("loss", "m", "t", "v", "a")}
                n_seen = 0
                for step, start in enumerate(range(0, len(order), cfg.train.batch_size)):
                    batch = make_batch([train_set[i] for i in order[start:start + cfg.train.batch_size]])
                    try:
                        hidden, _ = model(batch)
                        y_uni = {u: store.get(batch.ids, u) for u in hidden.preds if u != "m"}
                        loss, terms = weighted_loss(hidden.preds, batch.labels, y_uni,
                                                    unimodal=epoch > cfg.ulgm.warmup_epochs)
                        if not np.isfinite(loss.data):
                            raise NonFiniteError("non-finite loss")
                        opt.zero_grad()
                        T.backward(loss)
                        opt.step()
                    except NonFiniteError as exc:
                        dump = _dump_batch(out, batch, epoch, step, str(exc))
                        raise TrainingDivergedError(
                            f"NaN loss at epoch {epoch} step {step}; batch dumped to {dump}") from None
                    _ulgm_update(hidden, batch, epoch, cfg, store, centers)
                    B = len(batch)
                    n_seen += B
                    sums["loss"] += float(loss.data) * B
                    for u, v in terms.items():
                        sums[u] += v * B
                report = evaluate_model(model, val_set, cfg.train.batch_size)
                improved = report.MAE < best_mae
                if improved:
                    best_mae, best_epoch, best_report = report.MAE, epoch, report
                    save_checkpoint(out / "checkpoint", model, cfg, store, centers, epoch)
                row = {"epoch": epoch, "loss": sums["loss"] / n_seen,
                       **{f"L_{u}": sums[u] / n_seen for u in ("m", "t", "v", "a")},
                       "val_MAE": report.MAE, "val_Corr": report.Corr, "val_Acc2_NN": report.Acc2_NN,
                       "val_Acc2_NP": report.Acc2_NP, "val_F1_NP": report.F1_NP, "val_Acc7": report.Acc7,
                       "best": int(improved)}
                history.append(row)
                writer.writerow([_fmt(row[k]) for k in LOG_HEADER])
                log_file.flush()
                if cfg.train.target_mae is not None and report.MAE < cfg.train.target_mae:
                    break
        finally:
            log_file.close()

        best_model, _, _, _ = load_checkpoint(out / "checkpoint")
        test_report = evaluate_model(best_model, parts["test"], cfg.train.batch_size) if len(parts["test"]) > 1 else None
    metrics = {"best_epoch": best_epoch, "epochs_run": len(history), "selection": "best validation MAE",
               "val": best_report.to_dict(), "test": test_report.to_dict() if test_report else None}
    (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    return TrainResult(out, best_epoch, len(history), best_report, test_report, history)


# --- ablation ------------------------------------------------------------------------

ABLATION_FIELDS = ("structure", "seed", "best_epoch", *FIELDS, "params", "flops")


def ablate(cfg: RunConfig, structures: Sequence[str], out_dir, seeds: Sequence[int] | None = None,
           samples: Sequence[Sample] | None = None) -> list[dict]:
    """Train every structure under the same config and seeds; writes ``ablation.csv`` with one row per run."""
    if len(structures) < 2:
        raise ValueError("ablation needs at least two structures")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed] if seeds is None else list(seeds)
    if samples is None:
        samples = load_dataset(cfg.data.manifest)
    rows = []
    for structure in structures:
        for seed in seeds:
            flat = cfg.to_flat()
            flat.update({"gsit.structure": structure, "seed": seed})
            run_cfg = from_flat(flat)
            result = train(run_cfg, out / f"{structure}_seed{seed}", samples)
            cost = json.loads((result.out_dir / "cost.json").read_text())
            row = {"structure": structure, "seed": seed, "best_epoch": result.best_epoch,
                   **{k: getattr(result.best_val, k) for k in FIELDS},
                   "params": cost["params"], "flops": cost["flops"]}
            rows.append(row)
    with open(out / "ablation.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_FIELDS)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in ABLATION_FIELDS])
    return rows


def mean_mae_by_structure(rows: Sequence[dict]) -> dict[str, float]:
    by: dict[str, list[float]] = {}
    for r in rows:
        by.setdefault(r["structure"], []).append(r["MAE"])
    return {k: float(np.mean(v)) for k, v in by.items()}
