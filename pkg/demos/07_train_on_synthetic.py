"""Generate a small synthetic dataset, train the full model for a few epochs and evaluate it."""

import tempfile
from pathlib import Path

from gsifn.harness import SynthSpec, evaluate, standard_config, synth_dataset, train

with tempfile.TemporaryDirectory() as tmp:
    manifest = synth_dataset(SynthSpec(n_samples=300), seed=0, out_dir=Path(tmp) / "data")
    cfg = standard_config(str(manifest), seed=0)
    cfg.train.epochs = 6
    result = train(cfg, Path(tmp) / "run")
    print(f"(the unimodal loss terms join after a {cfg.ulgm.warmup_epochs}-epoch warm-up, so the total loss jumps)")
    for row in result.history:
        print(f"epoch {row['epoch']}: loss {row['loss']:.3f}  val MAE {row['val_MAE']:.3f}")
    print("best epoch:", result.best_epoch)
    report = evaluate(Path(tmp) / "run" / "checkpoint", manifest, "test")
    print(f"test: MAE {report.MAE:.3f}  Corr {report.Corr:.3f}  Acc2 {report.Acc2_NP:.3f}  Acc7 {report.Acc7:.3f}")
    print("run directory:", sorted(p.name for p in (Path(tmp) / "run").iterdir()))
