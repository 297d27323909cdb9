"""Command-line entry points.

Errors are reported as a single ``error: <Kind>: <message>`` line on stderr
with exit status 1; argument errors print usage and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..cost import cost_report
from ..encoding import load_dataset, make_batch
from ..gsit import export_attention
from ..masking import STRUCTURES, SegLengths, gen_interlaced_mask, gen_structure_mask
from ..mft import write_mft
from .config import load_config
from .synth import SynthSpec, synth_dataset
from .train import ablate, evaluate, load_checkpoint, mean_mae_by_structure, run_context, train


def _seg(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"seg must be three comma-separated integers, got '{text}'") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"seg must have three entries, got '{text}'")
    return parts


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"--set expects key=value, got '{text}'")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _config(args):
    overrides = dict(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "manifest", None):
        overrides["data.manifest"] = args.manifest
    if getattr(args, "bit_exact", False):
        overrides["train.bit_exact"] = True
    return load_config(args.config, overrides)


def cmd_synth(args) -> int:
    spec = SynthSpec(n_samples=args.n_samples)
    print(synth_dataset(spec, args.seed or 0, args.out))
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    result = train(cfg, args.out)
    print(json.dumps({"out": str(result.out_dir), "best_epoch": result.best_epoch,
                      "val": result.best_val.to_dict()}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    report = evaluate(args.checkpoint, args.manifest, args.split)
    print(report.to_json())
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    structures = args.structures.split(",")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    rows = ablate(cfg, structures, args.out, seeds)
    print((Path(args.out) / "ablation.csv").read_text(), end="")
    print(json.dumps({"mean_MAE": mean_mae_by_structure(rows)}, sort_keys=True))
    return 0


def cmd_count(args) -> int:
    cfg = _config(args)
    print(cost_report(cfg.model, args.seg).to_json())
    return 0


def cmd_dump_masks(args) -> int:
    seg = SegLengths.of(args.seg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    masks = {
        "forward": gen_structure_mask(seg, args.structure, "forward"),
        "backward": gen_structure_mask(seg, args.structure, "backward"),
        "intra": gen_interlaced_mask(seg, "intra"),
    }
    patterns = {"seg": list(seg.as_tuple()), "structure": args.structure, "order": ["t", "v", "a"]}
    for name, mask in masks.items():
        write_mft(out / f"{name}.mft", mask.matrix)
        patterns[name] = mask.pattern.astype(int).tolist()
    (out / "patterns.json").write_text(json.dumps(patterns, sort_keys=True, indent=2) + "\n")
    print(json.dumps(patterns, sort_keys=True))
    return 0


def cmd_dump_attn(args) -> int:
    model, cfg, _, _ = load_checkpoint(args.checkpoint)
    if cfg.model.model != "gsifn":
        raise ValueError("attention export needs a gsifn checkpoint")
    samples = load_dataset(args.manifest)
    if not 0 <= args.sample < len(samples):
        raise IndexError(f"sample {args.sample} out of range for {len(samples)} samples")
    with run_context(cfg), T.no_grad():
        model.eval()
        _, record = model(make_batch([samples[args.sample]]), record=True)
    files = export_attention(record, args.out)
    print(json.dumps({"files": len(files), "index": str(Path(args.out) / "index.json")}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsifn", description="Interlaced-mask multimodal fusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False, config=True):
        if config:
            p.add_argument("--config", type=Path, default=None, help="flat dotted-key JSON config")
            p.add_argument("--set", type=_override, action="append", metavar="KEY=VALUE",
                           help="override one config key")
        p.add_argument("--seed", type=_seed, default=None)
        p.add_argument("--out", type=Path, required=out_required)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    common(p, out_required=True, config=False)
    p.add_argument("--n-samples", type=int, default=715)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p, out_required=True)
    p.add_argument("--manifest", type=str, default=None)
    p.add_argument("--bit-exact", action="store_true", help="single-threaded deterministic kernels")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train several graph structures under one config")
    common(p, out_required=True)
    p.add_argument("--manifest", type=str, default=None)
    p.add_argument("--structures", default=",".join(STRUCTURES))
    p.add_argument("--seeds", default=None, help="comma-separated seeds (default: the config seed)")
    p.add_argument("--bit-exact", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("count", help="print the parameter/FLOP report")
    common(p)
    p.add_argument("--seg", type=_seg, default=(20, 30, 30))
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("dump-masks", help="write fwd/bwd/intra masks and their block patterns")
    p.add_argument("--seg", type=_seg, required=True)
    p.add_argument("--structure", choices=STRUCTURES, default="original")
    p.add_argument("--out", type=Path, default=Path("masks"))
    p.set_defaults(func=cmd_dump_masks)

    p = sub.add_parser("dump-attn", help="export attention maps of one sample")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("attention"))
    p.set_defaults(func=cmd_dump_attn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one machine-parseable line for any failure
        message = str(exc).splitlines()[0] if str(exc) else ""
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
