"""Command-line entry point: train, eval, synth, export-attention, validate.

Exit codes: 0 success, 1 runtime/validation failure, 2 usage error.
Train/eval flags mirror TrainConfig field names; a JSON config file may
supply defaults that explicit flags override, which keeps ablation sweeps
scriptable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

from .bundle import load_bundle, load_split, write_bundle, write_split
from .errors import PurlsError
from .evaluate import config_hash_of, evaluate, export_attention
from .synth import SynthSpec, generate
from .train import Checkpoint, TrainConfig, load_checkpoint, train

_CONFIG_FLAGS = {
    "mode": dict(choices=["global", "static", "adaptive"]),
    "alpha_mode": dict(choices=["uniform", "learnable"]),
    "learning_rate": dict(type=float),
    "batch_size": dict(type=int),
    "max_epochs": dict(type=int),
    "patience": dict(type=int),
    "seed": dict(type=int),
    "tau": dict(type=float),
    "learn_tau": dict(action="store_true", default=None),
    "normalize": dict(action="store_true", default=None),
    "hidden_dim": dict(type=int),
    "attention_dim": dict(type=int),
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file with TrainConfig defaults")
    for name, kwargs in _CONFIG_FLAGS.items():
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, dest=name, **({"default": None} | kwargs))


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    values = {}
    if args.config is not None:
        values.update(json.loads(Path(args.config).read_text()))
    for f in fields(TrainConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    return TrainConfig.from_dict({**TrainConfig().to_dict(), **values})


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_run_manifest(out_dir: Path, payload: dict) -> None:
    # atomic: fully write to a temp name, then rename into place
    target = Path(out_dir) / "run_manifest.json"
    tmp = target.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n")
    tmp.replace(target)


def cmd_train(args: argparse.Namespace) -> int:
    started = time.time()
    cfg = _resolve_config(args)
    bundle = load_bundle(args.data)
    split = load_split(args.split, bundle.classes)
    checkpoint = train(bundle, split, cfg)
    out = checkpoint.save(args.out)
    _write_run_manifest(out, {
        "command": "train",
        "config": cfg.to_dict(),
        "inputs": {
            "data": str(args.data),
            "data_manifest_sha256": _file_sha256(Path(args.data) / "manifest.json"),
            "split": str(args.split),
            "split_sha256": _file_sha256(args.split),
        },
        "outputs": {"checkpoint": str(out)},
        "best_epoch": checkpoint.best_epoch,
        "best_metric": checkpoint.best_metric,
        "wall_clock_seconds": round(time.time() - started, 3),
    })
    print(f"checkpoint written to {out} "
          f"(best epoch {checkpoint.best_epoch}, monitored accuracy {checkpoint.best_metric:.4f})")
    return 0


def _attention_labels(bundle) -> list[str]:
    return list(bundle.part_labels) + list(bundle.interval_labels) + ["global"]


def _export_one(bundle, checkpoint: Checkpoint, sample_id: str, class_id: int | None,
                out_csv: Path) -> Path:
    by_id = {s.sample_id: s for s in bundle.samples}
    if sample_id not in by_id:
        raise PurlsError(f"sample id {sample_id!r} not found in bundle")
    sample = by_id[sample_id]
    cid = sample.class_id if class_id is None else class_id
    if cid not in bundle.classes:
        raise PurlsError(f"class id {cid} not found in bundle")
    return export_attention(
        sample,
        bundle.classes[cid].bank,
        checkpoint.model,
        out_csv,
        _attention_labels(bundle),
        class_id=cid,
    )


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.data)
    split = load_split(args.split, bundle.classes)
    checkpoint = load_checkpoint(args.checkpoint)
    if checkpoint.model.dims != bundle.dims:
        raise PurlsError(
            f"checkpoint dims {checkpoint.model.dims.to_dict()} do not match "
            f"bundle dims {bundle.dims.to_dict()}"
        )
    report = evaluate(bundle, split, checkpoint.model,
                      config_hash=config_hash_of(checkpoint.config.to_dict()))
    report.save(args.out)
    print(f"top-1 accuracy {report.top1:.4f} over {report.n_samples} samples -> {args.out}")
    if args.export_attention is not None:
        csv_path = args.attention_out or Path(args.out).with_suffix(".attention.csv")
        _export_one(bundle, checkpoint, args.export_attention, args.attention_class, csv_path)
        print(f"attention written to {csv_path}")
    return 0


def cmd_export_attention(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.data)
    checkpoint = load_checkpoint(args.checkpoint)
    path = _export_one(bundle, checkpoint, args.sample, args.attention_class, args.out)
    print(f"attention written to {path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.unseen >= args.classes:
        raise PurlsError(f"--unseen ({args.unseen}) must be smaller than --classes ({args.classes})")
    spec = SynthSpec(
        concepts=args.concepts,
        seen_classes=args.classes - args.unseen,
        unseen_classes=args.unseen,
        samples_per_class=args.samples_per_class,
        noise=args.noise,
        temporal_steps=args.temporal_steps,
        joints=args.joints,
        visual_dim=args.visual_dim,
        text_dim=args.text_dim,
        parts=args.parts,
        intervals=args.intervals,
        seed=args.seed,
    )
    bundle, split = generate(spec)
    out = write_bundle(bundle, args.out)
    write_split(split, out / "split.json")
    print(f"bundle with {len(bundle.samples)} samples written to {out} (split.json included)")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.data)
    msg = (f"ok: {len(bundle.samples)} samples, {len(bundle.classes)} classes, "
           f"{bundle.dims.nodes} nodes per sample (S = {bundle.dims.temporal_steps} x "
           f"{bundle.dims.joints})")
    if args.split is not None:
        split = load_split(args.split, bundle.classes)
        msg += f", split {len(split.seen)}/{len(split.unseen)}"
    print(msg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="purls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an alignment model on a bundle")
    p.add_argument("--data", type=Path, required=True, help="bundle directory")
    p.add_argument("--split", type=Path, required=True, help="split JSON file")
    p.add_argument("--out", type=Path, required=True, help="checkpoint output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="zero-shot evaluation of a checkpoint")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report JSON path")
    p.add_argument("--export-attention", metavar="SAMPLE_ID", default=None)
    p.add_argument("--attention-class", type=int, default=None,
                   help="bank to condition the export on (default: the sample's class)")
    p.add_argument("--attention-out", type=Path, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a compositional synthetic bundle")
    p.add_argument("--classes", type=int, default=16, help="total classes (seen + unseen)")
    p.add_argument("--unseen", type=int, default=4)
    p.add_argument("--concepts", type=int, default=6)
    p.add_argument("--samples-per-class", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--temporal-steps", type=int, default=6)
    p.add_argument("--joints", type=int, default=8)
    p.add_argument("--visual-dim", type=int, default=16)
    p.add_argument("--text-dim", type=int, default=24)
    p.add_argument("--parts", type=int, default=4)
    p.add_argument("--intervals", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export-attention", help="write one sample's attention matrix as CSV")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--sample", required=True, help="sample id")
    p.add_argument("--attention-class", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export_attention)

    p = sub.add_parser("validate", help="load and validate a bundle (and optional split)")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", type=Path, default=None)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PurlsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
