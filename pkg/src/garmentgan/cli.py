"""Command-line entry point: synth, train, edit, eval, oneout, serve.

Exit codes: 0 success, 1 domain error (one-line cause on stderr), 2 usage
error. Training options come from a key=value config file overridable by
flags; artifacts are written to disk, progress goes to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from garmentgan.data import SyntheticSpec, generate_synthetic, load_manifest
from garmentgan.errors import GarmentGanError
from garmentgan.training import Checkpoint, TrainConfig, load_checkpoint, run_full

CONFIG_FIELD_TYPES = {f.name: f.type for f in __import__("dataclasses").fields(TrainConfig)}


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def parse_config_file(path: Path) -> dict:
    """Flat key=value config: ints, floats, bools, tuples (comma), strings."""
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GarmentGanError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        values[key] = _coerce_value(val)
    return values


def _coerce_value(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    if "," in val:
        return tuple(_coerce_value(p.strip()) for p in val.split(","))
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        pass
    return val


def build_train_config(args, overrides: dict | None = None) -> TrainConfig:
    values: dict = {}
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise GarmentGanError(f"config file {cfg_path} not found")
        file_values = parse_config_file(cfg_path)
        unknown = set(file_values) - set(CONFIG_FIELD_TYPES)
        if unknown:
            raise GarmentGanError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    if overrides:
        values.update(overrides)
    if getattr(args, "skip_recon", False):
        values["skip_recon_stage"] = True
    if getattr(args, "rgb_input", False):
        values["rgb_instead_of_edge"] = True
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as e:
        raise GarmentGanError(f"bad training config: {e}") from e


# --- subcommands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        image_size=args.size,
        n_images=args.n,
        n_collar_shapes=args.shapes,
        palette_size=args.palette,
    )
    manifest = generate_synthetic(spec, seed=args.seed, out_dir=args.out)
    _progress(f"wrote {len(manifest)} records to {args.out}")
    print(str(Path(args.out) / "manifest.jsonl"))
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(args.data)
    config = build_train_config(args, overrides={"checkpoint_dir": args.out})
    _progress(f"training on {len(manifest)} records (hash {config.config_hash()})")
    recon, adv = run_full(config, manifest, progress=_progress)
    _progress(f"done: adversarial checkpoint at {Path(args.out) / 'adversarial'}")
    if recon is None:
        _progress("reconstruction stage skipped (ablation)")
    return 0


def _load_stage_checkpoint(path: str, required_stage: str = "adversarial") -> Checkpoint:
    ckpt = load_checkpoint(path)
    if ckpt.stage != required_stage:
        raise GarmentGanError(f"checkpoint at {path} is stage '{ckpt.stage}'; this command requires stage '{required_stage}'")
    return ckpt


def cmd_edit(args) -> int:
    from garmentgan.service import EditPipeline

    ckpt = _load_stage_checkpoint(args.ckpt)
    pipeline = EditPipeline(ckpt)
    reference = _read_image(args.reference)
    region = tuple(args.region) if args.region else None
    if args.target_edge:
        edge = _read_gray(args.target_edge)
        result = pipeline.edit(reference, edge_map=edge, region=region)
    elif args.target:
        target = _read_image(args.target)
        result = pipeline.edit(reference, target_image=target, region=region)
    else:
        raise GarmentGanError("edit requires --target or --target-edge")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray(result.edited).save(out / "edited.png")
    Image.fromarray(result.mask_preview, mode="L").save(out / "mask.png")
    Image.fromarray(result.edge_preview, mode="L").save(out / "edge.png")
    _progress(f"wrote edited.png, mask.png, edge.png to {out}")
    return 0


def _read_image(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise GarmentGanError(f"image {path} not found")
    with Image.open(p) as im:
        return np.asarray(im.convert("RGB"))


def _read_gray(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise GarmentGanError(f"image {path} not found")
    with Image.open(p) as im:
        return np.asarray(im.convert("L"))


def _make_classifier(kind: str, manifest, image_size: int, seed: int):
    from garmentgan.metrics import OracleCollarClassifier, TrainedCnnClassifier, train_attribute_classifier

    if kind == "oracle":
        if manifest.provenance != "synthetic":
            raise GarmentGanError("the oracle classifier is only valid on synthetic datasets")
        return OracleCollarClassifier(class_count=manifest.class_count, image_size=image_size)
    if kind == "cnn":
        from garmentgan.data import split_dataset

        train, _ = split_dataset(manifest, 0.8, seed=seed)
        _progress("training cnn attribute classifier (fixed recipe)")
        return train_attribute_classifier(train, image_size=image_size, seed=seed)
    if kind.startswith("cnn:"):
        return TrainedCnnClassifier.load(kind.split(":", 1)[1])
    raise GarmentGanError(f"unknown classifier {kind!r} (use oracle, cnn, or cnn:PATH)")


def _render_report_table(title: str, report) -> str:
    lines = [title, f"{'pair':>10} | {'C.E.':>7} | {'SSIM':>7} | {'PSNR':>7} | {'n':>4}"]
    lines.append("-" * len(lines[1]))
    for key in sorted(report.per_pair):
        row = report.per_pair[key]
        lines.append(f"{key:>10} | {row['ce']:7.2f} | {row['ssim']:7.4f} | {row['psnr']:7.2f} | {row['n']:4d}")
    agg = report.aggregate
    lines.append(f"{'ALL':>10} | {agg['ce']:7.2f} | {agg['ssim']:7.4f} | {agg['psnr']:7.2f} | {report.n_samples:4d}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    from garmentgan.metrics import evaluate

    ckpt = _load_stage_checkpoint(args.ckpt)
    manifest = load_manifest(args.data)
    classifier = _make_classifier(args.classifier, manifest, ckpt.generator.config.image_size, args.seed)
    report = evaluate(ckpt, manifest, classifier, seed=args.seed)
    out = Path(args.out) if args.out else Path("report.json")
    report.save(out)
    _progress(f"wrote {out}")
    print(_render_report_table(f"evaluation of {args.ckpt}", report))
    return 0


def cmd_oneout(args) -> int:
    from garmentgan.metrics import one_out_protocol

    manifest = load_manifest(args.data)
    config = build_train_config(args, overrides={})
    classifier = _make_classifier(args.classifier, manifest, config.image_size, config.seed)
    result = one_out_protocol(config, manifest, args.held_type, classifier)
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    result["full"].save(out_dir / "report_full.json")
    result["one_out"].save(out_dir / "report_oneout.json")
    print(_render_report_table(f"full model (held type {args.held_type} targeted)", result["full"]))
    print()
    print(_render_report_table(f"one-out model (held type {args.held_type} targeted)", result["one_out"]))
    return 0


def cmd_serve(args) -> int:
    import os

    import uvicorn

    from garmentgan.service import create_app, load_model_state

    state = load_model_state(args.ckpt)
    app = create_app(state)
    port = args.port or int(os.environ.get("TAILOR_PORT", "8020"))
    _progress(f"serving checkpoint {state.checkpoint_hash} on port {port}")
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="garmentgan", description="Garment attribute editing pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic garment dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n", type=int, default=64, help="number of images")
    p.add_argument("--size", type=int, default=64, help="square image size in pixels")
    p.add_argument("--shapes", type=int, default=3, help="number of collar shape classes (<= 12)")
    p.add_argument("--palette", type=int, default=6, help="number of flat garment colors")
    p.add_argument("--seed", type=int, default=0, help="generation seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run two-stage training on a manifest")
    p.add_argument("--data", required=True, help="path to manifest.jsonl")
    p.add_argument("--config", help="key=value config file with TrainConfig fields")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--skip-recon", action="store_true", help="ablation: adversarial stage only")
    p.add_argument("--rgb-input", action="store_true", help="ablation: rgb crops instead of edge maps")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("edit", help="edit one reference image toward a target attribute")
    p.add_argument("--ckpt", required=True, help="adversarial-stage checkpoint directory")
    p.add_argument("--reference", required=True, help="reference garment image (texture source)")
    p.add_argument("--target", help="target garment image (edge extracted from it)")
    p.add_argument("--target-edge", help="precomputed edge map PNG (overrides --target)")
    p.add_argument("--region", type=int, nargs=4, metavar=("X0", "Y0", "X1", "Y1"), help="edit region in reference pixels")
    p.add_argument("--out", required=True, help="output directory for edited.png/mask.png/edge.png")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True, help="adversarial-stage checkpoint directory")
    p.add_argument("--data", required=True, help="path to manifest.jsonl")
    p.add_argument("--classifier", default="oracle", help="oracle | cnn | cnn:PATH")
    p.add_argument("--seed", type=int, default=0, help="target sampling seed")
    p.add_argument("--out", help="report JSON path (default report.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oneout", help="leave-one-type-out protocol: train and compare two models")
    p.add_argument("--data", required=True, help="path to manifest.jsonl")
    p.add_argument("--held-type", type=int, required=True, help="type id to hold out")
    p.add_argument("--config", help="key=value config file with TrainConfig fields")
    p.add_argument("--classifier", default="oracle", help="oracle | cnn | cnn:PATH")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="directory for the two report JSONs")
    p.set_defaults(func=cmd_oneout)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--ckpt", required=True, help="adversarial-stage checkpoint directory")
    p.add_argument("--port", type=int, help="port (default env TAILOR_PORT or 8020)")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GarmentGanError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
