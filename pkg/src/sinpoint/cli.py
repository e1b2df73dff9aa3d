"""Command-line surface: label, train, detect, score, overlay, synth.

Every command exits nonzero on error and writes artifacts atomically, so an
interrupted run leaves no partial outputs.  See FORMATS.md for the file
formats involved.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .blobs import BlobParams
from .config import RunConfig, default_config_text, load_manifest, load_pairs, load_run_config
from .imgio import atomic_write_bytes, read_gray, write_gray, write_mask_pgm
from .labels import format_annotations, load_annotations, rasterize, save_annotations
from .model import CoreDeltaNet, load_model, save_model
from .overlay import render_overlay
from .pipeline import detect_image
from .score import aggregate, render_table, report_to_dict, score_image
from .synth import synth_corpus
from .train import train

_OVERRIDABLE = [f.name for f in fields(RunConfig)]


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run configuration file (key = value lines)")
    group = parser.add_argument_group("config overrides")
    group.add_argument("--learning-rate", type=float, dest="learning_rate")
    group.add_argument("--momentum", type=float)
    group.add_argument("--batch-size", type=int, dest="batch_size")
    group.add_argument("--epochs", type=int)
    group.add_argument("--dropout-rate", type=float, dest="dropout_rate")
    group.add_argument("--width-divisor", type=int, dest="width_divisor")
    group.add_argument("--seed", type=int)
    group.add_argument("--max-steps", type=int, dest="max_steps")
    group.add_argument("--threshold", type=float)
    group.add_argument("--min-area", type=int, dest="min_area")
    group.add_argument("--max-area", type=int, dest="max_area")
    group.add_argument("--connectivity", type=int, choices=(4, 8))
    group.add_argument("--deterministic", action="store_true", default=None)
    group.add_argument("--no-deterministic", action="store_false", dest="deterministic", default=None)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    for name in _OVERRIDABLE:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def _load_labeled_dataset(manifest_path: str):
    entries = load_manifest(manifest_path)
    if not entries:
        raise ValueError(f"manifest {manifest_path} is empty")
    dataset = []
    dims = None
    for entry in entries:
        gray = read_gray(entry.image_path)
        if dims is None:
            dims = gray.shape
        elif gray.shape != dims:
            raise ValueError(
                f"{entry.image_path}: dims {gray.shape[1]}x{gray.shape[0]} differ from "
                f"{dims[1]}x{dims[0]}; the dataset must be uniform"
            )
        h, w = gray.shape
        points = load_annotations(entry.annotation_path)
        masks = rasterize(points, w, h)
        h16 = ((h + 15) // 16) * 16
        w16 = ((w + 15) // 16) * 16
        img = np.zeros((h16, w16), dtype=np.float32)
        img[:h, :w] = gray
        core = np.zeros((h16, w16), dtype=np.float32)
        core[:h, :w] = masks.core_mask
        delta = np.zeros((h16, w16), dtype=np.float32)
        delta[:h, :w] = masks.delta_mask
        dataset.append((img, core, delta))
    return dataset


def cmd_label(args: argparse.Namespace) -> int:
    entries = load_manifest(args.manifest)
    for entry in entries:
        gray = read_gray(entry.image_path)
        h, w = gray.shape
        points = load_annotations(entry.annotation_path)
        masks = rasterize(points, w, h)
        stem = os.path.splitext(entry.image_path)[0]
        write_mask_pgm(f"{stem}.core.pgm", masks.core_mask)
        write_mask_pgm(f"{stem}.delta.pgm", masks.delta_mask)
        print(f"labeled {entry.image_path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = _load_labeled_dataset(args.manifest)
    model = CoreDeltaNet(
        width_divisor=cfg.width_divisor, dropout_rate=cfg.dropout_rate, seed=cfg.seed
    )
    log = train(model, dataset, cfg.train_config())
    save_model(model, args.out)
    if args.log:
        lines = ["# epoch\tmean_step_loss\tper_pixel_bce\n"]
        for i, (loss, bce) in enumerate(zip(log.epoch_loss, log.epoch_pixel_bce), start=1):
            lines.append(f"{i}\t{loss:.6f}\t{bce:.6f}\n")
        atomic_write_bytes(args.log, "".join(lines).encode("utf-8"))
    print(f"trained {log.steps} steps; final per-pixel bce {log.epoch_pixel_bce[-1]:.4f}")
    print(f"model written to {args.out}")
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    model = load_model(args.model)
    gray = read_gray(args.image)
    points, core_map, delta_map = detect_image(model, gray, cfg.blob_params())
    text = format_annotations(points)
    if args.out:
        atomic_write_bytes(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    if args.maps_dir:
        os.makedirs(args.maps_dir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(args.image))[0]
        write_gray(os.path.join(args.maps_dir, f"{stem}.core.pgm"), core_map)
        write_gray(os.path.join(args.maps_dir, f"{stem}.delta.pgm"), delta_map)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    pairs = load_pairs(args.pairs)
    if not pairs:
        raise ValueError(f"pairs file {args.pairs} is empty")
    tallies = []
    for detected_path, truth_path in pairs:
        detected = load_annotations(detected_path)
        truth = load_annotations(truth_path)
        tallies.append(score_image(detected, truth))
    report = aggregate(tallies)
    table = render_table(report, label=args.label)
    sys.stdout.write(table)
    if args.out_table:
        atomic_write_bytes(args.out_table, table.encode("utf-8"))
    if args.out_json:
        payload = json.dumps(report_to_dict(report), indent=2) + "\n"
        atomic_write_bytes(args.out_json, payload.encode("utf-8"))
    return 0


def _parse_color(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"color must be 'R,G,B', got {text!r}")
    r, g, b = (int(p) for p in parts)
    for v in (r, g, b):
        if not 0 <= v <= 255:
            raise ValueError(f"color channel out of range in {text!r}")
    return r, g, b


def cmd_overlay(args: argparse.Namespace) -> int:
    gray = read_gray(args.image)
    detections = load_annotations(args.detections) if args.detections else []
    truth = load_annotations(args.truth) if args.truth else []
    img = render_overlay(
        gray,
        detections,
        truth,
        truth_color=_parse_color(args.truth_color),
        det_color=_parse_color(args.det_color),
        circle_color=_parse_color(args.circle_color),
    )
    tmp = f"{args.out}.tmp.{os.getpid()}"
    img.save(tmp, format="PNG")
    os.replace(tmp, args.out)
    print(f"overlay written to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    manifest = synth_corpus(args.count, args.seed, args.size, args.out_dir)
    print(f"manifest written to {manifest}")
    return 0


def cmd_print_config(args: argparse.Namespace) -> int:
    sys.stdout.write(default_config_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinpoint",
        description="Fingerprint singular-point detection pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="rasterize annotation disks into mask images")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train the segmentation network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--log", help="optional per-epoch loss log file")
    _add_config_arguments(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect singular points in one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", help="write points here instead of stdout")
    p.add_argument("--maps-dir", dest="maps_dir", help="dump probability maps for debugging")
    _add_config_arguments(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("score", help="score detection files against ground truth")
    p.add_argument("--pairs", required=True, help="tab-separated file: detections<TAB>truth")
    p.add_argument("--label", default="this run", help="row label in the text table")
    p.add_argument("--out-table", dest="out_table", help="write the text table here")
    p.add_argument("--out-json", dest="out_json", help="write the JSON report here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("overlay", help="render detections and truth on an image")
    p.add_argument("--image", required=True)
    p.add_argument("--detections")
    p.add_argument("--truth")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--truth-color", dest="truth_color", default="255,0,0")
    p.add_argument("--det-color", dest="det_color", default="0,255,0")
    p.add_argument("--circle-color", dest="circle_color", default="0,0,0")
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("synth", help="generate a synthetic ridge-pattern corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96, help="square image side (multiple of 16 recommended)")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("print-config", help="print the default run configuration")
    p.set_defaults(func=cmd_print_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
