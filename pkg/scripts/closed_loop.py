#!/usr/bin/env python3
"""Synth -> train -> detect -> score in one deterministic run.

Generates a small synthetic corpus, overfits a narrow model on the first
four images, detects on the same four, and scores the result (the acceptance
target for this loop is CD = 100%). Also renders one overlay per image.

Usage:
    python scripts/closed_loop.py [--workdir out/] [--seed 42] [--steps 500]
"""

import argparse
import json
import os
import sys
import time

from sinpoint.cli import main as cli


def run(argv) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="closed_loop_out")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=500)
    args = ap.parse_args(argv)

    wd = args.workdir
    corpus = os.path.join(wd, "corpus")
    t0 = time.time()

    if cli(["synth", "--count", "8", "--seed", str(args.seed), "--size", "96",
            "--out-dir", corpus]):
        return 1

    train_manifest = os.path.join(corpus, "train.tsv")
    with open(train_manifest, "w", encoding="utf-8") as fh:
        fh.writelines(f"synth_{i:03d}.pgm\tsynth_{i:03d}.txt\n" for i in range(4))

    model = os.path.join(wd, "model.bin")
    if cli(["train", "--manifest", train_manifest, "--out", model,
            "--log", os.path.join(wd, "train.log"),
            "--width-divisor", "8", "--learning-rate", "0.01", "--batch-size", "4",
            "--epochs", str(args.steps), "--max-steps", str(args.steps),
            "--dropout-rate", "0.0", "--seed", str(args.train_seed)]):
        return 1
    print(f"training finished at {time.time() - t0:.0f}s")

    pair_lines = []
    for i in range(4):
        img = os.path.join(corpus, f"synth_{i:03d}.pgm")
        det = os.path.join(wd, f"det_{i}.txt")
        if cli(["detect", "--model", model, "--image", img, "--out", det,
                "--maps-dir", os.path.join(wd, "maps")]):
            return 1
        if cli(["overlay", "--image", img, "--truth", os.path.join(corpus, f"synth_{i:03d}.txt"),
                "--detections", det, "--out", os.path.join(wd, f"overlay_{i}.png")]):
            return 1
        pair_lines.append(f"det_{i}.txt\tcorpus/synth_{i:03d}.txt\n")

    pairs = os.path.join(wd, "pairs.tsv")
    with open(pairs, "w", encoding="utf-8") as fh:
        fh.writelines(pair_lines)
    report_json = os.path.join(wd, "report.json")
    if cli(["score", "--pairs", pairs, "--label", "closed-loop",
            "--out-table", os.path.join(wd, "report.txt"), "--out-json", report_json]):
        return 1

    with open(report_json, encoding="utf-8") as fh:
        report = json.load(fh)
    print(f"closed loop done in {time.time() - t0:.0f}s; CD = {report['cd_rate']:.0%}")
    return 0 if report["cd_rate"] == 1.0 else 2


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
