#!/usr/bin/env python3
"""End-to-end demo on a synthetic corpus.

Generates a scripted corpus, runs the mock annotation pipeline, fills
progress labels, emits VQA samples, builds splits and advantage labels,
and scores the labels against themselves. Everything lands under the
given output directory; the run is fully deterministic for a seed.
"""

import argparse
import json
import sys
from pathlib import Path

from proclab.cli import main as proclab


def sh(*argv):
    rendered = [str(a) for a in argv]
    print(f"$ proclab {' '.join(rendered)}")
    code = proclab(rendered)
    if code not in (0, 2):
        sys.exit(code)
    return code


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_run", help="output directory")
    parser.add_argument("--episodes", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = out / "corpus"
    ann = out / "annotations.jsonl"
    labeled = out / "labeled.jsonl"
    vqa = out / "vqa.jsonl"
    report = out / "report.json"

    sh("synth-corpus", "--out", corpus, "--episodes", args.episodes,
       "--seed", args.seed, "--failure-rate", "0.25")
    sh("annotate", "--input", corpus, "--out", ann, "--seed", args.seed)
    sh("label", "--annotations", ann, "--corpus", corpus, "--out", labeled)
    sh("gen-vqa", "--annotations", labeled, "--out", vqa, "--density", "4")
    sh("eval", "--pred", labeled, "--gt", labeled,
       "--metrics", "voc,kt,epr,mae", "--out", report)
    sh("split", "--tags", corpus / "tags.csv", "--mode", "succ_fail",
       "--seed", args.seed,
       "--train-out", out / "train_ids.txt", "--test-out", out / "test_ids.txt")
    sh("rft-label", "--progress", labeled, "--tags", corpus / "tags.csv",
       "--horizon", "10", "--out", out / "advantage.jsonl")

    metrics = json.loads(report.read_text())["progress"]["metrics"]
    print("\nself-evaluation of the produced labels:")
    for name, value in sorted(metrics.items()):
        print(f"  {name:>4} = {value}")
    print(f"\nartifacts under {out}/")


if __name__ == "__main__":
    main()
