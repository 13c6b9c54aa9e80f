"""Training-loop bindings over the proclab CLI and file formats.

The bindings never import the toolkit and never recompute anything: label
and metric math happens in a `proclab` subprocess (the foreign-function
boundary is the process boundary), and data crosses it exclusively through
the documented file formats. JSON serializes IEEE doubles through repr, so
values returned here are bit-identical to the toolkit's own outputs.

Binding objects are single-threaded; concurrent use requires one object
(and its own temp directory) per thread.
"""

from __future__ import annotations

import json
import os
import random
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

__all__ = [
    "PrimaryToolError",
    "ProgressSettings",
    "BoundSampleIterator",
    "open_annotations",
    "compute_progress",
    "evaluate",
    "iter_vqa",
]

CLI_ENV = "PROCLAB_CLI"


class PrimaryToolError(RuntimeError):
    """A proclab invocation failed; carries the toolkit's original code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def _cli_command() -> list[str]:
    override = os.environ.get(CLI_ENV)
    if override:
        return override.split()
    exe = shutil.which("proclab")
    if exe:
        return [exe]
    return [sys.executable, "-m", "proclab.cli"]


def _run_cli(*argv: str) -> str:
    proc = subprocess.run(_cli_command() + list(argv),
                          capture_output=True, text=True)
    if proc.returncode != 0:
        for line in reversed(proc.stderr.strip().splitlines()):
            try:
                payload = json.loads(line)
                raise PrimaryToolError(payload.get("error", "UnknownError"),
                                       payload.get("message", line))
            except json.JSONDecodeError:
                continue
        raise PrimaryToolError(
            "UnknownError",
            f"exit {proc.returncode}: {proc.stderr.strip() or proc.stdout.strip()}")
    return proc.stdout


@dataclass(frozen=True)
class ProgressSettings:
    """Mirror of the toolkit's progress-label knobs (CLI flags)."""

    clip_lo: float = 0.75
    clip_hi: float = 1.25
    epsilon: float = 1e-6


def open_annotations(path: str | os.PathLike) -> Iterator[dict]:
    """Iterate annotation records (one dict per JSONL line), lazily."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _marshal_records(segments: Sequence[Mapping], num_frames: int) -> list[dict]:
    """Frame-wise record skeletons carrying exactly the segment structure
    the label command reconstructs: containment spans for completed
    subtasks, remaining-name lists for unfinished ones."""
    ordered = list(segments)
    assignment: list[tuple[int | None, str | None]] = [(None, None)] * num_frames
    for seg in ordered:
        start, complete = seg.get("start_frame"), seg.get("complete_frame")
        if start is None or complete is None:
            continue
        for t in range(start, complete + 1):
            assignment[t] = (seg["id"], seg["name"])
    rows = []
    for t in range(num_frames):
        remaining = [seg["name"] for seg in ordered
                     if seg.get("complete_frame") is None
                     or seg["complete_frame"] > t]
        sub_id, sub_name = assignment[t]
        rows.append({
            "dataset_name": "bind", "episode_id": "ep0", "camera_key": "cam0",
            "frame_id": t, "num_frames": num_frames, "instruction": "",
            "subtask_id": sub_id, "subtask_name": sub_name, "reasoning": "",
            "reasoning_source": "keyframe",
            "completion": "finished" if not remaining else "unfinished",
            "remaining_subtasks": remaining, "grounding_boxes": [],
            "progress": None,
        })
    return rows


def compute_progress(segments: Sequence[Mapping], diffs: Sequence[float],
                     settings: ProgressSettings = ProgressSettings()) -> list[float]:
    """Per-frame progress values for one trajectory.

    ``segments`` rows carry id, name, start_frame, complete_frame (null
    boundaries mark planned-but-unfinished subtasks); ``diffs`` holds the
    T - 1 per-step change magnitudes.
    """
    num_frames = len(diffs) + 1
    with tempfile.TemporaryDirectory(prefix="proclab-bind-") as tmp:
        tmp = Path(tmp)
        ann = tmp / "ann.jsonl"
        with open(ann, "w", encoding="utf-8") as fh:
            for row in _marshal_records(segments, num_frames):
                fh.write(json.dumps(row))
                fh.write("\n")
        dcsv = tmp / "diffs.csv"
        with open(dcsv, "w", encoding="utf-8") as fh:
            for v in diffs:
                fh.write(f"{float(v)!r}\n")
        out = tmp / "labeled.jsonl"
        _run_cli("label", "--annotations", str(ann), "--diffs", str(dcsv),
                 "--out", str(out),
                 "--clip", repr(settings.clip_lo), repr(settings.clip_hi),
                 "--eps", repr(settings.epsilon))
        values: dict[int, float] = {}
        for row in open_annotations(out):
            values[row["frame_id"]] = row["progress"]
    return [values[t] for t in range(num_frames)]


def evaluate(pred_path: str | os.PathLike, gt_path: str | os.PathLike,
             metrics: Sequence[str], tau: float = 0.5,
             threshold: float = 0.95) -> dict:
    """Metric name -> value mapping from the toolkit's eval report."""
    with tempfile.TemporaryDirectory(prefix="proclab-bind-") as tmp:
        report_path = Path(tmp) / "report.json"
        _run_cli("eval", "--pred", str(pred_path), "--gt", str(gt_path),
                 "--metrics", ",".join(metrics), "--tau", repr(tau),
                 "--threshold", repr(threshold), "--out", str(report_path))
        report = json.loads(report_path.read_text(encoding="utf-8"))
    return report["progress"]["metrics"]


class BoundSampleIterator:
    """Deterministic shuffled batch iterator over a VQA sample JSONL.

    Each sample is yielded exactly once per epoch; the order is fixed by
    the seed (epoch ``k`` uses seed + k).
    """

    def __init__(self, path: str | os.PathLike, batch_size: int, seed: int = 0):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.path = str(path)
        self.batch_size = batch_size
        self.seed = seed
        with open(path, "r", encoding="utf-8") as fh:
            self._samples = [json.loads(line) for line in fh if line.strip()]
        self._epoch = 0

    def __len__(self) -> int:
        return len(self._samples)

    def epoch(self, index: int | None = None) -> Iterator[list[dict]]:
        if index is None:
            index = self._epoch
            self._epoch += 1
        order = list(range(len(self._samples)))
        random.Random(self.seed + index).shuffle(order)
        for lo in range(0, len(order), self.batch_size):
            yield [self._samples[i] for i in order[lo:lo + self.batch_size]]

    def __iter__(self) -> Iterator[list[dict]]:
        return self.epoch()


def iter_vqa(path: str | os.PathLike, batch_size: int,
             seed: int = 0) -> BoundSampleIterator:
    return BoundSampleIterator(path, batch_size=batch_size, seed=seed)
