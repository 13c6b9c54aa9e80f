"""VQA training samples from dense annotations.

Five template families:
  a.1 ``seg_with_task``  - action segmentation with the task instruction
  a.2 ``seg_task_free``  - action segmentation from the frames alone
  b.1 ``next_step``      - immediate next atomic action
  b.2 ``future_plan``    - ordered remaining atomic actions
  c   ``progress``       - remaining actions, then a tagged completion value

a-family samples carry the full downsampled frame sequence with ascending
0-based frame-id markers, and their targets remap original boundaries into
the sampled numbering via floor(i * S / T). b/c families see a recent
window of frames ending at the queried frame.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import frame_path
from .errors import (
    MissingLabels,
    NoFutureAction,
    NoValidSubtasks,
    TagNotFound,
)
from .progress import ProgressLabels
from .segments import segments_from_records
from .types import AnnotationRecord, EpisodeRef

FAMILY_SEG_WITH_TASK = "seg_with_task"
FAMILY_SEG_TASK_FREE = "seg_task_free"
FAMILY_NEXT_STEP = "next_step"
FAMILY_FUTURE_PLAN = "future_plan"
FAMILY_PROGRESS = "progress"

FAMILIES = (FAMILY_SEG_WITH_TASK, FAMILY_SEG_TASK_FREE, FAMILY_NEXT_STEP,
            FAMILY_FUTURE_PLAN, FAMILY_PROGRESS)
FAMILY_ALIASES = {
    "a1": FAMILY_SEG_WITH_TASK, "a2": FAMILY_SEG_TASK_FREE,
    "b1": FAMILY_NEXT_STEP, "b2": FAMILY_FUTURE_PLAN, "c": FAMILY_PROGRESS,
}

SEG_WITH_TASK_PROMPT = (
    'Segment the execution of the task "{task}" into consecutive atomic '
    'actions. Each segment should correspond to a single, explicit '
    'verb-level action. Output a JSON list with keys "action_description", '
    '"start_frame", and "end_frame".')
SEG_TASK_FREE_PROMPT = (
    'Segment the actions shown in the image sequence into consecutive '
    'atomic actions, each described by a single explicit verb. Output a '
    'JSON list with keys "action_description", "start_frame", and '
    '"end_frame".')
NEXT_STEP_PROMPT = (
    'Given the recent observation and the task "{task}", predict the '
    'immediate next atomic action the robot should execute. Use a single '
    'explicit verb-level description.')
FUTURE_PLAN_PROMPT = (
    'Given the recent observation and the task "{task}", list the remaining '
    'atomic actions required to complete the task, starting from the next '
    'time step. Each action should be a single explicit verb-level step.')
PROGRESS_PROMPT = (
    'Given the recent observation and the task "{task}", first infer the '
    'remaining atomic actions required to complete the task. Then estimate '
    'the current completion percentage and output it as a float wrapped by '
    '<progress> tags.')


@dataclass(frozen=True)
class SamplingConfig:
    fps: float = 2.0
    max_frames: int = 512
    window: int = 4
    min_pixels: int = 32 * 32
    max_pixels: int = 512 * 512

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if not 1 <= self.window <= self.max_frames:
            raise ValueError(
                f"need 1 <= window <= max_frames, got window={self.window} "
                f"max_frames={self.max_frames}")


@dataclass(frozen=True)
class FrameRef:
    episode: EpisodeRef
    frame_id: int
    marker: int | None = None

    @property
    def path(self) -> str:
        return frame_path(self.episode, self.frame_id)


@dataclass(frozen=True)
class VqaSample:
    family: str
    instruction: str
    visual_refs: tuple[FrameRef, ...]
    prompt: str
    target: str
    progress_value: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.visual_refs:
            raise ValueError("visual_refs must be non-empty")
        if (self.progress_value is not None) != (self.family == FAMILY_PROGRESS):
            raise ValueError("progress_value is set iff family == progress")
        if self.family in (FAMILY_SEG_WITH_TASK, FAMILY_SEG_TASK_FREE):
            markers = [r.marker for r in self.visual_refs]
            if any(m is None for m in markers) or markers != sorted(markers):
                raise ValueError("a-family refs need ascending frame-id markers")


def sample_count(num_frames: int, config: SamplingConfig,
                 source_fps: float | None = None) -> int:
    """Frames to keep after downsampling. Without a known source rate the
    cap is max_frames; with one, the target rate applies first."""
    count = num_frames
    if source_fps and source_fps > 0:
        count = min(count, max(1, round(num_frames * config.fps / source_fps)))
    return min(count, config.max_frames)


def sample_indices(num_frames: int, count: int) -> list[int]:
    """Even grid of ``count`` original-frame indices: floor(i * T / S)."""
    count = min(count, num_frames)
    return [(i * num_frames) // count for i in range(count)]


def remap_frame_index(frame_id: int, num_frames: int, count: int) -> int:
    """Original index -> sampled-sequence index: floor(i * S / T)."""
    return min((frame_id * count) // num_frames, count - 1)


def _window_refs(episode: EpisodeRef, t: int, window: int) -> tuple[FrameRef, ...]:
    lo = max(0, t - window + 1)
    return tuple(FrameRef(episode, f) for f in range(lo, t + 1))


def _episode_of(records: Sequence[AnnotationRecord]) -> EpisodeRef:
    if not records:
        raise ValueError("no annotation records supplied")
    return records[0].episode


def gen_action_segmentation(records: Sequence[AnnotationRecord], with_task: bool,
                            config: SamplingConfig = SamplingConfig(),
                            source_fps: float | None = None) -> VqaSample:
    episode = _episode_of(records)
    segments = [s for s in segments_from_records(list(records)) if s.is_valid]
    if not segments:
        raise NoValidSubtasks(f"{episode.trajectory_id} has no valid segments")
    num_frames = episode.num_frames
    count = sample_count(num_frames, config, source_fps)
    indices = sample_indices(num_frames, count)
    refs = tuple(FrameRef(episode, f, marker=i) for i, f in enumerate(indices))
    target = json.dumps([
        {"action_description": s.name,
         "start_frame": remap_frame_index(s.start_frame, num_frames, count),
         "end_frame": remap_frame_index(s.complete_frame, num_frames, count)}
        for s in sorted(segments, key=lambda s: s.start_frame)
    ])
    family = FAMILY_SEG_WITH_TASK if with_task else FAMILY_SEG_TASK_FREE
    prompt = (SEG_WITH_TASK_PROMPT.replace("{task}", episode.instruction)
              if with_task else SEG_TASK_FREE_PROMPT)
    return VqaSample(family=family, instruction=episode.instruction,
                     visual_refs=refs, prompt=prompt, target=target)


def _future_segments(records: Sequence[AnnotationRecord], t: int):
    segments = [s for s in segments_from_records(list(records)) if s.is_valid]
    return [s for s in sorted(segments, key=lambda s: s.start_frame)
            if s.start_frame > t]


def gen_next_step(records: Sequence[AnnotationRecord], t: int,
                  config: SamplingConfig = SamplingConfig()) -> VqaSample:
    episode = _episode_of(records)
    future = _future_segments(records, t)
    if not future:
        raise NoFutureAction(f"no subtask starts after frame {t}")
    return VqaSample(
        family=FAMILY_NEXT_STEP, instruction=episode.instruction,
        visual_refs=_window_refs(episode, t, config.window),
        prompt=NEXT_STEP_PROMPT.replace("{task}", episode.instruction),
        target=future[0].name)


def gen_future_plan(records: Sequence[AnnotationRecord], t: int,
                    config: SamplingConfig = SamplingConfig()) -> VqaSample:
    episode = _episode_of(records)
    future = _future_segments(records, t)
    if not future:
        raise NoFutureAction(f"no subtask starts after frame {t}")
    return VqaSample(
        family=FAMILY_FUTURE_PLAN, instruction=episode.instruction,
        visual_refs=_window_refs(episode, t, config.window),
        prompt=FUTURE_PLAN_PROMPT.replace("{task}", episode.instruction),
        target="\n".join(s.name for s in future))


def format_progress_tag(value: float) -> str:
    return f"<progress> {100.0 * value:.2f} %</progress>"


def gen_progress(records: Sequence[AnnotationRecord],
                 labels: ProgressLabels | np.ndarray | Sequence[float] | None,
                 t: int, config: SamplingConfig = SamplingConfig()) -> VqaSample:
    episode = _episode_of(records)
    values = labels.values if isinstance(labels, ProgressLabels) else labels
    if values is None or t >= len(values) or values[t] is None:
        raise MissingLabels(f"no progress label at frame {t}")
    value = float(values[t])
    by_frame = {r.frame_id: r for r in records}
    rec = by_frame.get(t)
    remaining = list(rec.remaining_subtasks) if rec else []
    lines = remaining if remaining else ["No remaining atomic actions."]
    target = "\n".join(lines + [format_progress_tag(value)])
    return VqaSample(
        family=FAMILY_PROGRESS, instruction=episode.instruction,
        visual_refs=_window_refs(episode, t, config.window),
        prompt=PROGRESS_PROMPT.replace("{task}", episode.instruction),
        target=target, progress_value=value)


class ParsedProgress(NamedTuple):
    value: float
    clamped: bool


_TAG = re.compile(
    r"<progress>\s*([-+]?(?:\d+\.?\d*|\.\d+))\s*%?\s*</progress>")


def parse_progress_tag(text: str) -> ParsedProgress:
    """Scalar completion value from the last progress tag, on [0, 1].

    The last tag wins (reasoning may quote earlier tentative values);
    whitespace and the percent sign are optional; values outside [0, 100]
    clamp with a warning flag.
    """
    matches = _TAG.findall(text)
    if not matches:
        raise TagNotFound("no progress tag in text")
    raw = float(matches[-1])
    clamped = not 0.0 <= raw <= 100.0
    return ParsedProgress(min(max(raw / 100.0, 0.0), 1.0), clamped)


# --- sample JSONL -------------------------------------------------------------

def sample_to_dict(sample: VqaSample) -> dict:
    return {
        "family": sample.family,
        "instruction": sample.instruction,
        "prompt": sample.prompt,
        "images": [r.path for r in sample.visual_refs],
        "frame_markers": [r.marker for r in sample.visual_refs]
        if sample.family in (FAMILY_SEG_WITH_TASK, FAMILY_SEG_TASK_FREE) else None,
        "target": sample.target,
        "progress": sample.progress_value,
    }


def write_samples(samples, dest) -> int:
    n = 0
    close = False
    if not hasattr(dest, "write"):
        dest = open(dest, "w", encoding="utf-8")
        close = True
    try:
        for s in samples:
            dest.write(json.dumps(sample_to_dict(s), ensure_ascii=False))
            dest.write("\n")
            n += 1
    finally:
        if close:
            dest.close()
    return n


def read_sample_dicts(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
