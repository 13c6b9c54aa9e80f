"""Queue-connected four-stage annotation pipeline.

Stages (reader -> preprocessor -> annotator -> consumer) run concurrently
and exchange immutable work items through bounded queues, so a full queue
blocks its producer (back-pressure) and slow I/O, CPU preprocessing, and
backend inference overlap instead of serializing. Per-episode failures are
quarantined with the raw backend response attached and the run continues;
every source episode ends up in the output or in quarantine exactly once.

The consumer is the single serialization point: it validates, expands,
propagates, and collects records; the final ordering is established by one
sort at the end, not by pipeline timing, which keeps the stages free to
run fully concurrent.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass, field, replace
from queue import Queue
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .backends import AnnotatorBackend, FramePayload
from .errors import ConfigError, EmptyResponse, ProclabError
from .features import VisualSignal, frame_diffs, pixel_grayscale_features
from .parsing import parse_plan, parse_segmentation, verb_pattern_warnings
from .prompts import REASON_WORD_BUDGETS
from .segments import (
    ValidationReport,
    expand_segments_to_frames,
    propagate_keyframe_reasoning,
    validate_segmentation,
)
from .types import (
    AnnotationRecord,
    CompletionState,
    EpisodeRef,
    ReasoningSource,
    SegmentationResult,
)

logger = logging.getLogger(__name__)

STAGES = ("read", "preprocess", "annotate", "consume")


@dataclass(frozen=True)
class RetryConfig:
    max_attempts: int = 3
    backoff_base: float = 0.1

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.backoff_base < 0:
            raise ConfigError(f"backoff_base must be >= 0, got {self.backoff_base}")


@dataclass(frozen=True)
class StageDelays:
    """Artificial per-item stage latencies (seconds) for profiling runs.

    With jitter > 0 each item's delay is drawn uniformly from
    base * [1 - jitter, 1 + jitter] using a per-worker seeded RNG.
    """

    read: float = 0.0
    preprocess: float = 0.0
    annotate: float = 0.0
    consume: float = 0.0
    jitter: float = 0.0
    seed: int = 0

    def sample(self, stage: str, rng: random.Random) -> float:
        base = getattr(self, stage)
        if base <= 0:
            return 0.0
        if self.jitter <= 0:
            return base
        return max(0.0, base * (1.0 + self.jitter * (2.0 * rng.random() - 1.0)))


@dataclass(frozen=True)
class PipelineConfig:
    queue_capacity: int = 64
    preprocessor_workers: int = 4
    annotator_concurrency: int = 8
    dedup_threshold: float = 0.05
    retry: RetryConfig = field(default_factory=RetryConfig)
    validation_policy: str = "auto_trim"
    plan_sample_frames: int = 8
    diff_metric: str = "l2"
    stage_delays: StageDelays | None = None

    def __post_init__(self):
        if self.queue_capacity < 1:
            raise ConfigError(f"queue_capacity must be >= 1, got {self.queue_capacity}")
        if self.preprocessor_workers < 1 or self.annotator_concurrency < 1:
            raise ConfigError("worker counts must be >= 1")
        if not 0.0 <= self.dedup_threshold <= 1.0:
            raise ConfigError(
                f"dedup_threshold must lie in [0, 1], got {self.dedup_threshold}")
        if self.validation_policy not in ("strict", "auto_trim"):
            raise ConfigError(f"unknown validation policy {self.validation_policy!r}")
        if self.plan_sample_frames < 1:
            raise ConfigError("plan_sample_frames must be >= 1")


@dataclass
class Episode:
    """One trajectory entering the pipeline: identity plus a visual signal
    (precomputed features, precomputed diffs, or frame images)."""

    ref: EpisodeRef
    features: np.ndarray | None = None
    diffs: np.ndarray | None = None
    image_paths: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return self.ref.num_frames


@dataclass(frozen=True)
class QuarantineEntry:
    dataset_name: str
    episode_id: str
    camera_key: str
    stage: str
    error: str
    message: str
    raw_response: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name, "episode_id": self.episode_id,
            "camera_key": self.camera_key, "stage": self.stage,
            "error": self.error, "message": self.message,
            "raw_response": self.raw_response,
        }


@dataclass(frozen=True)
class PipelineReport:
    episodes_in: int
    episodes_out: int
    quarantined: int
    per_stage_busy_time: dict[str, float]
    per_stage_blocked_time: dict[str, float]
    wall_time: float
    throughput_fps: float
    warnings: int = 0

    def __post_init__(self):
        if self.episodes_out + self.quarantined != self.episodes_in:
            raise ValueError(
                f"exactly-once violated: {self.episodes_out} out + "
                f"{self.quarantined} quarantined != {self.episodes_in} in")

    def to_json_dict(self) -> dict:
        return {
            "episodes_in": self.episodes_in,
            "episodes_out": self.episodes_out,
            "quarantined": self.quarantined,
            "per_stage_busy_time": dict(self.per_stage_busy_time),
            "per_stage_blocked_time": dict(self.per_stage_blocked_time),
            "wall_time": self.wall_time,
            "throughput_fps": self.throughput_fps,
            "warnings": self.warnings,
        }


@dataclass
class PipelineResult:
    records: list[AnnotationRecord]
    quarantined: list[QuarantineEntry]
    report: PipelineReport


# --- pure building blocks -----------------------------------------------------

def dedup_keyframes(diffs, threshold: float) -> list[int]:
    """Visually deduplicated keyframe indices.

    Frame 0 and the last frame are always keyframes; an interior frame
    becomes one when the diff accumulated since the previous keyframe
    reaches threshold * max(diffs) (accumulation means slow drift still
    produces keyframes eventually). A signal with no change at all yields
    just the endpoints.
    """
    d = np.asarray(diffs, dtype=np.float64).reshape(-1)
    num_frames = len(d) + 1
    if num_frames == 1:
        return [0]
    peak = float(d.max()) if len(d) else 0.0
    if peak == 0.0:
        return [0, num_frames - 1]
    cut = threshold * peak
    keyframes = [0]
    acc = 0.0
    for t in range(1, num_frames):
        acc += float(d[t - 1])
        if acc >= cut:
            keyframes.append(t)
            acc = 0.0
    if keyframes[-1] != num_frames - 1:
        keyframes.append(num_frames - 1)
    return keyframes


def frame_state(seg: SegmentationResult, frame_id: int) -> tuple[CompletionState, tuple[str, ...]]:
    """Completion state and remaining subtask names at one frame.

    A subtask is done at frame f once its complete_frame is <= f. On a
    failed execution, frames strictly after the last observed boundary are
    given_up (nothing further happens in the video); earlier incomplete
    frames are merely unfinished.
    """
    remaining = tuple(
        s.name for s in seg.subtasks
        if not (s.is_valid and s.complete_frame <= frame_id))
    if not remaining:
        return CompletionState.FINISHED, remaining
    if seg.failed:
        boundaries = [b for s in seg.subtasks
                      for b in (s.start_frame, s.complete_frame) if b is not None]
        last = max(boundaries, default=-1)
        if frame_id > last:
            return CompletionState.GIVEN_UP, remaining
    return CompletionState.UNFINISHED, remaining


def plan_task(instruction: str, frames: Sequence[FramePayload],
              backend: AnnotatorBackend) -> tuple[tuple[str, ...], list[str]]:
    """Query the backend for a task plan and parse the numbered list."""
    if not frames:
        raise ValueError("plan_task needs at least one sampled frame")
    response = backend.plan(instruction, frames)
    try:
        actions, warnings = parse_plan(response)
    except ProclabError as exc:
        exc.context.setdefault("raw", response)
        raise
    warnings.extend(verb_pattern_warnings(actions))
    return tuple(actions), warnings


def segment_subtasks(instruction: str, plan: Sequence[str],
                     frames: Sequence[FramePayload], backend: AnnotatorBackend,
                     num_frames: int, policy: str = "auto_trim",
                     ) -> tuple[SegmentationResult, ValidationReport, str]:
    """Query, parse, and validate the subtask segmentation.

    Returns (validated segmentation, validation report, raw response)."""
    raw = backend.segment(instruction, plan, frames)
    try:
        parsed = parse_segmentation(raw)
        validated, report = validate_segmentation(parsed, num_frames, policy=policy)
    except ProclabError as exc:
        exc.context.setdefault("raw", raw)
        raise
    return validated, report, raw


def annotate_keyframe(frame: FramePayload, completion: CompletionState,
                      remaining: Sequence[str], backend: AnnotatorBackend,
                      retry: RetryConfig = RetryConfig()) -> tuple[str, list[str]]:
    """Keyframe reasoning text; retries empty responses before giving up."""
    warnings: list[str] = []
    text = ""
    for attempt in range(retry.max_attempts):
        if attempt:
            time.sleep(retry.backoff_base * (2 ** (attempt - 1)))
        text = backend.reason(frame, completion, list(remaining)).strip()
        if text:
            break
    if not text:
        raise EmptyResponse(
            f"empty reasoning for frame {frame.index} after "
            f"{retry.max_attempts} attempts")
    budget = REASON_WORD_BUDGETS[completion]
    if len(text.split()) > budget:
        warnings.append(
            f"frame {frame.index}: reasoning exceeds {budget}-word budget")
    return text, warnings


def _sample_indices(num_frames: int, count: int) -> list[int]:
    if count >= num_frames:
        return list(range(num_frames))
    if count == 1:
        return [0]
    pts = {round(i * (num_frames - 1) / (count - 1)) for i in range(count)}
    return sorted(pts)


# --- the pipeline itself --------------------------------------------------------

_SENTINEL = object()


@dataclass
class _Item:
    episode: Episode
    diffs: np.ndarray | None = None
    keyframes: list[int] = field(default_factory=list)
    plan_payloads: list[FramePayload] = field(default_factory=list)
    keyframe_payloads: list[FramePayload] = field(default_factory=list)
    plan: tuple[str, ...] = ()
    seg: SegmentationResult | None = None
    notes: dict[int, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    quarantine: QuarantineEntry | None = None

    def fail(self, stage: str, exc: Exception, raw: str | None = None) -> "_Item":
        if raw is None and isinstance(exc, ProclabError):
            raw = exc.context.get("raw")
        code = exc.code if isinstance(exc, ProclabError) else type(exc).__name__
        self.quarantine = QuarantineEntry(
            dataset_name=self.episode.ref.dataset_name,
            episode_id=self.episode.ref.episode_id,
            camera_key=self.episode.ref.camera_key,
            stage=stage, error=code, message=str(exc), raw_response=raw)
        return self


class _Meter:
    """Per-stage busy/blocked time accounting shared across workers."""

    def __init__(self):
        self.busy = {s: 0.0 for s in STAGES}
        self.blocked = {s: 0.0 for s in STAGES}
        self._lock = threading.Lock()

    def add(self, stage: str, busy: float = 0.0, blocked: float = 0.0):
        with self._lock:
            self.busy[stage] += busy
            self.blocked[stage] += blocked


def _timed_put(q: Queue, item, meter: _Meter, stage: str):
    t0 = time.perf_counter()
    q.put(item)
    meter.add(stage, blocked=time.perf_counter() - t0)


def _preprocess(item: _Item, config: PipelineConfig,
                needs_images: bool) -> _Item:
    ep = item.episode
    if ep.diffs is not None:
        diffs = np.asarray(ep.diffs, dtype=np.float64).reshape(-1)
        if len(diffs) != ep.num_frames - 1:
            raise ConfigError(
                f"precomputed diffs have length {len(diffs)}, expected "
                f"{ep.num_frames - 1}")
    else:
        features = ep.features
        if features is None:
            if not ep.image_paths:
                raise ConfigError("episode has no features, diffs, or images")
            features = pixel_grayscale_features(ep.image_paths)
        if features.shape[0] != ep.num_frames:
            raise ConfigError(
                f"feature rows ({features.shape[0]}) != num_frames ({ep.num_frames})")
        diffs = frame_diffs(VisualSignal.from_features(features),
                            metric=config.diff_metric)
    item.diffs = diffs
    item.keyframes = dedup_keyframes(diffs, config.dedup_threshold)
    plan_idx = _sample_indices(ep.num_frames, config.plan_sample_frames)

    def payload(t: int) -> FramePayload:
        image = None
        if needs_images:
            if not ep.image_paths:
                raise ConfigError(
                    "backend needs images but episode carries only features")
            with open(ep.image_paths[t], "rb") as fh:
                image = fh.read()
        return FramePayload(index=t, instruction=ep.ref.instruction,
                            image_bytes=image)

    item.plan_payloads = [payload(t) for t in plan_idx]
    item.keyframe_payloads = [payload(t) for t in item.keyframes]
    return item


def _annotate(item: _Item, config: PipelineConfig,
              backend: AnnotatorBackend) -> _Item:
    ep = item.episode
    try:
        plan, warnings = plan_task(ep.ref.instruction, item.plan_payloads, backend)
        item.plan = plan
        item.warnings.extend(warnings)
        seg, val_report, _ = segment_subtasks(
            ep.ref.instruction, plan, item.keyframe_payloads, backend,
            ep.num_frames, policy=config.validation_policy)
        item.seg = seg
        item.warnings.extend(val_report.warnings)
        item.warnings.extend(
            f"repair {r.action} on subtask {r.subtask_id}" for r in val_report.repairs)
        for payload in item.keyframe_payloads:
            state, remaining = frame_state(seg, payload.index)
            text, rwarn = annotate_keyframe(payload, state, remaining, backend,
                                            retry=config.retry)
            item.notes[payload.index] = text
            item.warnings.extend(rwarn)
        return item
    except Exception as exc:
        return item.fail("annotate", exc)


def _consume(item: _Item) -> tuple[list[AnnotationRecord], list[str]]:
    ep = item.episode
    seg = item.seg
    assignment = expand_segments_to_frames(seg, ep.num_frames)
    names = {s.id: s.name for s in seg.subtasks}
    keyframe_records = []
    for t, text in sorted(item.notes.items()):
        state, remaining = frame_state(seg, t)
        keyframe_records.append(AnnotationRecord(
            episode=ep.ref, frame_id=t, subtask_id=assignment[t],
            subtask_name=names.get(assignment[t]), reasoning=text,
            reasoning_source=ReasoningSource.KEYFRAME, completion=state,
            remaining_subtasks=remaining))
    dense, prop_report = propagate_keyframe_reasoning(keyframe_records, assignment)
    records = []
    for rec in dense:
        state, remaining = frame_state(seg, rec.frame_id)
        records.append(replace(rec, completion=state, remaining_subtasks=remaining))
    warnings = []
    if prop_report.empty_spans:
        warnings.append(
            f"{ep.ref.trajectory_id}: {prop_report.empty_frame_count} frames in "
            f"{len(prop_report.empty_spans)} span(s) have no keyframe reasoning")
    return records, warnings


def run_pipeline(source: Iterable[Episode], backend: AnnotatorBackend,
                 config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Run the four stages to completion over ``source``.

    Blocking call; returns records sorted by (dataset_name, episode_id,
    frame_id, camera_key), the quarantine list, and a profiling report.
    """
    wall_start = time.perf_counter()
    q_prep: Queue = Queue(maxsize=config.queue_capacity)
    q_annot: Queue = Queue(maxsize=config.queue_capacity)
    q_out: Queue = Queue(maxsize=config.queue_capacity)
    meter = _Meter()
    delays = config.stage_delays
    episodes_in = 0
    reader_error: list[BaseException] = []

    def stage_rng(stage: str, worker: int) -> random.Random:
        seed = delays.seed if delays else 0
        return random.Random(f"{seed}:{stage}:{worker}")

    def reader():
        nonlocal episodes_in
        rng = stage_rng("read", 0)
        try:
            for episode in source:
                t0 = time.perf_counter()
                if delays:
                    time.sleep(delays.sample("read", rng))
                episodes_in += 1
                meter.add("read", busy=time.perf_counter() - t0)
                _timed_put(q_prep, _Item(episode=episode), meter, "read")
        except BaseException as exc:  # noqa: BLE001 - reported after join
            reader_error.append(exc)
        finally:
            for _ in range(config.preprocessor_workers):
                q_prep.put(_SENTINEL)

    prep_remaining = [config.preprocessor_workers]
    annot_remaining = [config.annotator_concurrency]
    latch = threading.Lock()

    def preprocessor(worker: int):
        rng = stage_rng("preprocess", worker)
        while True:
            item = q_prep.get()
            if item is _SENTINEL:
                with latch:
                    prep_remaining[0] -= 1
                    last = prep_remaining[0] == 0
                if last:
                    for _ in range(config.annotator_concurrency):
                        q_annot.put(_SENTINEL)
                return
            t0 = time.perf_counter()
            if delays:
                time.sleep(delays.sample("preprocess", rng))
            try:
                item = _preprocess(item, config, backend.needs_images)
            except Exception as exc:  # noqa: BLE001 - quarantine, keep running
                item = item.fail("preprocess", exc)
            meter.add("preprocess", busy=time.perf_counter() - t0)
            _timed_put(q_annot, item, meter, "preprocess")

    def annotator(worker: int):
        rng = stage_rng("annotate", worker)
        while True:
            item = q_annot.get()
            if item is _SENTINEL:
                with latch:
                    annot_remaining[0] -= 1
                    last = annot_remaining[0] == 0
                if last:
                    q_out.put(_SENTINEL)
                return
            t0 = time.perf_counter()
            if delays:
                time.sleep(delays.sample("annotate", rng))
            if item.quarantine is None:
                item = _annotate(item, config, backend)
            meter.add("annotate", busy=time.perf_counter() - t0)
            _timed_put(q_out, item, meter, "annotate")

    threads = [threading.Thread(target=reader, name="proclab-read", daemon=True)]
    threads += [threading.Thread(target=preprocessor, args=(i,),
                                 name=f"proclab-prep-{i}", daemon=True)
                for i in range(config.preprocessor_workers)]
    threads += [threading.Thread(target=annotator, args=(i,),
                                 name=f"proclab-annot-{i}", daemon=True)
                for i in range(config.annotator_concurrency)]
    for t in threads:
        t.start()

    # Consumer runs on the calling thread: the single serialization point.
    records: list[AnnotationRecord] = []
    quarantined: list[QuarantineEntry] = []
    warnings: list[str] = []
    episodes_out = 0
    frames_out = 0
    rng = stage_rng("consume", 0)
    while True:
        item = q_out.get()
        if item is _SENTINEL:
            break
        t0 = time.perf_counter()
        if delays:
            time.sleep(delays.sample("consume", rng))
        if item.quarantine is None:
            try:
                episode_records, cwarn = _consume(item)
                records.extend(episode_records)
                warnings.extend(item.warnings)
                warnings.extend(cwarn)
                episodes_out += 1
                frames_out += item.episode.num_frames
            except Exception as exc:  # noqa: BLE001 - quarantine, keep running
                item.fail("consume", exc)
        if item.quarantine is not None:
            quarantined.append(item.quarantine)
            logger.warning("quarantined %s/%s at %s: %s",
                           item.quarantine.dataset_name, item.quarantine.episode_id,
                           item.quarantine.stage, item.quarantine.message)
        meter.add("consume", busy=time.perf_counter() - t0)

    for t in threads:
        t.join()
    if reader_error:
        raise reader_error[0]

    records.sort(key=lambda r: r.sort_key)
    quarantined.sort(key=lambda q: (q.dataset_name, q.episode_id, q.camera_key))
    wall = time.perf_counter() - wall_start
    report = PipelineReport(
        episodes_in=episodes_in, episodes_out=episodes_out,
        quarantined=len(quarantined),
        per_stage_busy_time=dict(meter.busy),
        per_stage_blocked_time=dict(meter.blocked),
        wall_time=wall,
        throughput_fps=frames_out / wall if wall > 0 else 0.0,
        warnings=len(warnings))
    for w in warnings:
        logger.info("pipeline warning: %s", w)
    return PipelineResult(records=records, quarantined=quarantined, report=report)


def episodes_from_callable(make_iter: Callable[[], Iterator[Episode]]) -> Iterable[Episode]:
    """Defer source construction to the reader thread (I/O isolation)."""
    class _Lazy:
        def __iter__(self):
            return make_iter()
    return _Lazy()
