"""Domain types for frame-wise procedural annotations.

Everything here is immutable after construction and safe to hand between
concurrent pipeline workers. Construction validates the type invariants and
raises :class:`FieldError` naming the offending field, which the JSONL layer
converts into :class:`~proclab.errors.SchemaViolation` with a line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class FieldError(ValueError):
    """Invariant violation on a named field of a domain type."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name
        self.message = message


class CompletionState(str, Enum):
    UNFINISHED = "unfinished"
    FINISHED = "finished"
    GIVEN_UP = "given_up"


class ReasoningSource(str, Enum):
    KEYFRAME = "keyframe"
    PROPAGATED = "propagated"


@dataclass(frozen=True)
class EpisodeRef:
    """Identity and extent of one trajectory under one camera.

    (dataset_name, episode_id, camera_key) must be unique within a corpus;
    num_frames is the trajectory length T.
    """

    dataset_name: str
    episode_id: str
    camera_key: str
    num_frames: int
    instruction: str = ""

    def __post_init__(self):
        for name in ("dataset_name", "episode_id", "camera_key"):
            if not getattr(self, name):
                raise FieldError(name, "identifier must be non-empty")
        if not isinstance(self.num_frames, int) or isinstance(self.num_frames, bool):
            raise FieldError("num_frames", "must be an integer")
        if self.num_frames < 1:
            raise FieldError("num_frames", f"must be >= 1, got {self.num_frames}")

    @property
    def trajectory_id(self) -> str:
        return f"{self.dataset_name}/{self.episode_id}/{self.camera_key}"


@dataclass(frozen=True)
class GroundingBox:
    """Normalized 2D box around a manipulation target."""

    label: str
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise FieldError(name, "must be a number")
            if not 0.0 <= float(v) <= 1.0:
                raise FieldError(name, f"must lie in [0, 1], got {v}")
        if not self.x_min < self.x_max:
            raise FieldError("x_max", f"x_min ({self.x_min}) must be < x_max ({self.x_max})")
        if not self.y_min < self.y_max:
            raise FieldError("y_max", f"y_min ({self.y_min}) must be < y_max ({self.y_max})")


@dataclass(frozen=True)
class SubtaskSegment:
    """One atomic action with its temporal span.

    Boundary conventions:
      * both boundaries present  -> a valid, completed segment;
      * start only               -> started but never finished;
      * both null                -> planned but not present in the video.
    """

    id: int
    name: str
    start_frame: int | None = None
    complete_frame: int | None = None
    notes: str = ""

    def __post_init__(self):
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 1:
            raise FieldError("id", f"must be an integer >= 1, got {self.id!r}")
        if not self.name:
            raise FieldError("name", "must be non-empty")
        for attr in ("start_frame", "complete_frame"):
            v = getattr(self, attr)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 0):
                raise FieldError(attr, f"must be a non-negative integer or null, got {v!r}")

    @property
    def is_valid(self) -> bool:
        return self.start_frame is not None and self.complete_frame is not None

    @property
    def is_started_unfinished(self) -> bool:
        return self.start_frame is not None and self.complete_frame is None

    @property
    def is_absent(self) -> bool:
        return self.start_frame is None and self.complete_frame is None

    @property
    def duration(self) -> int:
        """Span length in frames (inclusive boundaries)."""
        if not self.is_valid:
            raise ValueError(f"segment {self.id} has no complete span")
        return self.complete_frame - self.start_frame + 1


@dataclass(frozen=True)
class SegmentationResult:
    """Full subtask plan of one episode as produced by an annotator."""

    task: str
    subtasks: tuple[SubtaskSegment, ...]
    overall_notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "subtasks", tuple(self.subtasks))
        ids = [s.id for s in self.subtasks]
        if len(ids) != len(set(ids)):
            raise FieldError("subtasks", f"subtask ids must be unique, got {ids}")

    def valid_segments(self) -> tuple[SubtaskSegment, ...]:
        """Segments with both boundaries, ordered by start_frame."""
        segs = [s for s in self.subtasks if s.is_valid]
        return tuple(sorted(segs, key=lambda s: (s.start_frame, s.id)))

    def unfinished_segments(self) -> tuple[SubtaskSegment, ...]:
        """Planned subtasks without a complete span (started or absent)."""
        return tuple(s for s in self.subtasks if not s.is_valid)

    @property
    def completed(self) -> bool:
        """True iff every planned subtask has both boundaries."""
        return bool(self.subtasks) and all(s.is_valid for s in self.subtasks)

    @property
    def failed(self) -> bool:
        return (not self.completed) or "not completed" in self.overall_notes.lower()


@dataclass(frozen=True)
class AnnotationRecord:
    """One frame's procedural supervision; the JSONL unit.

    ``extra`` holds unknown keys found on read so that round-tripping
    foreign files preserves them.
    """

    episode: EpisodeRef
    frame_id: int
    subtask_id: int | None
    subtask_name: str | None
    reasoning: str
    reasoning_source: ReasoningSource
    completion: CompletionState
    remaining_subtasks: tuple[str, ...] = ()
    grounding_boxes: tuple[GroundingBox, ...] = ()
    progress: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "remaining_subtasks", tuple(self.remaining_subtasks))
        object.__setattr__(self, "grounding_boxes", tuple(self.grounding_boxes))
        if not isinstance(self.frame_id, int) or isinstance(self.frame_id, bool) or self.frame_id < 0:
            raise FieldError("frame_id", f"must be a non-negative integer, got {self.frame_id!r}")
        if self.frame_id >= self.episode.num_frames:
            raise FieldError(
                "frame_id",
                f"{self.frame_id} out of range for num_frames={self.episode.num_frames}")
        if self.subtask_id is not None and (
                not isinstance(self.subtask_id, int) or isinstance(self.subtask_id, bool)):
            raise FieldError("subtask_id", f"must be an integer or null, got {self.subtask_id!r}")
        if not isinstance(self.reasoning_source, ReasoningSource):
            raise FieldError("reasoning_source", f"unknown source {self.reasoning_source!r}")
        if not isinstance(self.completion, CompletionState):
            raise FieldError("completion", f"unknown completion state {self.completion!r}")
        if self.progress is not None:
            if not isinstance(self.progress, (int, float)) or isinstance(self.progress, bool):
                raise FieldError("progress", f"must be a number or null, got {self.progress!r}")
            if not 0.0 <= float(self.progress) <= 1.0:
                raise FieldError("progress", f"must lie in [0, 1], got {self.progress}")

    @property
    def sort_key(self) -> tuple:
        return (self.episode.dataset_name, self.episode.episode_id,
                self.frame_id, self.episode.camera_key)


def sanitize_grounding_boxes(raw: Any) -> tuple[tuple[GroundingBox, ...], list[str]]:
    """Keep well-formed boxes, report the rest.

    Used by consumers that must never abort on a single bad box coming
    out of an annotator.
    """
    kept: list[GroundingBox] = []
    dropped: list[str] = []
    if raw is None:
        return (), dropped
    for i, item in enumerate(raw):
        try:
            if isinstance(item, GroundingBox):
                kept.append(item)
            else:
                kept.append(GroundingBox(
                    label=str(item.get("label", "")),
                    x_min=item["x_min"], y_min=item["y_min"],
                    x_max=item["x_max"], y_max=item["y_max"]))
        except (FieldError, KeyError, TypeError, AttributeError) as exc:
            dropped.append(f"box[{i}]: {exc}")
    return tuple(kept), dropped
