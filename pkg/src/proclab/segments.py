"""Segment-level post-processing: validation, expansion, propagation.

These are the pure operations the pipeline consumer applies to raw
annotator output before records are written.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import (
    BoundaryOutOfRange,
    EmptyPlan,
    InvertedSpan,
    OverlapError,
    SchemaViolation,
    UnvalidatedInput,
)
from .types import (
    AnnotationRecord,
    CompletionState,
    ReasoningSource,
    SegmentationResult,
    SubtaskSegment,
)

NOTES_WORD_BUDGET = 60  # advisory; exceedance warns, never truncates


@dataclass(frozen=True)
class RepairEntry:
    subtask_id: int
    action: str
    before: tuple
    after: tuple


@dataclass(frozen=True)
class ValidationReport:
    repairs: tuple[RepairEntry, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def clean(self) -> bool:
        return not self.repairs and not self.warnings


def validate_segmentation(
    seg: SegmentationResult,
    num_frames: int,
    policy: str = "strict",
) -> tuple[SegmentationResult, ValidationReport]:
    """Check temporal consistency of a parsed segmentation.

    strict: any out-of-range boundary or overlap raises.
    auto_trim: boundaries are clamped into [0, num_frames - 1] and, when two
    valid segments overlap, the earlier segment's complete_frame is trimmed
    back to the later segment's start_frame - 1 (start frames are treated as
    authoritative); every repair lands in the report. An inverted span
    (start > complete) is an error under both policies.

    Segments trimmed to nothing are demoted to "started, unfinished".
    """
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    if policy not in ("strict", "auto_trim"):
        raise ValueError(f"unknown policy {policy!r}")
    if not seg.subtasks:
        raise EmptyPlan("segmentation contains no subtasks", task=seg.task)

    repairs: list[RepairEntry] = []
    warnings: list[str] = []
    hi = num_frames - 1

    def clamp(sub: SubtaskSegment, attr: str) -> SubtaskSegment:
        v = getattr(sub, attr)
        if v is None or 0 <= v <= hi:
            return sub
        if policy == "strict":
            raise BoundaryOutOfRange(
                f"{attr}={v} outside [0, {hi}]", subtask_id=sub.id)
        fixed = replace(sub, **{attr: min(max(v, 0), hi)})
        repairs.append(RepairEntry(sub.id, f"clamped_{attr}",
                                   (sub.start_frame, sub.complete_frame),
                                   (fixed.start_frame, fixed.complete_frame)))
        return fixed

    cleaned: list[SubtaskSegment] = []
    for sub in seg.subtasks:
        if sub.start_frame is None and sub.complete_frame is not None:
            if policy == "strict":
                raise BoundaryOutOfRange(
                    "complete_frame without start_frame", subtask_id=sub.id)
            repairs.append(RepairEntry(sub.id, "dropped_dangling_complete",
                                       (None, sub.complete_frame), (None, None)))
            sub = replace(sub, complete_frame=None)
        if sub.is_valid and sub.start_frame > sub.complete_frame:
            raise InvertedSpan(
                f"start_frame {sub.start_frame} > complete_frame {sub.complete_frame}",
                subtask_id=sub.id)
        sub = clamp(sub, "start_frame")
        sub = clamp(sub, "complete_frame")
        if len(sub.notes.split()) > NOTES_WORD_BUDGET:
            warnings.append(f"subtask {sub.id}: notes exceed {NOTES_WORD_BUDGET} words")
        cleaned.append(sub)

    # Overlap resolution among valid segments, ordered by start.
    valid = sorted((s for s in cleaned if s.is_valid), key=lambda s: (s.start_frame, s.id))
    resolved: list[SubtaskSegment] = []
    demoted: dict[int, SubtaskSegment] = {}
    for cur in valid:
        if resolved:
            prev = resolved[-1]
            if cur.start_frame <= prev.complete_frame:
                if policy == "strict":
                    raise OverlapError(
                        f"segment {prev.id} [{prev.start_frame}, {prev.complete_frame}] "
                        f"overlaps segment {cur.id} [{cur.start_frame}, {cur.complete_frame}]",
                        subtask_ids=(prev.id, cur.id))
                new_end = cur.start_frame - 1
                if new_end < prev.start_frame:
                    repairs.append(RepairEntry(prev.id, "trimmed_away",
                                               (prev.start_frame, prev.complete_frame),
                                               (prev.start_frame, None)))
                    demoted[prev.id] = replace(prev, complete_frame=None)
                    resolved.pop()
                else:
                    repairs.append(RepairEntry(prev.id, "trimmed_complete",
                                               (prev.start_frame, prev.complete_frame),
                                               (prev.start_frame, new_end)))
                    resolved[-1] = replace(prev, complete_frame=new_end)
        resolved.append(cur)

    by_id = {s.id: s for s in resolved}
    by_id.update(demoted)
    final: list[SubtaskSegment] = []
    for sub in cleaned:
        final.append(by_id.get(sub.id, sub))
    # valid and started segments ordered by start_frame, absent ones last
    final.sort(key=lambda s: (s.start_frame is None,
                              s.start_frame if s.start_frame is not None else 0,
                              s.id))
    out = SegmentationResult(task=seg.task, subtasks=tuple(final),
                             overall_notes=seg.overall_notes)
    return out, ValidationReport(tuple(repairs), tuple(warnings))


def expand_segments_to_frames(seg: SegmentationResult, num_frames: int) -> list[int | None]:
    """Frame-wise subtask assignment: frame t -> id of the unique valid
    segment containing it, else None."""
    valid = seg.valid_segments()
    prev_end = None
    for s in valid:
        if s.complete_frame > num_frames - 1 or s.start_frame < 0:
            raise UnvalidatedInput(
                f"segment {s.id} out of range for num_frames={num_frames}")
        if prev_end is not None and s.start_frame <= prev_end:
            raise UnvalidatedInput(
                f"segments overlap at frame {s.start_frame}; validate first")
        prev_end = s.complete_frame
    assignment: list[int | None] = [None] * num_frames
    for s in valid:
        for t in range(s.start_frame, s.complete_frame + 1):
            assignment[t] = s.id
    return assignment


@dataclass(frozen=True)
class PropagationReport:
    keyframe_count: int
    propagated_count: int
    empty_spans: tuple[tuple[int, int, int | None], ...] = ()

    @property
    def empty_frame_count(self) -> int:
        return sum(end - start + 1 for start, end, _ in self.empty_spans)


def _runs(assignment: list[int | None]) -> list[tuple[int, int, int | None]]:
    runs = []
    start = 0
    for t in range(1, len(assignment) + 1):
        if t == len(assignment) or assignment[t] != assignment[start]:
            runs.append((start, t - 1, assignment[start]))
            start = t
    return runs


def propagate_keyframe_reasoning(
    keyframe_records: list[AnnotationRecord],
    frame_assignment: list[int | None],
) -> tuple[list[AnnotationRecord], PropagationReport]:
    """Densify keyframe reasoning over every frame.

    Non-keyframes copy the reasoning of the nearest keyframe inside the same
    assignment run (ties go to the earlier keyframe); propagation never
    crosses a run boundary, so a span annotated in run A never leaks into
    run B. Runs with no keyframe at all yield empty-reasoning records and
    are listed in the report. Grounding boxes are frame-specific and are
    not propagated.
    """
    if not keyframe_records:
        report = PropagationReport(0, 0, tuple(_runs(frame_assignment)))
        return [], report

    by_frame: dict[int, AnnotationRecord] = {}
    for rec in keyframe_records:
        if rec.frame_id >= len(frame_assignment):
            raise ValueError(
                f"keyframe at frame {rec.frame_id} has no assignment entry "
                f"(assignment length {len(frame_assignment)})")
        by_frame.setdefault(rec.frame_id, rec)

    episode = keyframe_records[0].episode
    names = {r.subtask_id: r.subtask_name for r in keyframe_records
             if r.subtask_id is not None}

    out: list[AnnotationRecord] = []
    empty_spans: list[tuple[int, int, int | None]] = []
    propagated = 0
    for start, end, sub_id in _runs(frame_assignment):
        kfs = sorted(f for f in by_frame if start <= f <= end)
        if not kfs:
            empty_spans.append((start, end, sub_id))
        for t in range(start, end + 1):
            if t in by_frame:
                out.append(by_frame[t])
                continue
            if not kfs:
                out.append(AnnotationRecord(
                    episode=episode, frame_id=t, subtask_id=sub_id,
                    subtask_name=names.get(sub_id), reasoning="",
                    reasoning_source=ReasoningSource.PROPAGATED,
                    completion=CompletionState.UNFINISHED,
                    remaining_subtasks=()))
                continue
            # nearest keyframe in this run; earlier wins ties
            src = by_frame[min(kfs, key=lambda f: (abs(f - t), f))]
            out.append(replace(
                src, frame_id=t,
                reasoning_source=ReasoningSource.PROPAGATED,
                grounding_boxes=()))
            propagated += 1
    out.sort(key=lambda r: r.frame_id)
    report = PropagationReport(len(by_frame), propagated, tuple(empty_spans))
    return out, report


def segments_from_records(records: list[AnnotationRecord]) -> list[SubtaskSegment]:
    """Reconstruct the planned subtask list from dense frame records.

    Completed spans come from contiguous runs of equal subtask_id; subtasks
    still listed in remaining_subtasks at the final frame never completed
    and are reconstructed as planned-but-unfinished placeholders (fresh ids
    above the observed range), which is all the progress formula needs.
    """
    if not records:
        return []
    ordered = sorted(records, key=lambda r: r.frame_id)
    spans: dict[int, tuple[int, int, str | None]] = {}
    for rec in ordered:
        if rec.subtask_id is None:
            continue
        if rec.subtask_id in spans:
            lo, hi, name = spans[rec.subtask_id]
            spans[rec.subtask_id] = (min(lo, rec.frame_id), max(hi, rec.frame_id),
                                     name or rec.subtask_name)
        else:
            spans[rec.subtask_id] = (rec.frame_id, rec.frame_id, rec.subtask_name)
    segs = [SubtaskSegment(id=sid, name=name or f"subtask {sid}",
                           start_frame=lo, complete_frame=hi)
            for sid, (lo, hi, name) in sorted(spans.items())]
    next_id = max(spans, default=0) + 1
    for name in ordered[-1].remaining_subtasks:
        segs.append(SubtaskSegment(id=next_id, name=name))
        next_id += 1
    return segs


def parse_completion(value: str) -> CompletionState:
    try:
        return CompletionState(value)
    except ValueError:
        raise SchemaViolation(f"unknown completion state {value!r}", field="completion")
