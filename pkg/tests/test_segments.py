import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proclab.errors import (
    BoundaryOutOfRange,
    EmptyPlan,
    InvertedSpan,
    OverlapError,
    UnvalidatedInput,
)
from proclab.segments import (
    expand_segments_to_frames,
    propagate_keyframe_reasoning,
    segments_from_records,
    validate_segmentation,
)
from proclab.types import (
    AnnotationRecord,
    CompletionState,
    EpisodeRef,
    ReasoningSource,
    SegmentationResult,
    SubtaskSegment,
)


def seg_of(*spans, task="t"):
    subs = []
    for i, span in enumerate(spans, 1):
        start, complete = span
        subs.append(SubtaskSegment(id=i, name=f"s{i}", start_frame=start,
                                   complete_frame=complete))
    return SegmentationResult(task=task, subtasks=tuple(subs))


# --- validate ----------------------------------------------------------------

def test_validate_clean_passthrough():
    out, report = validate_segmentation(seg_of((0, 10), (11, 30)), 40, "strict")
    assert [ (s.start_frame, s.complete_frame) for s in out.subtasks ] == [(0, 10), (11, 30)]
    assert report.clean


def test_validate_overlap_strict_raises():
    with pytest.raises(OverlapError):
        validate_segmentation(seg_of((0, 20), (15, 30)), 40, "strict")


def test_validate_overlap_auto_trim():
    out, report = validate_segmentation(seg_of((0, 20), (15, 30)), 40, "auto_trim")
    spans = [(s.start_frame, s.complete_frame) for s in out.subtasks]
    assert spans == [(0, 14), (15, 30)]
    assert len(report.repairs) == 1
    assert report.repairs[0].action == "trimmed_complete"


def test_validate_inverted_span_always_raises():
    for policy in ("strict", "auto_trim"):
        with pytest.raises(InvertedSpan):
            validate_segmentation(seg_of((10, 5)), 20, policy)


def test_validate_out_of_range():
    with pytest.raises(BoundaryOutOfRange):
        validate_segmentation(seg_of((0, 50)), 40, "strict")
    out, report = validate_segmentation(seg_of((0, 50)), 40, "auto_trim")
    assert out.subtasks[0].complete_frame == 39
    assert report.repairs[0].action == "clamped_complete_frame"


def test_validate_empty_plan():
    with pytest.raises(EmptyPlan):
        validate_segmentation(SegmentationResult("t", ()), 10)


def test_validate_keeps_unfinished_and_absent():
    seg = SegmentationResult("t", (
        SubtaskSegment(1, "a", 0, 5),
        SubtaskSegment(2, "b", 6, None),
        SubtaskSegment(3, "c", None, None, notes="not present"),
    ))
    out, _ = validate_segmentation(seg, 10, "strict")
    assert out.subtasks[1].is_started_unfinished
    assert out.subtasks[2].is_absent


def test_validate_dangling_complete():
    seg = SegmentationResult("t", (SubtaskSegment(1, "a", None, 5),))
    with pytest.raises(BoundaryOutOfRange):
        validate_segmentation(seg, 10, "strict")
    out, report = validate_segmentation(seg, 10, "auto_trim")
    assert out.subtasks[0].is_absent
    assert report.repairs[0].action == "dropped_dangling_complete"


def test_validate_contained_segment_trims_earlier():
    out, report = validate_segmentation(seg_of((0, 30), (5, 10)), 40, "auto_trim")
    spans = [(s.start_frame, s.complete_frame) for s in out.subtasks]
    assert spans == [(0, 4), (5, 10)]


def test_validate_equal_starts_demotes_earlier():
    out, report = validate_segmentation(seg_of((5, 30), (5, 10)), 40, "auto_trim")
    by_id = {s.id: s for s in out.subtasks}
    assert by_id[1].is_started_unfinished
    assert (by_id[2].start_frame, by_id[2].complete_frame) == (5, 10)
    assert any(r.action == "trimmed_away" for r in report.repairs)


spans_strategy = st.lists(
    st.tuples(st.integers(0, 39), st.integers(0, 10)).map(
        lambda p: (p[0], min(p[0] + p[1], 39))),
    min_size=1, max_size=6)


@given(spans_strategy)
@settings(max_examples=150, deadline=None)
def test_auto_trim_coverage_and_idempotence(spans):
    seg = SegmentationResult("t", tuple(
        SubtaskSegment(id=i + 1, name=f"s{i+1}", start_frame=a, complete_frame=b)
        for i, (a, b) in enumerate(spans)))
    out, _ = validate_segmentation(seg, 40, "auto_trim")
    # frame-coverage oracle: after repair every frame sits in <= 1 segment
    claimed = [0] * 40
    for s in out.subtasks:
        if s.is_valid:
            for t in range(s.start_frame, s.complete_frame + 1):
                claimed[t] += 1
    assert max(claimed) <= 1
    again, report = validate_segmentation(out, 40, "auto_trim")
    assert [ (s.id, s.start_frame, s.complete_frame) for s in again.subtasks ] == \
        [ (s.id, s.start_frame, s.complete_frame) for s in out.subtasks ]
    assert not report.repairs


# --- expand ------------------------------------------------------------------

def test_expand_direct_containment():
    assert expand_segments_to_frames(seg_of((0, 1), (2, 3)), 5) == [1, 1, 2, 2, None]


def test_expand_full_cover():
    assert expand_segments_to_frames(seg_of((0, 4)), 5) == [1, 1, 1, 1, 1]


def test_expand_gap_edges():
    assert expand_segments_to_frames(seg_of((1, 2)), 4) == [None, 1, 1, None]


def test_expand_rejects_overlap():
    with pytest.raises(UnvalidatedInput):
        expand_segments_to_frames(seg_of((0, 5), (3, 8)), 10)


@given(spans_strategy)
@settings(max_examples=100, deadline=None)
def test_expand_coverage_count(spans):
    seg, _ = validate_segmentation(
        SegmentationResult("t", tuple(
            SubtaskSegment(id=i + 1, name=f"s{i+1}", start_frame=a, complete_frame=b)
            for i, (a, b) in enumerate(spans))),
        40, "auto_trim")
    assignment = expand_segments_to_frames(seg, 40)
    # containment oracle scanning every frame
    for t, got in enumerate(assignment):
        inside = [s.id for s in seg.subtasks
                  if s.is_valid and s.start_frame <= t <= s.complete_frame]
        assert got == (inside[0] if inside else None)
    expected = sum(s.complete_frame - s.start_frame + 1
                   for s in seg.subtasks if s.is_valid)
    assert sum(a is not None for a in assignment) == expected


# --- propagate ----------------------------------------------------------------

def kf(episode, frame, subtask, reasoning):
    return AnnotationRecord(
        episode=episode, frame_id=frame, subtask_id=subtask,
        subtask_name=f"s{subtask}" if subtask else None, reasoning=reasoning,
        reasoning_source=ReasoningSource.KEYFRAME,
        completion=CompletionState.UNFINISHED)


def test_propagate_nearest_with_tie_to_earlier():
    ep = EpisodeRef("d", "e", "c", 6, "task")
    assignment = [1, 1, 1, 1, 1, 1]
    records, report = propagate_keyframe_reasoning(
        [kf(ep, 0, 1, "zero"), kf(ep, 4, 1, "four")], assignment)
    texts = [r.reasoning for r in records]
    assert texts == ["zero", "zero", "zero", "four", "four", "four"]
    sources = [r.reasoning_source for r in records]
    assert sources[0] == ReasoningSource.KEYFRAME
    assert sources[1] == ReasoningSource.PROPAGATED
    assert report.propagated_count == 4
    assert not report.empty_spans


def test_propagate_single_frame_span_identity():
    ep = EpisodeRef("d", "e", "c", 1, "task")
    records, report = propagate_keyframe_reasoning([kf(ep, 0, 1, "only")], [1])
    assert len(records) == 1 and records[0].reasoning == "only"
    assert report.propagated_count == 0


def test_propagate_never_crosses_span_boundary():
    ep = EpisodeRef("d", "e", "c", 6, "task")
    assignment = [1, 1, 1, 2, 2, 2]
    records, report = propagate_keyframe_reasoning([kf(ep, 0, 1, "A")], assignment)
    assert [r.reasoning for r in records[:3]] == ["A", "A", "A"]
    assert all(r.reasoning == "" for r in records[3:])
    assert report.empty_spans == ((3, 5, 2),)


def test_propagate_gap_runs_are_isolated():
    ep = EpisodeRef("d", "e", "c", 5, "task")
    assignment = [1, 1, None, None, 2]
    records, report = propagate_keyframe_reasoning(
        [kf(ep, 0, 1, "A"), kf(ep, 4, 2, "B")], assignment)
    assert [r.reasoning for r in records] == ["A", "A", "", "", "B"]
    assert (2, 3, None) in report.empty_spans


@given(st.lists(st.one_of(st.none(), st.integers(1, 3)), min_size=1, max_size=30),
       st.data())
@settings(max_examples=120, deadline=None)
def test_propagate_locality_property(raw_assignment, data):
    # normalize to contiguous runs per id so it is a legal expansion
    assignment = raw_assignment
    frames = len(assignment)
    ep = EpisodeRef("d", "e", "c", frames, "task")
    keyframe_frames = data.draw(st.lists(
        st.integers(0, frames - 1), unique=True, min_size=1, max_size=frames))
    keyframes = [kf(ep, f, assignment[f], f"kf{f}") for f in sorted(keyframe_frames)]
    records, _ = propagate_keyframe_reasoning(keyframes, assignment)
    assert len(records) == frames
    by_frame = {r.frame_id: r for r in records}
    runs = {}
    start = 0
    for t in range(1, frames + 1):
        if t == frames or assignment[t] != assignment[start]:
            for u in range(start, t):
                runs[u] = (start, t - 1)
            start = t
    kf_set = set(keyframe_frames)
    for rec in records:
        if rec.reasoning_source == ReasoningSource.KEYFRAME:
            continue
        lo, hi = runs[rec.frame_id]
        in_run = [f for f in kf_set if lo <= f <= hi]
        if not in_run:
            assert rec.reasoning == ""
            continue
        src_frame = int(rec.reasoning[2:])
        best = min(abs(f - rec.frame_id) for f in in_run)
        assert abs(src_frame - rec.frame_id) == best
        assert src_frame == min(f for f in in_run
                                if abs(f - rec.frame_id) == best)


def test_segments_from_records_roundtrip():
    ep = EpisodeRef("d", "e", "c", 8, "task")
    recs = []
    for t in range(8):
        sub = 1 if t < 3 else (2 if t < 6 else None)
        remaining = ("s2", "s3") if t < 6 else ("s3",)
        recs.append(AnnotationRecord(
            episode=ep, frame_id=t, subtask_id=sub,
            subtask_name=f"s{sub}" if sub else None, reasoning="",
            reasoning_source=ReasoningSource.KEYFRAME,
            completion=CompletionState.UNFINISHED,
            remaining_subtasks=remaining))
    segs = segments_from_records(recs)
    valid = [s for s in segs if s.is_valid]
    assert [(s.id, s.start_frame, s.complete_frame) for s in valid] == \
        [(1, 0, 2), (2, 3, 5)]
    placeholders = [s for s in segs if not s.is_valid]
    assert [s.name for s in placeholders] == ["s3"]
