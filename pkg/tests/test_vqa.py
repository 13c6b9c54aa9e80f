import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proclab.errors import MissingLabels, NoFutureAction, TagNotFound
from proclab.pipeline import frame_state
from proclab.progress import ProgressConfig, progress_labels
from proclab.segments import expand_segments_to_frames
from proclab.types import (
    AnnotationRecord,
    CompletionState,
    EpisodeRef,
    ReasoningSource,
    SegmentationResult,
    SubtaskSegment,
)
from proclab.vqa import (
    FAMILY_PROGRESS,
    SamplingConfig,
    format_progress_tag,
    gen_action_segmentation,
    gen_future_plan,
    gen_next_step,
    gen_progress,
    parse_progress_tag,
    remap_frame_index,
    sample_indices,
)


def dense_records(spans, num_frames, instruction="serve the tea"):
    seg = SegmentationResult(instruction, tuple(
        SubtaskSegment(id=i + 1, name=f"step {i+1}", start_frame=a, complete_frame=b)
        for i, (a, b) in enumerate(spans)))
    assignment = expand_segments_to_frames(seg, num_frames)
    episode = EpisodeRef("d", "e", "c", num_frames, instruction)
    names = {s.id: s.name for s in seg.subtasks}
    records = []
    for t in range(num_frames):
        state, remaining = frame_state(seg, t)
        records.append(AnnotationRecord(
            episode=episode, frame_id=t, subtask_id=assignment[t],
            subtask_name=names.get(assignment[t]), reasoning="r",
            reasoning_source=ReasoningSource.KEYFRAME, completion=state,
            remaining_subtasks=remaining))
    return records


# --- action segmentation ---------------------------------------------------------

def test_seg_sample_two_segments_with_task():
    records = dense_records([(0, 30), (40, 99)], 100)
    sample = gen_action_segmentation(records, with_task=True)
    target = json.loads(sample.target)
    assert [row["action_description"] for row in target] == ["step 1", "step 2"]
    assert all(0 <= row["start_frame"] <= row["end_frame"] < len(sample.visual_refs)
               for row in target)
    assert "serve the tea" in sample.prompt
    markers = [r.marker for r in sample.visual_refs]
    assert markers == sorted(markers)


def test_seg_task_free_prompt_has_no_instruction():
    records = dense_records([(0, 30), (40, 99)], 100)
    sample = gen_action_segmentation(records, with_task=False)
    assert "serve the tea" not in sample.prompt


def test_seg_remap_100_to_10():
    records = dense_records([(30, 60)], 100)
    sample = gen_action_segmentation(records, with_task=True,
                                     config=SamplingConfig(max_frames=10))
    target = json.loads(sample.target)
    assert target == [{"action_description": "step 1",
                       "start_frame": 3, "end_frame": 6}]
    assert len(sample.visual_refs) == 10


def test_remap_oracle():
    assert remap_frame_index(30, 100, 10) == 3
    assert remap_frame_index(60, 100, 10) == 6
    assert remap_frame_index(99, 100, 10) == 9


@given(st.integers(2, 400), st.integers(1, 64))
@settings(max_examples=120, deadline=None)
def test_remap_monotone_and_bounded(num_frames, count):
    count = min(count, num_frames)
    mapped = [remap_frame_index(i, num_frames, count) for i in range(num_frames)]
    assert mapped == sorted(mapped)
    assert 0 <= mapped[0] and mapped[-1] <= count - 1
    grid = sample_indices(num_frames, count)
    assert len(grid) == count
    if num_frames % count == 0:
        # on an exact grid the sampled positions map back onto themselves
        for pos, frame in enumerate(grid):
            assert remap_frame_index(frame, num_frames, count) == pos


# --- next step / future plan -------------------------------------------------------

def test_next_step_targets_second_segment():
    records = dense_records([(0, 9), (20, 29), (40, 49)], 60)
    sample = gen_next_step(records, 12)
    assert sample.target == "step 2"
    assert [r.frame_id for r in sample.visual_refs] == [9, 10, 11, 12]


def test_next_step_inside_last_segment_fails():
    records = dense_records([(0, 9), (20, 29)], 40)
    with pytest.raises(NoFutureAction):
        gen_next_step(records, 25)


def test_boundary_frame_picks_next_not_current():
    records = dense_records([(0, 9), (20, 29)], 40)
    assert gen_next_step(records, 9).target == "step 2"
    with pytest.raises(NoFutureAction):
        gen_next_step(records, 20)  # inside the final segment already


def test_future_plan_prefix_and_suffix():
    records = dense_records([(5, 9), (20, 29), (40, 49)], 60)
    assert gen_future_plan(records, 0).target == "step 1\nstep 2\nstep 3"
    assert gen_future_plan(records, 15).target == "step 2\nstep 3"
    with pytest.raises(NoFutureAction):
        gen_future_plan(records, 50)


def test_plan_consistency_next_equals_head_of_plan():
    records = dense_records([(0, 9), (20, 29), (40, 49)], 60)
    for t in (0, 5, 12, 30):
        nxt = gen_next_step(records, t).target
        plan = gen_future_plan(records, t).target.splitlines()
        assert plan[0] == nxt


# --- progress family ------------------------------------------------------------------

def test_progress_endpoints_render():
    records = dense_records([(0, 99)], 100)
    values = np.linspace(0, 1, 100)
    assert gen_progress(records, values, 99).target.endswith(
        "<progress> 100.00 %</progress>")
    assert gen_progress(records, values, 0).target.endswith(
        "<progress> 0.00 %</progress>")


def test_progress_midpoint_from_labels(rng):
    spans = [(0, 24), (25, 99)]
    records = dense_records(spans, 100)
    diffs = rng.uniform(0.1, 2.0, 99)
    labels = progress_labels(
        [SubtaskSegment(1, "step 1", 0, 24), SubtaskSegment(2, "step 2", 25, 99)],
        diffs, ProgressConfig())
    sample = gen_progress(records, labels, 24)
    assert "<progress> 37.50 %</progress>" in sample.target
    assert sample.progress_value == pytest.approx(0.375, abs=1e-9)
    assert sample.target.splitlines()[0] == "step 2"  # remaining actions first


def test_progress_missing_labels():
    records = dense_records([(0, 9)], 10)
    with pytest.raises(MissingLabels):
        gen_progress(records, None, 3)
    with pytest.raises(MissingLabels):
        gen_progress(records, [0.0, 0.5], 5)


# --- tag parsing ------------------------------------------------------------------------

def test_parse_fixture():
    value, clamped = parse_progress_tag("thinking...<progress> 37.5 %</progress>")
    assert value == pytest.approx(0.375)
    assert not clamped


def test_parse_last_tag_wins():
    text = "maybe <progress> 20 %</progress> no, <progress>80%</progress>"
    assert parse_progress_tag(text).value == pytest.approx(0.80)


def test_parse_clamps_out_of_range():
    value, clamped = parse_progress_tag("<progress>120%</progress>")
    assert value == 1.0 and clamped
    value, clamped = parse_progress_tag("<progress>-5 </progress>")
    assert value == 0.0 and clamped


def test_parse_no_tag():
    with pytest.raises(TagNotFound):
        parse_progress_tag("progress is 40%")


@given(st.floats(0, 1, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_render_parse_inverse(value):
    parsed = parse_progress_tag(format_progress_tag(value))
    assert abs(parsed.value - value) <= 5e-5
    assert not parsed.clamped


def test_render_parse_inverse_through_sample(rng):
    records = dense_records([(0, 49)], 50)
    values = np.sort(rng.uniform(0, 1, 50))
    values[0], values[-1] = 0.0, 1.0
    for t in range(50):
        sample = gen_progress(records, values, t)
        assert abs(parse_progress_tag(sample.target).value - values[t]) <= 5e-5
