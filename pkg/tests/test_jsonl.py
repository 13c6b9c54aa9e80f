import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proclab.errors import SchemaViolation
from proclab.jsonl import (
    dumps_record,
    read_jsonl,
    record_from_dict,
    records_from_bytes,
    records_to_bytes,
    write_jsonl,
)
from proclab.types import (
    AnnotationRecord,
    CompletionState,
    EpisodeRef,
    GroundingBox,
    ReasoningSource,
)

names = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=12)

boxes = st.builds(
    lambda label, x0, y0, dx, dy: GroundingBox(
        label, round(x0, 4), round(y0, 4),
        round(min(x0 + dx, 1.0), 4), round(min(y0 + dy, 1.0), 4)),
    names, st.floats(0, 0.5), st.floats(0, 0.5),
    st.floats(0.001, 0.5), st.floats(0.001, 0.5))


@st.composite
def records(draw):
    num_frames = draw(st.integers(1, 200))
    episode = EpisodeRef(
        dataset_name=draw(names), episode_id=draw(names), camera_key=draw(names),
        num_frames=num_frames, instruction=draw(st.text(max_size=40)))
    subtask = draw(st.one_of(st.none(), st.integers(1, 9)))
    progress = draw(st.one_of(st.none(), st.floats(0, 1, allow_nan=False)))
    return AnnotationRecord(
        episode=episode,
        frame_id=draw(st.integers(0, num_frames - 1)),
        subtask_id=subtask,
        subtask_name=None if subtask is None else draw(names),
        reasoning=draw(st.text(max_size=80)),
        reasoning_source=draw(st.sampled_from(list(ReasoningSource))),
        completion=draw(st.sampled_from(list(CompletionState))),
        remaining_subtasks=tuple(draw(st.lists(names, max_size=4))),
        grounding_boxes=tuple(draw(st.lists(boxes, max_size=2))),
        progress=progress,
        extra=draw(st.dictionaries(
            st.sampled_from(["source_note", "quality", "x_custom"]),
            st.one_of(st.integers(), st.text(max_size=10)), max_size=2)))


@given(st.lists(records(), max_size=8))
@settings(max_examples=120, deadline=None)
def test_round_trip_identity(recs):
    assert records_from_bytes(records_to_bytes(recs)) == recs


def test_missing_frame_id_names_field():
    ep = {"dataset_name": "d", "episode_id": "e", "camera_key": "c",
          "subtask_id": None, "subtask_name": None, "reasoning": "",
          "reasoning_source": "keyframe", "completion": "unfinished",
          "remaining_subtasks": [], "grounding_boxes": [], "progress": None}
    stream = io.StringIO(json.dumps(ep) + "\n")
    with pytest.raises(SchemaViolation) as err:
        read_jsonl(stream)
    assert err.value.field == "frame_id"
    assert err.value.line == 1


def test_progress_out_of_range_rejected_on_read():
    rec = AnnotationRecord(
        episode=EpisodeRef("d", "e", "c", 5, "i"), frame_id=0, subtask_id=None,
        subtask_name=None, reasoning="", reasoning_source=ReasoningSource.KEYFRAME,
        completion=CompletionState.UNFINISHED)
    payload = json.loads(dumps_record(rec))
    payload["progress"] = 1.2
    with pytest.raises(SchemaViolation) as err:
        record_from_dict(payload, line=3)
    assert err.value.field == "progress"
    assert err.value.line == 3


def test_unknown_keys_preserved():
    rec = AnnotationRecord(
        episode=EpisodeRef("d", "e", "c", 5, "i"), frame_id=1, subtask_id=None,
        subtask_name=None, reasoning="", reasoning_source=ReasoningSource.KEYFRAME,
        completion=CompletionState.UNFINISHED)
    payload = json.loads(dumps_record(rec))
    payload["robot_serial"] = "XJ-9"
    back = record_from_dict(payload)
    assert back.extra == {"robot_serial": "XJ-9"}
    assert json.loads(dumps_record(back))["robot_serial"] == "XJ-9"


def test_invalid_json_reports_line():
    stream = io.StringIO('{"ok": 1}\nnot json\n')
    with pytest.raises(SchemaViolation) as err:
        read_jsonl(stream)
    assert err.value.line in (1, 2)


def test_write_read_file(tmp_path):
    recs = [AnnotationRecord(
        episode=EpisodeRef("d", "e", "c", 3, "i"), frame_id=t, subtask_id=1,
        subtask_name="s1", reasoning=f"r{t}",
        reasoning_source=ReasoningSource.KEYFRAME,
        completion=CompletionState.UNFINISHED, progress=t / 2)
        for t in range(3)]
    path = tmp_path / "ann.jsonl"
    assert write_jsonl(recs, path) == 3
    assert read_jsonl(path) == recs
