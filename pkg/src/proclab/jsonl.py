"""Annotation record JSONL serialization.

One record per line, UTF-8. Required keys follow the external schema;
``num_frames`` and ``instruction`` are written as well so that
``read(write(records)) == records`` field-for-field. Unknown keys found on
read are kept in ``record.extra`` and written back verbatim.

Writing is the single stateful operation in the toolkit; callers must
serialize access to one output stream (the pipeline funnels everything
through one consumer thread for exactly this reason).
"""

from __future__ import annotations

import io
import json
import os
from typing import IO, Iterable, Iterator

from .errors import SchemaViolation
from .types import (
    AnnotationRecord,
    CompletionState,
    EpisodeRef,
    FieldError,
    GroundingBox,
    ReasoningSource,
)

REQUIRED_KEYS = (
    "dataset_name", "episode_id", "camera_key", "frame_id",
    "subtask_id", "subtask_name", "reasoning", "reasoning_source",
    "completion", "remaining_subtasks", "grounding_boxes", "progress",
)
_CANONICAL_ORDER = (
    "dataset_name", "episode_id", "camera_key", "frame_id", "num_frames",
    "instruction", "subtask_id", "subtask_name", "reasoning",
    "reasoning_source", "completion", "remaining_subtasks",
    "grounding_boxes", "progress",
)


def record_to_dict(rec: AnnotationRecord) -> dict:
    d = {
        "dataset_name": rec.episode.dataset_name,
        "episode_id": rec.episode.episode_id,
        "camera_key": rec.episode.camera_key,
        "frame_id": rec.frame_id,
        "num_frames": rec.episode.num_frames,
        "instruction": rec.episode.instruction,
        "subtask_id": rec.subtask_id,
        "subtask_name": rec.subtask_name,
        "reasoning": rec.reasoning,
        "reasoning_source": rec.reasoning_source.value,
        "completion": rec.completion.value,
        "remaining_subtasks": list(rec.remaining_subtasks),
        "grounding_boxes": [
            {"label": b.label, "x_min": b.x_min, "y_min": b.y_min,
             "x_max": b.x_max, "y_max": b.y_max}
            for b in rec.grounding_boxes
        ],
        "progress": rec.progress,
    }
    for key in sorted(rec.extra):
        if key not in d:
            d[key] = rec.extra[key]
    return d


def record_from_dict(d: dict, line: int | None = None) -> AnnotationRecord:
    if not isinstance(d, dict):
        raise SchemaViolation("each line must be a JSON object", line=line)
    for key in REQUIRED_KEYS:
        if key not in d:
            raise SchemaViolation("missing required key", line=line, field=key)
    try:
        source = ReasoningSource(d["reasoning_source"])
    except ValueError:
        raise SchemaViolation(f"unknown reasoning_source {d['reasoning_source']!r}",
                              line=line, field="reasoning_source")
    try:
        completion = CompletionState(d["completion"])
    except ValueError:
        raise SchemaViolation(f"unknown completion {d['completion']!r}",
                              line=line, field="completion")
    frame_id = d["frame_id"]
    if not isinstance(frame_id, int) or isinstance(frame_id, bool):
        raise SchemaViolation("frame_id must be an integer", line=line, field="frame_id")
    num_frames = d.get("num_frames", frame_id + 1)
    boxes = d.get("grounding_boxes") or []
    if not isinstance(boxes, list):
        raise SchemaViolation("grounding_boxes must be an array",
                              line=line, field="grounding_boxes")
    remaining = d.get("remaining_subtasks") or []
    if not isinstance(remaining, list) or not all(isinstance(x, str) for x in remaining):
        raise SchemaViolation("remaining_subtasks must be an array of strings",
                              line=line, field="remaining_subtasks")
    extra = {k: v for k, v in d.items() if k not in _CANONICAL_ORDER}
    try:
        episode = EpisodeRef(
            dataset_name=d["dataset_name"], episode_id=d["episode_id"],
            camera_key=d["camera_key"], num_frames=num_frames,
            instruction=d.get("instruction", ""))
        parsed_boxes = []
        for b in boxes:
            if not isinstance(b, dict):
                raise FieldError("grounding_boxes", "each box must be an object")
            parsed_boxes.append(GroundingBox(
                label=b.get("label", ""), x_min=b["x_min"], y_min=b["y_min"],
                x_max=b["x_max"], y_max=b["y_max"]))
        return AnnotationRecord(
            episode=episode, frame_id=frame_id,
            subtask_id=d["subtask_id"], subtask_name=d["subtask_name"],
            reasoning=d["reasoning"], reasoning_source=source,
            completion=completion, remaining_subtasks=tuple(remaining),
            grounding_boxes=tuple(parsed_boxes),
            progress=d["progress"], extra=extra)
    except FieldError as exc:
        raise SchemaViolation(exc.message, line=line, field=exc.field_name)
    except KeyError as exc:
        raise SchemaViolation("missing required key", line=line, field=str(exc.args[0]))


def dumps_record(rec: AnnotationRecord) -> str:
    return json.dumps(record_to_dict(rec), ensure_ascii=False)


def write_jsonl(records: Iterable[AnnotationRecord], dest: str | os.PathLike | IO[str]) -> int:
    """Write records one per line; returns the number written."""
    if hasattr(dest, "write"):
        return _write_stream(records, dest)
    with open(dest, "w", encoding="utf-8") as fh:
        return _write_stream(records, fh)


def _write_stream(records: Iterable[AnnotationRecord], fh: IO[str]) -> int:
    n = 0
    for rec in records:
        fh.write(dumps_record(rec))
        fh.write("\n")
        n += 1
    return n


def iter_jsonl(src: str | os.PathLike | IO[str]) -> Iterator[AnnotationRecord]:
    if hasattr(src, "read"):
        yield from _iter_stream(src)
    else:
        with open(src, "r", encoding="utf-8") as fh:
            yield from _iter_stream(fh)


def _iter_stream(fh: IO[str]) -> Iterator[AnnotationRecord]:
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"invalid JSON: {exc.msg}", line=lineno)
        yield record_from_dict(payload, line=lineno)


def read_jsonl(src: str | os.PathLike | IO[str]) -> list[AnnotationRecord]:
    return list(iter_jsonl(src))


def records_to_bytes(records: Iterable[AnnotationRecord]) -> bytes:
    buf = io.StringIO()
    _write_stream(records, buf)
    return buf.getvalue().encode("utf-8")


def records_from_bytes(data: bytes) -> list[AnnotationRecord]:
    return read_jsonl(io.StringIO(data.decode("utf-8")))


def group_by_episode(records: Iterable[AnnotationRecord]) -> dict[tuple, list[AnnotationRecord]]:
    """Group records by (dataset_name, episode_id, camera_key), frame order."""
    groups: dict[tuple, list[AnnotationRecord]] = {}
    for rec in records:
        key = (rec.episode.dataset_name, rec.episode.episode_id, rec.episode.camera_key)
        groups.setdefault(key, []).append(rec)
    for recs in groups.values():
        recs.sort(key=lambda r: r.frame_id)
    return groups
