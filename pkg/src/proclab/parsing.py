"""Parsers for annotator responses (numbered plans, segmentation JSON)."""

from __future__ import annotations

import json
import re

from .errors import ParseError, SchemaViolation
from .prompts import VERB_PATTERNS
from .types import SegmentationResult, SubtaskSegment, FieldError

_PLAN_LINE = re.compile(r"^\s*(\d+)\s*[.)]\s*(\S.*?)\s*$")
_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)


def parse_plan(text: str) -> tuple[list[str], list[str]]:
    """Extract the first contiguous numbered list from a plan response.

    Returns (actions, warnings). Leading/trailing prose is discarded with a
    warning; a duplicated index is a ParseError.
    """
    warnings: list[str] = []
    actions: list[str] = []
    seen: set[int] = set()
    in_list = False
    done = False
    for line in text.splitlines():
        m = _PLAN_LINE.match(line)
        if m and not done:
            idx = int(m.group(1))
            if idx in seen:
                raise ParseError(f"duplicate plan index {idx}")
            seen.add(idx)
            actions.append(m.group(2))
            in_list = True
        elif line.strip():
            if in_list:
                done = True
                warnings.append("trailing prose after numbered list discarded")
            else:
                warnings.append("leading prose before numbered list discarded")
    if not actions:
        raise ParseError("no numbered actions found in plan response")
    return actions, warnings


def verb_pattern_warnings(actions: list[str]) -> list[str]:
    """Warn (never enforce) when an action starts outside the verb patterns."""
    out = []
    for a in actions:
        first = a.split()[0] if a.split() else ""
        if first.capitalize() not in VERB_PATTERNS:
            out.append(f"action {a!r} does not start with a known verb pattern")
    return out


def extract_json_payload(text: str) -> str:
    """The outermost {...} object in a response, tolerating code fences."""
    fenced = _FENCE.search(text)
    if fenced:
        text = fenced.group(1)
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end == -1 or end <= start:
        raise ParseError("no JSON object found in response")
    return text[start:end + 1]


def _opt_frame(value, field: str) -> int | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{field} must be an integer or null, got {value!r}",
                              field=field)
    return value


def parse_segmentation(text: str) -> SegmentationResult:
    """Parse (not validate) a subtask segmentation response."""
    payload = extract_json_payload(text)
    try:
        data = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ParseError(f"segmentation payload is not valid JSON: {exc.msg}")
    if not isinstance(data, dict):
        raise SchemaViolation("segmentation payload must be a JSON object")
    raw_subtasks = data.get("subtasks")
    if not isinstance(raw_subtasks, list):
        raise SchemaViolation("missing or non-array key", field="subtasks")
    subtasks = []
    for i, item in enumerate(raw_subtasks):
        if not isinstance(item, dict):
            raise SchemaViolation(f"subtasks[{i}] must be an object", field="subtasks")
        if "name" not in item:
            raise SchemaViolation(f"subtasks[{i}] missing name", field="name")
        sub_id = item.get("id", i + 1)
        try:
            subtasks.append(SubtaskSegment(
                id=sub_id,
                name=str(item["name"]),
                start_frame=_opt_frame(item.get("start_frame"), "start_frame"),
                complete_frame=_opt_frame(item.get("complete_frame"), "complete_frame"),
                notes=str(item.get("notes", "") or "")))
        except FieldError as exc:
            raise SchemaViolation(exc.message, field=exc.field_name)
    try:
        return SegmentationResult(
            task=str(data.get("task", "")),
            subtasks=tuple(subtasks),
            overall_notes=str(data.get("overall_notes", "") or ""))
    except FieldError as exc:
        raise SchemaViolation(exc.message, field=exc.field_name)
