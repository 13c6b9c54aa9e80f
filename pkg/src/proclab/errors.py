"""Exception hierarchy shared by every proclab module.

Each error carries a stable ``code`` (its class name) so the CLI can emit
machine-readable error JSON and the training bindings can surface the
original code across the process boundary.
"""

from __future__ import annotations


class ProclabError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.message = message
        self.context = context

    @property
    def code(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        if self.context:
            extras = ", ".join(f"{k}={v!r}" for k, v in sorted(self.context.items()))
            return f"{self.message} ({extras})" if self.message else extras
        return self.message


# --- annotation records / segmentation -------------------------------------

class EmptyPlan(ProclabError):
    """Segmentation result contains no subtasks at all."""


class OverlapError(ProclabError):
    """Two valid segments claim the same frame (strict policy)."""


class BoundaryOutOfRange(ProclabError):
    """A segment boundary falls outside [0, num_frames - 1] (strict policy)."""


class InvertedSpan(ProclabError):
    """start_frame > complete_frame; always an error, never repaired."""


class UnvalidatedInput(ProclabError):
    """Operation requires a validated segmentation but overlaps remain."""


class SchemaViolation(ProclabError):
    """A JSONL line or parsed payload breaks the record schema.

    ``line`` (1-based, when reading a stream) and ``field`` identify the
    offending location.
    """

    def __init__(self, message: str = "", line: int | None = None,
                 field: str | None = None, **context):
        super().__init__(message, **context)
        self.line = line
        self.field = field

    def __str__(self) -> str:
        loc = []
        if self.line is not None:
            loc.append(f"line {self.line}")
        if self.field is not None:
            loc.append(f"field {self.field!r}")
        prefix = ", ".join(loc)
        base = super().__str__()
        return f"{prefix}: {base}" if prefix else base


# --- progress labeling ------------------------------------------------------

class DimensionMismatch(ProclabError):
    """Feature vectors disagree in dimension or have the wrong shape."""


class NoValidSubtasks(ProclabError):
    """No segment with both boundaries is available."""


class LengthMismatch(ProclabError):
    """Array lengths are inconsistent (diffs vs frames, preds vs labels)."""


class EmptySegment(ProclabError):
    """A valid segment spans a single frame and therefore has no steps."""


class DegenerateLength(ProclabError):
    """Trajectory too short for the requested operation (T < 2)."""


class DegenerateSegmentSignal(ProclabError):
    """A segment has zero accumulated visual change and epsilon = 0."""


# --- annotation pipeline ----------------------------------------------------

class ParseError(ProclabError):
    """Annotator response could not be parsed into the expected structure."""


class EmptyResponse(ProclabError):
    """Annotator returned empty text where reasoning was required."""


class BackendUnavailable(ProclabError):
    """Backend kept failing after all retries were exhausted."""


class AuthError(ProclabError):
    """Backend rejected or is missing authentication."""


class ConfigError(ProclabError):
    """Invalid configuration value or conflicting options."""


# --- VQA generation ---------------------------------------------------------

class NoFutureAction(ProclabError):
    """No subtask starts after the queried frame."""


class MissingLabels(ProclabError):
    """Progress labels are absent at the queried frame."""


class TagNotFound(ProclabError):
    """No progress tag present in the text."""


# --- metrics ----------------------------------------------------------------

class DegenerateVariance(ProclabError):
    """Rank correlation is undefined: one side is constant."""


class EmptyPredictions(ProclabError):
    """Metric requires at least one prediction."""


class MissingCutoff(ProclabError):
    """A failed trajectory lacks its annotated cutoff index."""


class KeyMismatch(ProclabError):
    """Models being bundled do not share the same sample keys."""


# --- splits / advantage labels ----------------------------------------------

class MissingSuccess(ProclabError):
    """A task has no successful trajectory to seed the one-shot split."""


class MissingFailureType(ProclabError):
    """A required (task, failure_type) pair has no trajectory."""


class EmptyTask(ProclabError):
    """A task group contains no advantage samples."""
