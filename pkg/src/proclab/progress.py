"""Procedure-defined progress targets.

A trajectory's progress at frame t is the normalized accumulation of local
visual change, weighted per subtask by a duration-proportional budget that
is clipped around an equal-subtask prior:

    w_k   = clip(K * dur_k / T, clip_lo, clip_hi)        dur_k = e_k - s_k + 1
    inc_t = w_k * (d_t + eps) / sum_{u in k} (d_u + eps)  for step t inside k
    p(t)  = (sum of inc over steps <= t) / (sum_j w_j + #unfinished)

Discrete conventions (see the module tests for the brute-force oracle):
left-rectangle sums over per-step magnitudes d_t = ||phi_t - phi_{t-1}||; a
step t (between frames t-1 and t) belongs to segment k iff s_k < t <= e_k;
steps crossing a gap boundary are gap steps and contribute nothing, so
labels plateau over unassigned frames. Each planned-but-unfinished subtask
contributes weight 1 (the equal prior) to the denominator only, which pins
failed executions strictly below 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLength,
    DegenerateSegmentSignal,
    EmptySegment,
    LengthMismatch,
    NoValidSubtasks,
    UnvalidatedInput,
)
from .types import SubtaskSegment


@dataclass(frozen=True)
class ProgressConfig:
    clip_lo: float = 0.75
    clip_hi: float = 1.25
    epsilon: float = 1e-6
    diff_metric: str = "l2"
    gap_policy: str = "plateau"

    def __post_init__(self):
        if not 0 < self.clip_lo <= self.clip_hi:
            raise ValueError(f"need 0 < clip_lo <= clip_hi, got ({self.clip_lo}, {self.clip_hi})")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.diff_metric not in ("l1", "l2"):
            raise ValueError(f"unknown diff_metric {self.diff_metric!r}")
        if self.gap_policy != "plateau":
            raise ValueError(f"unknown gap_policy {self.gap_policy!r}")


@dataclass(frozen=True, eq=False)
class ProgressLabels:
    """Per-frame cumulative progress with its provenance config."""

    values: np.ndarray
    completed: bool
    config: ProgressConfig
    per_subtask_budget: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def num_frames(self) -> int:
        return int(len(self.values))

    def tolist(self) -> list[float]:
        return [float(v) for v in self.values]


def _sorted_valid(segments) -> list[SubtaskSegment]:
    valid = sorted((s for s in segments if s.is_valid),
                   key=lambda s: (s.start_frame, s.id))
    prev = None
    for s in valid:
        if prev is not None and s.start_frame <= prev.complete_frame:
            raise UnvalidatedInput(
                f"segments {prev.id} and {s.id} overlap; validate first")
        prev = s
    return valid


def subtask_weights(segments, num_frames: int,
                    config: ProgressConfig = ProgressConfig()) -> dict[int, float]:
    """Clipped duration-proportional budget w_k per valid segment."""
    valid = _sorted_valid(segments)
    if not valid:
        raise NoValidSubtasks("no segment has both boundaries")
    k = len(valid)
    weights = {}
    for s in valid:
        raw = k * s.duration / num_frames
        weights[s.id] = float(min(max(raw, config.clip_lo), config.clip_hi))
    return weights


def progress_labels(segments, diffs,
                    config: ProgressConfig = ProgressConfig()) -> ProgressLabels:
    """Per-frame progress targets for one trajectory.

    ``segments`` is the full planned list from a validated segmentation
    (valid spans plus started/absent placeholders); ``diffs`` holds the
    T - 1 per-step magnitudes.
    """
    d = np.asarray(diffs, dtype=np.float64).reshape(-1)
    num_frames = len(d) + 1
    valid = _sorted_valid(segments)
    unfinished = [s for s in segments if not s.is_valid]
    if not valid and not unfinished:
        raise NoValidSubtasks("plan contains no subtasks")

    for s in valid:
        if s.complete_frame > num_frames - 1:
            raise LengthMismatch(
                f"segment {s.id} ends at frame {s.complete_frame} but diffs imply "
                f"T = {num_frames}")
        if s.complete_frame == s.start_frame:
            raise EmptySegment(
                f"segment {s.id} spans a single frame and has no steps")

    weights = (subtask_weights(valid, num_frames, config) if valid else {})
    denom = sum(weights.values()) + float(len(unfinished))

    increments = np.zeros(num_frames - 1, dtype=np.float64)
    for s in valid:
        # steps t with s_k < t <= e_k live at diff indices [s_k, e_k)
        mass = d[s.start_frame:s.complete_frame] + config.epsilon
        total = float(np.sum(mass))
        if total == 0.0:
            raise DegenerateSegmentSignal(
                f"segment {s.id} has zero visual change and epsilon = 0")
        increments[s.start_frame:s.complete_frame] = \
            weights[s.id] * mass / total / denom

    # cumsum can land a hair above 1.0; the label is defined on [0, 1]
    values = np.minimum(np.concatenate(([0.0], np.cumsum(increments))), 1.0)
    completed = not unfinished and bool(valid)
    return ProgressLabels(values=values, completed=completed, config=config,
                          per_subtask_budget=weights)


def time_interp_baseline(num_frames: int,
                         config: ProgressConfig = ProgressConfig()) -> ProgressLabels:
    """The elapsed-time baseline: values[t] = t / (T - 1)."""
    if num_frames < 2:
        raise DegenerateLength(f"need T >= 2, got {num_frames}")
    values = np.arange(num_frames, dtype=np.float64) / (num_frames - 1)
    return ProgressLabels(values=values, completed=True, config=config)
