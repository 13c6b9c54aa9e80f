"""Shared fixtures and independent oracles.

The progress oracle here is deliberately dumb: for every frame it rebuilds
the accumulated numerator with direct slice sums over each segment (a
frames x segments double loop, no prefix-sum reuse), so it shares no code
path with the library implementation it checks.
"""

from __future__ import annotations

import numpy as np
import pytest

from proclab.types import SubtaskSegment


def oracle_progress(segments, diffs, clip_lo=0.75, clip_hi=1.25, epsilon=1e-6):
    """Brute-force progress values, one fresh computation per frame."""
    d = np.asarray(diffs, dtype=np.float64).reshape(-1)
    num_frames = len(d) + 1
    valid = sorted((s for s in segments if s.is_valid), key=lambda s: s.start_frame)
    unfinished = [s for s in segments if not s.is_valid]
    k = len(valid)
    weights = {}
    for s in valid:
        dur = s.complete_frame - s.start_frame + 1
        weights[s.id] = min(max(k * dur / num_frames, clip_lo), clip_hi)
    denom = sum(weights.values()) + len(unfinished)
    masses = {s.id: float(np.sum(d[s.start_frame:s.complete_frame] + epsilon))
              for s in valid}
    values = []
    for t in range(num_frames):
        total = 0.0
        for s in valid:
            if s.complete_frame <= t:
                total += weights[s.id]
            elif s.start_frame < t:
                part = float(np.sum(d[s.start_frame:t] + epsilon))
                total += weights[s.id] * part / masses[s.id]
        values.append(total / denom)
    return np.asarray(values)


def random_trajectory(rng: np.random.Generator, t_range=(10, 500), k_max=8,
                      allow_unfinished=True, allow_eps_zero=True):
    """(segments, diffs, epsilon) with K disjoint spans of >= 2 frames."""
    num_frames = int(rng.integers(t_range[0], t_range[1] + 1))
    k_cap = min(k_max, num_frames // 2)
    k = int(rng.integers(1, k_cap + 1))
    cuts = np.sort(rng.choice(num_frames, size=2 * k, replace=False))
    segments = [
        SubtaskSegment(id=i + 1, name=f"step {i + 1}",
                       start_frame=int(cuts[2 * i]), complete_frame=int(cuts[2 * i + 1]))
        for i in range(k)
    ]
    if allow_unfinished and rng.random() < 0.3:
        extra = int(rng.integers(1, 3))
        for j in range(extra):
            segments.append(SubtaskSegment(id=k + 1 + j, name=f"step {k + 1 + j}"))
    epsilon = float(rng.choice([0.0, 1e-6, 1e-3])) if allow_eps_zero else 1e-6
    if epsilon == 0.0:
        diffs = rng.uniform(0.05, 3.0, size=num_frames - 1)
    else:
        diffs = rng.uniform(0.0, 3.0, size=num_frames - 1)
        diffs[rng.random(num_frames - 1) < 0.2] = 0.0
    return segments, diffs, epsilon


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
