"""One-shot adaptation splits and reward-delta advantage labels.

The one-shot split puts exactly one successful trajectory per task into the
adaptation set (``succ`` mode), optionally plus one trajectory per
(task, failure_type) pair (``succ_fail`` mode); everything else is test.

Advantage labels rank, within each task, the forward progress delta
advantage(t) = p(min(t + H, T - 1)) - p(t) over every (trajectory, t)
sample and mark the top fraction positive. The horizon clips at the
trajectory end (no invented post-terminal rewards). The estimator itself
is a reconstruction: only the horizon and the top fraction are anchored
quantities; the delta is the simplest estimator consistent with using
progress scores as dense rewards.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, EmptyTask, MissingFailureType, MissingSuccess
from .types import FieldError


@dataclass(frozen=True)
class TrajectoryTag:
    trajectory_id: str
    task: str
    outcome: str
    failure_type: str | None = None

    def __post_init__(self):
        if self.outcome not in ("success", "failure"):
            raise FieldError("outcome", f"must be success or failure, got {self.outcome!r}")
        if (self.failure_type is not None) != (self.outcome == "failure"):
            raise FieldError("failure_type",
                             "must be set exactly when outcome is failure")


def read_tags_csv(path) -> list[TrajectoryTag]:
    tags = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            ft = row.get("failure_type") or None
            tags.append(TrajectoryTag(
                trajectory_id=row["trajectory_id"], task=row["task"],
                outcome=row["outcome"], failure_type=ft))
    return tags


@dataclass(frozen=True)
class SplitResult:
    train: tuple[str, ...]
    test: tuple[str, ...]


def build_oneshot_splits(tags: Sequence[TrajectoryTag], mode: str = "succ",
                         seed: int = 0,
                         required_failure_types: Mapping[str, Iterable[str]] | None = None,
                         ) -> SplitResult:
    """Seeded-deterministic train/test partition of the tagged trajectories."""
    if mode not in ("succ", "succ_fail"):
        raise ConfigError(f"unknown split mode {mode!r}")
    ids = [t.trajectory_id for t in tags]
    if len(ids) != len(set(ids)):
        raise ValueError("duplicate trajectory ids in tags")
    rng = random.Random(seed)
    successes: dict[str, list[str]] = {}
    failures: dict[tuple[str, str], list[str]] = {}
    tasks = sorted({t.task for t in tags})
    for t in sorted(tags, key=lambda t: t.trajectory_id):
        if t.outcome == "success":
            successes.setdefault(t.task, []).append(t.trajectory_id)
        else:
            failures.setdefault((t.task, t.failure_type), []).append(t.trajectory_id)

    train: list[str] = []
    for task in tasks:
        pool = successes.get(task)
        if not pool:
            raise MissingSuccess(f"task {task!r} has no successful trajectory")
        train.append(rng.choice(pool))
    if mode == "succ_fail":
        if required_failure_types is not None:
            for task, types in sorted(required_failure_types.items()):
                for ftype in sorted(types):
                    if (task, ftype) not in failures:
                        raise MissingFailureType(
                            f"no trajectory for task {task!r} failure type {ftype!r}")
        for key in sorted(failures):
            train.append(rng.choice(failures[key]))
    train_set = set(train)
    test = sorted(i for i in ids if i not in train_set)
    return SplitResult(train=tuple(sorted(train_set)), test=tuple(test))


@dataclass(frozen=True)
class AdvantageConfig:
    horizon: int = 50
    top_fraction: float = 0.3
    per_trajectory: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not 0 < self.top_fraction <= 1:
            raise ConfigError(
                f"top_fraction must lie in (0, 1], got {self.top_fraction}")


@dataclass(frozen=True)
class AdvantageLabel:
    task: str
    trajectory_id: str
    t: int
    advantage: float
    label: str  # "positive" | "negative"

    def to_json_dict(self) -> dict:
        return {"trajectory_id": self.trajectory_id, "t": self.t,
                "advantage": self.advantage, "label": self.label}


def _positive_count(fraction: float, n: int) -> int:
    # exact ceil(fraction * n) without float boundary artifacts
    frac = Fraction(fraction).limit_denominator(10 ** 6)
    return int(math.ceil(frac * n)) if n else 0


def rft_advantage_labels(series_by_task: Mapping[str, Mapping[str, Sequence[float]]],
                         config: AdvantageConfig = AdvantageConfig(),
                         ) -> list[AdvantageLabel]:
    """Per-sample advantage values and positive/negative labels.

    Ranking and the top-fraction cut happen within each task over all
    (trajectory, t) samples; ties at the cut break toward earlier
    (trajectory_id, t). With per_trajectory=True, whole trajectories are
    ranked by their mean advantage instead and the top fraction of
    trajectories goes positive.
    """
    out: list[AdvantageLabel] = []
    for task in sorted(series_by_task):
        rows: list[tuple[str, int, float]] = []
        for tid in sorted(series_by_task[task]):
            p = np.asarray(series_by_task[task][tid], dtype=np.float64).reshape(-1)
            horizon_end = len(p) - 1
            for t in range(len(p)):
                adv = float(p[min(t + config.horizon, horizon_end)] - p[t])
                rows.append((tid, t, adv))
        if not rows:
            raise EmptyTask(f"task {task!r} has no advantage samples")
        if config.per_trajectory:
            means: dict[str, float] = {}
            for tid in sorted(series_by_task[task]):
                advs = [a for rtid, _, a in rows if rtid == tid]
                means[tid] = float(np.mean(advs))
            ranked = sorted(means, key=lambda tid: (-means[tid], tid))
            n_pos = _positive_count(config.top_fraction, len(ranked))
            positive_ids = set(ranked[:n_pos])
            labels = {(tid, t): "positive" if tid in positive_ids else "negative"
                      for tid, t, _ in rows}
        else:
            ranked = sorted(rows, key=lambda r: (-r[2], r[0], r[1]))
            n_pos = _positive_count(config.top_fraction, len(rows))
            positive_keys = {(tid, t) for tid, t, _ in ranked[:n_pos]}
            labels = {(tid, t): "positive" if (tid, t) in positive_keys else "negative"
                      for tid, t, _ in rows}
        for tid, t, adv in rows:
            out.append(AdvantageLabel(task=task, trajectory_id=tid, t=t,
                                      advantage=adv, label=labels[(tid, t)]))
    out.sort(key=lambda r: (r.task, r.trajectory_id, r.t))
    return out


def write_advantage_jsonl(labels: Sequence[AdvantageLabel], path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for row in labels:
            fh.write(json.dumps(row.to_json_dict()))
            fh.write("\n")
    return len(labels)


def write_id_list(ids: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in ids:
            fh.write(i)
            fh.write("\n")
