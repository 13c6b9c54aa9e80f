"""Episode sources: directory corpora and the synthetic scripted corpus.

Disk layout: ``<root>/<dataset>/<episode>/<camera>/`` holding ``meta.json``
({instruction, num_frames, ...}) plus either pre-extracted frame images
(``frame_%06d.png``) or a precomputed feature matrix (``features.fmx``).
Label-only corpora may carry ``diffs.csv`` instead.

The synthetic generator emits scripted episodes with known segments,
piecewise feature trajectories (motion inside subtask spans, frozen in
gaps and after a failure cutoff), and failure variants, so every test and
demo is self-contained. Generation is byte-deterministic for a given seed.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .backends import EpisodeScript
from .features import read_diffs_csv, read_feature_matrix, write_feature_matrix
from .pipeline import Episode
from .types import EpisodeRef, SubtaskSegment

META_NAME = "meta.json"
FEATURES_NAME = "features.fmx"
DIFFS_NAME = "diffs.csv"
FRAME_PATTERN = "frame_{:06d}.png"

_COLORS = ("red", "blue", "green", "yellow", "white", "black")
_OBJECTS = ("block", "bowl", "cup", "sponge", "bottle", "lid")
_PLACES = ("plate", "tray", "rack", "basket", "shelf", "box")
_TASK_PHRASES = (
    "tidy the {place} with the {color} {obj}",
    "move the {color} {obj} to the {place}",
    "prepare the {place} using the {color} {obj}",
    "store the {color} {obj} on the {place}",
    "arrange the {color} {obj} near the {place}",
)
_FAILURE_TYPES = ("stall", "drop")


@dataclass(frozen=True)
class TrajectoryMeta:
    episode: Episode
    script: EpisodeScript
    task: str


def _task_plan(rng: random.Random, k: int) -> list[str]:
    actions: list[str] = []
    while len(actions) < k:
        color = rng.choice(_COLORS)
        obj = rng.choice(_OBJECTS)
        place = rng.choice(_PLACES)
        kind = rng.choice(("pick_place", "push", "press", "open", "close", "rotate"))
        if kind == "pick_place" and len(actions) <= k - 2:
            actions.append(f"Grasp the {color} {obj}")
            actions.append(f"Place the {color} {obj} onto the {place}")
        elif kind == "push":
            actions.append(f"Push the {color} {obj} forward")
        elif kind == "press":
            actions.append(f"Press the {color} button")
        elif kind == "open":
            actions.append(f"Open the {obj}")
        elif kind == "close":
            actions.append(f"Close the {obj}")
        else:
            actions.append(f"Rotate the {color} knob")
    return actions[:k]


def _spans(rng: random.Random, k: int, num_frames: int) -> list[tuple[int, int]]:
    """K non-overlapping spans of >= 4 frames with 0-2 frame gaps."""
    min_len = 4
    spans = []
    cursor = rng.randint(0, 2)
    for j in range(k):
        left = k - j - 1
        ceiling = num_frames - 1 - cursor - left * (min_len + 1)
        if ceiling < min_len:
            cursor = max(0, num_frames - 1 - (left + 1) * (min_len + 1))
            ceiling = num_frames - 1 - cursor - left * (min_len + 1)
        length = rng.randint(min_len, max(min_len, min(ceiling, min_len + num_frames // k)))
        end = min(cursor + length - 1, num_frames - 1)
        spans.append((cursor, end))
        cursor = end + 1 + rng.randint(0, 2)
    return spans


def _features_for(rng: random.Random, num_frames: int, dim: int,
                  motion: list[tuple[int, int]]) -> np.ndarray:
    """Piecewise feature track: eased motion inside the given spans,
    frozen everywhere else."""
    anchors = [np.array([rng.uniform(-1, 1) for _ in range(dim)])]
    for _ in motion:
        direction = np.array([rng.gauss(0, 1) for _ in range(dim)])
        norm = float(np.sqrt(np.sum(direction * direction))) or 1.0
        anchors.append(anchors[-1] + direction / norm * rng.uniform(1.0, 2.0))
    phi = np.zeros((num_frames, dim))
    current = anchors[0]
    seg_at = {t: j for j, (s, e) in enumerate(motion) for t in range(s, e + 1)}
    eases = [rng.choice((1.0, 1.5, 2.0)) for _ in motion]
    for t in range(num_frames):
        j = seg_at.get(t)
        if j is not None:
            s, e = motion[j]
            alpha = ((t - s) / (e - s)) ** eases[j]
            current = anchors[j] + alpha * (anchors[j + 1] - anchors[j])
        phi[t] = current
    return phi


def synthesize_trajectory(index: int, seed: int, task_index: int,
                          num_tasks: int, subtasks_range=(2, 4),
                          frames_range=(30, 80), failure_rate: float = 0.25,
                          feature_dim: int = 6, dataset_name: str = "synth",
                          camera_key: str = "cam0",
                          force_success: bool = False) -> TrajectoryMeta:
    """One scripted episode. Episodes sharing a task_index share the same
    plan and task phrase (per-task rng), while spans, length, and features
    vary per episode."""
    task_rng = random.Random(f"{seed}:task:{task_index}")
    k = task_rng.randint(*subtasks_range)
    plan = _task_plan(task_rng, k)
    phrase = task_rng.choice(_TASK_PHRASES).format(
        color=task_rng.choice(_COLORS), obj=task_rng.choice(_OBJECTS),
        place=task_rng.choice(_PLACES))
    task = f"task-{task_index:02d}: {phrase}"

    rng = random.Random(f"{seed}:episode:{index}")
    num_frames = rng.randint(*frames_range)
    spans = _spans(rng, k, num_frames)
    fails = (not force_success) and rng.random() < failure_rate

    segments: list[SubtaskSegment] = []
    motion: list[tuple[int, int]] = []
    t_cut = None
    failure_type = None
    if fails:
        failure_type = rng.choice(_FAILURE_TYPES)
        for j, (s, e) in enumerate(spans[:-1]):
            segments.append(SubtaskSegment(id=j + 1, name=plan[j],
                                           start_frame=s, complete_frame=e))
            motion.append((s, e))
        s_last, e_last = spans[-1]
        if failure_type == "stall" and s_last < num_frames - 2:
            # started but never finished; motion stops mid-span
            t_cut = min(s_last + max(2, (e_last - s_last) // 2), num_frames - 2)
            segments.append(SubtaskSegment(id=k, name=plan[-1],
                                           start_frame=s_last, complete_frame=None))
            if t_cut > s_last:
                motion.append((s_last, t_cut))
        else:
            # never attempted
            t_cut = segments[-1].complete_frame if segments else 0
            segments.append(SubtaskSegment(id=k, name=plan[-1], notes="not present"))
    else:
        for j, (s, e) in enumerate(spans):
            segments.append(SubtaskSegment(id=j + 1, name=plan[j],
                                           start_frame=s, complete_frame=e))
            motion.append((s, e))

    script = EpisodeScript(
        plan=tuple(plan), segments=tuple(segments),
        outcome="failure" if fails else "success",
        failure_type=failure_type, t_cut=t_cut)
    episode_id = f"ep{index:04d}"
    instruction = f"scene {index:04d}: {phrase}"
    ref = EpisodeRef(dataset_name=dataset_name, episode_id=episode_id,
                     camera_key=camera_key, num_frames=num_frames,
                     instruction=instruction)
    features = _features_for(rng, num_frames, feature_dim, motion)
    episode = Episode(ref=ref, features=features,
                      meta={"script": script.to_json_dict(), "task": task})
    return TrajectoryMeta(episode=episode, script=script, task=task)


def synthetic_episodes(episodes: int, seed: int = 0, num_tasks: int = 3,
                       **kwargs) -> list[TrajectoryMeta]:
    """In-memory scripted corpus; each task gets at least one success."""
    out = []
    seen_tasks: set[int] = set()
    for i in range(episodes):
        task_index = i % num_tasks
        force_success = task_index not in seen_tasks
        seen_tasks.add(task_index)
        out.append(synthesize_trajectory(
            i, seed, task_index, num_tasks, force_success=force_success, **kwargs))
    return out


def scripts_by_instruction(metas: list[TrajectoryMeta]) -> dict[str, EpisodeScript]:
    return {m.episode.ref.instruction: m.script for m in metas}


def generate_corpus(root: str | os.PathLike, episodes: int, seed: int = 0,
                    num_tasks: int = 3, **kwargs) -> list[TrajectoryMeta]:
    """Write a synthetic corpus (features + meta + tags.csv) under root."""
    root = Path(root)
    metas = synthetic_episodes(episodes, seed=seed, num_tasks=num_tasks, **kwargs)
    for meta in metas:
        ref = meta.episode.ref
        ep_dir = root / ref.dataset_name / ref.episode_id / ref.camera_key
        ep_dir.mkdir(parents=True, exist_ok=True)
        write_feature_matrix(ep_dir / FEATURES_NAME, meta.episode.features)
        payload = {
            "dataset_name": ref.dataset_name,
            "episode_id": ref.episode_id,
            "camera_key": ref.camera_key,
            "num_frames": ref.num_frames,
            "instruction": ref.instruction,
            "task": meta.task,
            "script": meta.script.to_json_dict(),
        }
        with open(ep_dir / META_NAME, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    with open(root / "tags.csv", "w", encoding="utf-8") as fh:
        fh.write("trajectory_id,task,outcome,failure_type\n")
        for meta in metas:
            ref = meta.episode.ref
            ft = meta.script.failure_type or ""
            fh.write(f"{ref.trajectory_id},{meta.task},{meta.script.outcome},{ft}\n")
    return metas


def _episode_dirs(root: Path) -> Iterator[Path]:
    for dataset in sorted(p for p in root.iterdir() if p.is_dir()):
        for episode in sorted(p for p in dataset.iterdir() if p.is_dir()):
            for camera in sorted(p for p in episode.iterdir() if p.is_dir()):
                if (camera / META_NAME).exists():
                    yield camera


def load_episode(camera_dir: str | os.PathLike) -> Episode:
    camera_dir = Path(camera_dir)
    with open(camera_dir / META_NAME, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    ref = EpisodeRef(
        dataset_name=meta["dataset_name"], episode_id=meta["episode_id"],
        camera_key=meta["camera_key"], num_frames=meta["num_frames"],
        instruction=meta.get("instruction", ""))
    features = None
    diffs = None
    if (camera_dir / FEATURES_NAME).exists():
        features = read_feature_matrix(camera_dir / FEATURES_NAME)
    elif (camera_dir / DIFFS_NAME).exists():
        diffs = read_diffs_csv(camera_dir / DIFFS_NAME)
    image_paths = tuple(str(p) for p in sorted(camera_dir.glob("frame_*.png")))
    return Episode(ref=ref, features=features, diffs=diffs,
                   image_paths=image_paths, meta=meta)


def iter_corpus(root: str | os.PathLike) -> Iterator[Episode]:
    for camera_dir in _episode_dirs(Path(root)):
        yield load_episode(camera_dir)


def load_scripts(root: str | os.PathLike) -> dict[str, EpisodeScript]:
    scripts = {}
    for camera_dir in _episode_dirs(Path(root)):
        with open(camera_dir / META_NAME, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        if "script" in meta:
            scripts[meta.get("instruction", "")] = EpisodeScript.from_json_dict(meta["script"])
    return scripts


def frame_path(ref: EpisodeRef, frame_id: int) -> str:
    """Canonical frame path used in emitted VQA samples."""
    return f"{ref.dataset_name}/{ref.episode_id}/{ref.camera_key}/" + \
        FRAME_PATTERN.format(frame_id)
