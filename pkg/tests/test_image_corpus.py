"""Image-frame episodes: grayscale pixel features and pipeline intake."""

import json

import numpy as np
import pytest

PIL = pytest.importorskip("PIL")
from PIL import Image

from proclab import corpus as corpus_mod
from proclab.backends import EpisodeScript, MockBackend
from proclab.features import pixel_grayscale_features, write_diffs_csv
from proclab.pipeline import Episode, PipelineConfig, run_pipeline
from proclab.types import EpisodeRef, SubtaskSegment


def write_image_episode(root, num_frames=12, moving=range(3, 9)):
    cam = root / "imgset" / "ep0000" / "cam0"
    cam.mkdir(parents=True)
    for t in range(num_frames):
        img = Image.new("RGB", (32, 32), (10, 10, 10))
        if t in moving:
            # a block that slides right while the arm works
            for dx in range(6):
                for dy in range(6):
                    img.putpixel((2 * t + dx, 12 + dy), (250, 250, 250))
        img.save(cam / f"frame_{t:06d}.png")
    meta = {
        "dataset_name": "imgset", "episode_id": "ep0000", "camera_key": "cam0",
        "num_frames": num_frames,
        "instruction": "scene 0000: slide the block to the right",
        "script": EpisodeScript(
            plan=("Push the white block forward",),
            segments=(SubtaskSegment(1, "Push the white block forward", 3, 8),),
        ).to_json_dict(),
    }
    (cam / "meta.json").write_text(json.dumps(meta))
    return cam


def test_pixel_features_detect_motion(tmp_path):
    cam = write_image_episode(tmp_path)
    paths = sorted(str(p) for p in cam.glob("frame_*.png"))
    feats = pixel_grayscale_features(paths, size=16)
    assert feats.shape == (12, 256)
    diffs = np.linalg.norm(np.diff(feats, axis=0), axis=1)
    static = [diffs[t] for t in (0, 1, 10)]
    moving = [diffs[t] for t in (4, 5, 6)]
    assert max(static) == 0.0
    assert min(moving) > 0.0


def test_pipeline_accepts_image_episodes(tmp_path):
    write_image_episode(tmp_path)
    episodes = list(corpus_mod.iter_corpus(tmp_path))
    assert len(episodes) == 1 and episodes[0].features is None
    assert len(episodes[0].image_paths) == 12
    scripts = corpus_mod.load_scripts(tmp_path)
    result = run_pipeline(episodes, MockBackend(scripts, seed=1), PipelineConfig())
    assert result.report.episodes_out == 1
    assert len(result.records) == 12


def test_pipeline_accepts_precomputed_diff_episodes(tmp_path):
    # label-only corpus layout: diffs.csv instead of features or images
    cam = tmp_path / "dset" / "ep0" / "cam0"
    cam.mkdir(parents=True)
    diffs = np.array([0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 1.0])
    write_diffs_csv(cam / "diffs.csv", diffs)
    script = EpisodeScript(plan=("Open the lid",),
                           segments=(SubtaskSegment(1, "Open the lid", 1, 6),))
    (cam / "meta.json").write_text(json.dumps({
        "dataset_name": "dset", "episode_id": "ep0", "camera_key": "cam0",
        "num_frames": 8, "instruction": "scene: open the lid",
        "script": script.to_json_dict()}))
    episodes = list(corpus_mod.iter_corpus(tmp_path))
    assert episodes[0].diffs is not None
    scripts = corpus_mod.load_scripts(tmp_path)
    result = run_pipeline(episodes, MockBackend(scripts, seed=0), PipelineConfig())
    assert result.report.episodes_out == 1
    assert len(result.records) == 8
