import json
import math
from pathlib import Path

import pytest

from proclab.cli import main
from proclab.jsonl import read_jsonl
from proclab.vqa import read_sample_dicts


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert run("synth-corpus", "--out", root, "--episodes", "12",
               "--tasks", "3", "--seed", "9", "--failure-rate", "0.3") == 0
    return root


@pytest.fixture(scope="module")
def annotated(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("ann") / "ann.jsonl"
    code = run("annotate", "--input", corpus, "--out", out, "--seed", "9")
    assert code == 0
    return out


@pytest.fixture(scope="module")
def labeled(corpus, annotated, tmp_path_factory):
    out = tmp_path_factory.mktemp("lab") / "labeled.jsonl"
    assert run("label", "--annotations", annotated, "--corpus", corpus,
               "--out", out) == 0
    return out


def test_synth_corpus_regenerates_identically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("synth-corpus", "--out", a, "--episodes", "5", "--seed", "3")
    run("synth-corpus", "--out", b, "--episodes", "5", "--seed", "3")
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_annotate_missing_input_exits_one(tmp_path, capsys):
    code = run("annotate", "--input", tmp_path / "nope", "--out", tmp_path / "o.jsonl")
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"


def test_remote_without_token_exits_one(corpus, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ANNOTATOR_ENDPOINT", "http://example.invalid")
    monkeypatch.setenv("ANNOTATOR_MODEL", "m")
    monkeypatch.delenv("ANNOTATOR_TOKEN", raising=False)
    code = run("annotate", "--input", corpus, "--backend", "remote",
               "--out", tmp_path / "o.jsonl")
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "AuthError"


def test_annotate_writes_records_and_report(annotated):
    records = read_jsonl(annotated)
    assert records
    report = json.loads(Path(f"{annotated}.report.json").read_text())
    assert report["episodes_in"] == 12
    assert report["episodes_out"] + report["quarantined"] == 12
    assert Path(f"{annotated}.quarantine.jsonl").exists()


def test_label_fills_progress(labeled):
    records = read_jsonl(labeled)
    assert all(r.progress is not None for r in records)
    assert all(0.0 <= r.progress <= 1.0 for r in records)


def test_label_refuses_overwrite_without_force(corpus, labeled, tmp_path, capsys):
    out = tmp_path / "again.jsonl"
    code = run("label", "--annotations", labeled, "--corpus", corpus, "--out", out)
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"
    assert run("label", "--annotations", labeled, "--corpus", corpus,
               "--out", out, "--force") == 0


def test_label_missing_features_exits_one(annotated, tmp_path, capsys):
    code = run("label", "--annotations", annotated, "--out", tmp_path / "x.jsonl")
    assert code == 1
    capsys.readouterr()


def test_gen_vqa_counts_match_density_oracle(labeled, tmp_path, capsys):
    out = tmp_path / "vqa.jsonl"
    density = 3
    assert run("gen-vqa", "--annotations", labeled, "--out", out,
               "--families", "a1,a2,b1,b2,c", "--density", density) == 0
    printed = dict(line.split("=") for line in
                   capsys.readouterr().out.strip().splitlines())
    samples = read_sample_dicts(out)
    records = read_jsonl(labeled)
    episodes = {}
    for r in records:
        episodes.setdefault(r.episode.trajectory_id, []).append(r)
    # counting oracle per family
    expect = {"seg_with_task": 0, "seg_task_free": 0, "next_step": 0,
              "future_plan": 0, "progress": 0}
    for recs in episodes.values():
        recs.sort(key=lambda r: r.frame_id)
        num_frames = recs[0].episode.num_frames
        valid_ids = {r.subtask_id for r in recs if r.subtask_id is not None}
        ts = sorted({round(i * (num_frames - 1) / (density - 1))
                     for i in range(density)})
        if valid_ids:
            expect["seg_with_task"] += 1
            expect["seg_task_free"] += 1
            spans = {}
            for r in recs:
                if r.subtask_id is not None:
                    lo, hi = spans.get(r.subtask_id, (r.frame_id, r.frame_id))
                    spans[r.subtask_id] = (min(lo, r.frame_id), max(hi, r.frame_id))
            for t in ts:
                future = [sid for sid, (lo, _) in spans.items() if lo > t]
                if future:
                    expect["next_step"] += 1
                    expect["future_plan"] += 1
        expect["progress"] += len(ts)
    for family, count in expect.items():
        assert int(printed[family]) == count, family
    assert len(samples) == sum(expect.values())


def test_gen_vqa_c_requires_labels(annotated, tmp_path, capsys):
    code = run("gen-vqa", "--annotations", annotated, "--out", tmp_path / "v.jsonl",
               "--families", "c")
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "MissingLabels"


def test_gen_vqa_unknown_family(labeled, tmp_path, capsys):
    assert run("gen-vqa", "--annotations", labeled, "--out", tmp_path / "v.jsonl",
               "--families", "z9") == 1
    capsys.readouterr()


def test_eval_perfect_predictions(labeled, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    assert run("eval", "--pred", labeled, "--gt", labeled,
               "--metrics", "voc,kt,epr,mcc,mae", "--out", report_path) == 0
    capsys.readouterr()
    report = json.loads(report_path.read_text())["progress"]
    assert report["metrics"]["voc"] == pytest.approx(1.0)
    assert report["metrics"]["mae"] == 0.0
    assert report["metrics"]["mcc"] in (1.0, 0.0)  # 0.0 only if degenerate
    assert report["metrics"]["epr"] >= 1.0


def test_eval_missing_trajectory_listed(labeled, tmp_path, capsys):
    records = read_jsonl(labeled)
    first_episode = records[0].episode.trajectory_id
    partial = tmp_path / "partial.jsonl"
    with open(partial, "w") as fh:
        for r in records:
            if r.episode.trajectory_id != first_episode:
                fh.write(json.dumps({
                    "trajectory_id": r.episode.trajectory_id,
                    "frame_id": r.frame_id, "progress": r.progress}) + "\n")
    code = run("eval", "--pred", partial, "--gt", labeled,
               "--out", tmp_path / "r.json")
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert first_episode in err["message"]


def test_eval_segmentation_report(tmp_path, capsys):
    gt = tmp_path / "gt.jsonl"
    pred = tmp_path / "pred.jsonl"
    rows = [{"trajectory_id": "t0", "num_frames": 101,
             "segments": [{"action_description": "a", "start_frame": 30,
                           "end_frame": 60}]}]
    gt.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    rows[0]["segments"][0]["start_frame"] = 32
    rows[0]["segments"][0]["end_frame"] = 80
    pred.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    assert run("eval", "--pred-seg", pred, "--gt-seg", gt, "--metrics", "bf1",
               "--out", tmp_path / "r.json") == 0
    capsys.readouterr()
    seg = json.loads((tmp_path / "r.json").read_text())["segmentation"]
    assert seg["metrics"]["bf1"] == pytest.approx(0.5)
    assert seg["metrics"]["matched_mae"] == pytest.approx(0.02)


def test_split_and_rft_label(corpus, labeled, tmp_path, capsys):
    train, test = tmp_path / "train.txt", tmp_path / "test.txt"
    assert run("split", "--tags", corpus / "tags.csv", "--seed", "4",
               "--mode", "succ", "--train-out", train, "--test-out", test) == 0
    train_ids = train.read_text().split()
    assert len(train_ids) == 3
    out = tmp_path / "adv.jsonl"
    assert run("rft-label", "--progress", labeled, "--tags", corpus / "tags.csv",
               "--horizon", "5", "--top-fraction", "0.3", "--out", out) == 0
    capsys.readouterr()
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert rows and all(r["label"] in ("positive", "negative") for r in rows)
    tags = (corpus / "tags.csv").read_text().splitlines()[1:]
    task_of = {line.split(",")[0]: line.split(",")[1] for line in tags}
    by_task = {}
    for r in rows:
        by_task.setdefault(task_of[r["trajectory_id"]], []).append(r)
    for task_rows in by_task.values():
        positives = sum(1 for r in task_rows if r["label"] == "positive")
        assert positives == math.ceil(0.3 * len(task_rows))


def test_profile_reports_overlap(tmp_path, capsys):
    assert run("profile", "--episodes", "30", "--delays", "2,3,5,2",
               "--out", tmp_path / "p.json") == 0
    capsys.readouterr()
    report = json.loads((tmp_path / "p.json").read_text())
    assert report["episodes_in"] == 30
    assert report["episodes_out"] + report["quarantined"] == 30
    assert report["busy_time_sum"] >= report["wall_time"]


def test_config_file_defaults_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("episodes = 4\nseed = 11\n")
    out = tmp_path / "c1"
    assert run("synth-corpus", "--config", cfg, "--out", out) == 0
    capsys.readouterr()
    assert len(list((out / "synth").iterdir())) == 4
    out2 = tmp_path / "c2"
    assert run("synth-corpus", "--config", cfg, "--out", out2,
               "--episodes", "6") == 0
    capsys.readouterr()
    assert len(list((out2 / "synth").iterdir())) == 6


def test_annotate_byte_identical_across_processes(corpus, tmp_path):
    import subprocess
    import sys

    outs = []
    for name in ("p1", "p2"):
        out = tmp_path / f"{name}.jsonl"
        proc = subprocess.run(
            [sys.executable, "-m", "proclab.cli", "annotate",
             "--input", str(corpus), "--out", str(out), "--seed", "21"],
            capture_output=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("not-a-real-flag = 1\n")
    assert run("synth-corpus", "--config", cfg, "--out", tmp_path / "x") == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"
