"""proclab command line: annotate, label, gen-vqa, eval, split, rft-label,
profile, synth-corpus.

Every subcommand accepts --config FILE, a flat key=value document whose
keys mirror the long flag names; explicit flags override the file. The
resolved configuration is logged verbatim at the start of each run for
reproducibility. Exit codes: 0 success, 1 usage or fatal error (with a
machine-readable JSON object on stderr), 2 partial success (episodes were
quarantined).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .backends import MockBackend, remote_annotator
from .errors import ConfigError, MissingLabels, NoFutureAction, NoValidSubtasks, ProclabError
from .features import read_diffs_csv, read_feature_matrix, frame_diffs, VisualSignal
from .jsonl import group_by_episode, read_jsonl, write_jsonl
from .metrics import (
    BoundarySet,
    EprConfig,
    ProgressSeries,
    progress_report,
    segmentation_report,
)
from .pipeline import PipelineConfig, RetryConfig, StageDelays, run_pipeline
from .progress import ProgressConfig, progress_labels
from .segments import segments_from_records
from .splits import (
    AdvantageConfig,
    build_oneshot_splits,
    read_tags_csv,
    rft_advantage_labels,
    write_advantage_jsonl,
    write_id_list,
)
from .vqa import (
    FAMILY_ALIASES,
    FAMILY_PROGRESS,
    SamplingConfig,
    gen_action_segmentation,
    gen_future_plan,
    gen_next_step,
    gen_progress,
    write_samples,
)

logger = logging.getLogger("proclab")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


def _parse_bool(value: str) -> bool:
    if value.lower() in ("1", "true", "yes", "on"):
        return True
    if value.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _parse_int_pair(value: str) -> tuple[int, int]:
    parts = value.replace(",", " ").split()
    if len(parts) != 2:
        raise ConfigError(f"expected two integers, got {value!r}")
    return int(parts[0]), int(parts[1])


def _parse_float_pair(value: str) -> tuple[float, float]:
    parts = value.replace(",", " ").split()
    if len(parts) != 2:
        raise ConfigError(f"expected two numbers, got {value!r}")
    return float(parts[0]), float(parts[1])


def load_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` document; '#' starts a comment."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip().replace("_", "-")] = value.strip()
    return values


class _Defaults:
    """Config-file overrides threaded into argparse defaults."""

    def __init__(self, overrides: dict[str, str]):
        self.overrides = overrides
        self.used: set[str] = set()

    def get(self, key: str, fallback, cast=str):
        if key in self.overrides:
            self.used.add(key)
            return cast(self.overrides[key])
        return fallback

    def check_all_used(self):
        unknown = set(self.overrides) - self.used
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")


def build_parser(d: _Defaults) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proclab",
        description="Procedure-grounded progress labels, annotation pipeline, "
                    "VQA samples, and evaluation metrics.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file; flags override")
    common.add_argument("--log-level", default=d.get("log-level", "INFO"),
                        help="logging level (default INFO)")
    common.add_argument("--seed", type=int, default=d.get("seed", 0, int),
                        help="seed for every stochastic choice (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add_parser("annotate", help="run the annotation pipeline over a corpus")
    p.add_argument("--input", required=True, help="corpus directory")
    p.add_argument("--backend", choices=("mock", "remote"),
                   default=d.get("backend", "mock"))
    p.add_argument("--out", required=True, help="annotation JSONL output")
    p.add_argument("--quarantine", default=None,
                   help="quarantine JSONL (default <out>.quarantine.jsonl)")
    p.add_argument("--report", default=None,
                   help="pipeline report JSON (default <out>.report.json)")
    p.add_argument("--policy", choices=("strict", "auto_trim"),
                   default=d.get("policy", "auto_trim"))
    p.add_argument("--queue-capacity", type=int, default=d.get("queue-capacity", 64, int))
    p.add_argument("--prep-workers", type=int, default=d.get("prep-workers", 4, int))
    p.add_argument("--annotator-concurrency", type=int,
                   default=d.get("annotator-concurrency", 8, int))
    p.add_argument("--dedup-threshold", type=float,
                   default=d.get("dedup-threshold", 0.05, float))
    p.add_argument("--max-attempts", type=int, default=d.get("max-attempts", 3, int))
    p.set_defaults(func=cmd_annotate)

    p = add_parser("label", help="fill the progress field of an annotation JSONL")
    p.add_argument("--annotations", required=True)
    p.add_argument("--corpus", default=None,
                   help="corpus root holding per-episode features.fmx or diffs.csv")
    p.add_argument("--features", default=None, help="single feature matrix file")
    p.add_argument("--diffs", default=None, help="single per-step magnitude CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--clip", type=float, nargs=2, metavar=("LO", "HI"),
                   default=d.get("clip", (0.75, 1.25), _parse_float_pair))
    p.add_argument("--eps", type=float, default=d.get("eps", 1e-6, float))
    p.add_argument("--metric", choices=("l1", "l2"), default=d.get("metric", "l2"))
    p.add_argument("--force", action="store_true",
                   default=d.get("force", False, _parse_bool),
                   help="overwrite non-null progress values")
    p.set_defaults(func=cmd_label)

    p = add_parser("gen-vqa", help="emit VQA training samples from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--families", default=d.get("families", "a1,a2,b1,b2,c"),
                   help="comma list of a1,a2,b1,b2,c")
    p.add_argument("--fps", type=float, default=d.get("fps", 2.0, float))
    p.add_argument("--max-frames", type=int, default=d.get("max-frames", 512, int))
    p.add_argument("--window", type=int, default=d.get("window", 4, int))
    p.add_argument("--density", type=int, default=d.get("density", 4, int),
                   help="queried frames per episode for b/c families")
    p.set_defaults(func=cmd_gen_vqa)

    p = add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", default=None, help="progress prediction JSONL")
    p.add_argument("--gt", default=None, help="ground-truth progress JSONL")
    p.add_argument("--pred-seg", default=None, help="segmentation prediction JSONL")
    p.add_argument("--gt-seg", default=None, help="segmentation ground-truth JSONL")
    p.add_argument("--cutoffs", default=None,
                   help="CSV trajectory_id,t_cut for failed trajectories")
    p.add_argument("--metrics", default=d.get("metrics", "voc,kt,epr,mcc,mae"),
                   help="comma list of voc,kt,epr,mcc,mae,mae_fail,bf1")
    p.add_argument("--tau", type=float, default=d.get("tau", 0.5, float))
    p.add_argument("--k-max", type=int, default=d.get("k-max", 4096, int))
    p.add_argument("--threshold", type=float, default=d.get("threshold", 0.95, float))
    p.add_argument("--tol", type=float, default=d.get("tol", 0.05, float))
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = add_parser("split", help="build one-shot adaptation splits")
    p.add_argument("--tags", required=True, help="CSV trajectory_id,task,outcome,failure_type")
    p.add_argument("--mode", choices=("succ", "succ_fail"), default=d.get("mode", "succ"))
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)

    p = add_parser("rft-label", help="advantage labels from progress predictions")
    p.add_argument("--progress", required=True, help="progress prediction JSONL")
    p.add_argument("--tags", required=True, help="CSV mapping trajectories to tasks")
    p.add_argument("--horizon", type=int, default=d.get("horizon", 50, int))
    p.add_argument("--top-fraction", type=float, default=d.get("top-fraction", 0.3, float))
    p.add_argument("--per-trajectory", action="store_true",
                   default=d.get("per-trajectory", False, _parse_bool))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rft_label)

    p = add_parser("profile", help="run the pipeline with simulated stage latencies")
    p.add_argument("--input", default=None, help="corpus directory (else synthetic)")
    p.add_argument("--episodes", type=int, default=d.get("episodes", 50, int))
    p.add_argument("--delays", default=d.get("delays", "5,10,20,5"),
                   help="read,preprocess,annotate,consume latencies in ms")
    p.add_argument("--jitter", type=float, default=d.get("jitter", 0.0, float))
    p.add_argument("--queue-capacity", type=int, default=d.get("queue-capacity", 64, int))
    p.add_argument("--prep-workers", type=int, default=d.get("prep-workers", 1, int))
    p.add_argument("--annotator-concurrency", type=int,
                   default=d.get("annotator-concurrency", 1, int))
    p.add_argument("--out", default=None, help="optional report JSON path")
    p.set_defaults(func=cmd_profile)

    p = add_parser("synth-corpus", help="generate a scripted synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=d.get("episodes", 20, int))
    p.add_argument("--tasks", type=int, default=d.get("tasks", 3, int))
    p.add_argument("--subtasks-range", type=int, nargs=2, metavar=("MIN", "MAX"),
                   default=d.get("subtasks-range", (2, 4), _parse_int_pair))
    p.add_argument("--frames-range", type=int, nargs=2, metavar=("MIN", "MAX"),
                   default=d.get("frames-range", (30, 80), _parse_int_pair))
    p.add_argument("--failure-rate", type=float, default=d.get("failure-rate", 0.25, float))
    p.set_defaults(func=cmd_synth_corpus)

    return parser


# --- subcommands ---------------------------------------------------------------

def cmd_annotate(args) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise ConfigError(f"input directory {args.input!r} does not exist")
    if args.backend == "mock":
        scripts = corpus_mod.load_scripts(root)
        backend = MockBackend(scripts, seed=args.seed)
    else:
        backend = remote_annotator(max_attempts=args.max_attempts,
                                   max_in_flight=args.annotator_concurrency)
    config = PipelineConfig(
        queue_capacity=args.queue_capacity,
        preprocessor_workers=args.prep_workers,
        annotator_concurrency=args.annotator_concurrency,
        dedup_threshold=args.dedup_threshold,
        retry=RetryConfig(max_attempts=args.max_attempts),
        validation_policy=args.policy)
    result = run_pipeline(corpus_mod.iter_corpus(root), backend, config)
    write_jsonl(result.records, args.out)
    quarantine_path = args.quarantine or f"{args.out}.quarantine.jsonl"
    with open(quarantine_path, "w", encoding="utf-8") as fh:
        for entry in result.quarantined:
            fh.write(json.dumps(entry.to_json_dict()))
            fh.write("\n")
    report_path = args.report or f"{args.out}.report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(result.report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"episodes_in={result.report.episodes_in} "
          f"episodes_out={result.report.episodes_out} "
          f"quarantined={result.report.quarantined} "
          f"records={len(result.records)}")
    return EXIT_OK if not result.quarantined else EXIT_PARTIAL


def _diffs_for_episode(args, key: tuple, num_frames: int) -> np.ndarray:
    if args.corpus:
        cam_dir = Path(args.corpus) / key[0] / key[1] / key[2]
        feat = cam_dir / corpus_mod.FEATURES_NAME
        dcsv = cam_dir / corpus_mod.DIFFS_NAME
        if feat.exists():
            return frame_diffs(VisualSignal.from_features(read_feature_matrix(feat)),
                               metric=args.metric)
        if dcsv.exists():
            return read_diffs_csv(dcsv)
        raise ConfigError(f"no features.fmx or diffs.csv under {cam_dir}")
    if args.features:
        return frame_diffs(VisualSignal.from_features(read_feature_matrix(args.features)),
                           metric=args.metric)
    if args.diffs:
        return read_diffs_csv(args.diffs)
    raise ConfigError("need one of --corpus, --features, or --diffs")


def cmd_label(args) -> int:
    records = read_jsonl(args.annotations)
    groups = group_by_episode(records)
    if (args.features or args.diffs) and len(groups) > 1:
        raise ConfigError(
            "--features/--diffs apply to a single episode; this file has "
            f"{len(groups)}; use --corpus")
    config = ProgressConfig(clip_lo=args.clip[0], clip_hi=args.clip[1],
                            epsilon=args.eps, diff_metric=args.metric)
    out_records = []
    for key, recs in sorted(groups.items()):
        if any(r.progress is not None for r in recs) and not args.force:
            raise ConfigError(
                f"{'/'.join(key)} already has progress values; pass --force to overwrite")
        diffs = _diffs_for_episode(args, key, recs[0].episode.num_frames)
        segments = segments_from_records(recs)
        labels = progress_labels(segments, diffs, config)
        for rec in recs:
            out_records.append(replace(rec, progress=float(labels.values[rec.frame_id])))
    out_records.sort(key=lambda r: r.sort_key)
    write_jsonl(out_records, args.out)
    print(f"labeled {len(out_records)} records across {len(groups)} episodes")
    return EXIT_OK


def cmd_gen_vqa(args) -> int:
    families = []
    for name in args.families.split(","):
        name = name.strip()
        if not name:
            continue
        if name not in FAMILY_ALIASES and name not in FAMILY_ALIASES.values():
            raise ConfigError(f"unknown family {name!r}")
        families.append(FAMILY_ALIASES.get(name, name))
    config = SamplingConfig(fps=args.fps, max_frames=args.max_frames,
                            window=args.window)
    records = read_jsonl(args.annotations)
    groups = group_by_episode(records)
    samples = []
    counts = {f: 0 for f in families}
    for key, recs in sorted(groups.items()):
        num_frames = recs[0].episode.num_frames
        density = min(args.density, num_frames)
        ts = sorted({round(i * (num_frames - 1) / max(density - 1, 1))
                     for i in range(density)})
        values = [None] * num_frames
        for r in recs:
            values[r.frame_id] = r.progress
        for family in families:
            try:
                if family == "seg_with_task":
                    samples.append(gen_action_segmentation(recs, True, config))
                    counts[family] += 1
                elif family == "seg_task_free":
                    samples.append(gen_action_segmentation(recs, False, config))
                    counts[family] += 1
                elif family == "next_step":
                    for t in ts:
                        try:
                            samples.append(gen_next_step(recs, t, config))
                            counts[family] += 1
                        except NoFutureAction:
                            pass
                elif family == "future_plan":
                    for t in ts:
                        try:
                            samples.append(gen_future_plan(recs, t, config))
                            counts[family] += 1
                        except NoFutureAction:
                            pass
                elif family == FAMILY_PROGRESS:
                    for t in ts:
                        if values[t] is None:
                            raise MissingLabels(
                                f"{'/'.join(key)} frame {t} has no progress label; "
                                "run `proclab label` first")
                        samples.append(gen_progress(recs, values, t, config))
                        counts[family] += 1
            except NoValidSubtasks:
                logger.warning("skipping %s for %s: no valid segments",
                               family, "/".join(key))
    write_samples(samples, args.out)
    for family in families:
        print(f"{family}={counts[family]}")
    print(f"total={len(samples)}")
    return EXIT_OK


def _load_progress_file(path) -> dict[str, dict[int, float]]:
    """Progress JSONL: either {trajectory_id, frame_id, progress} lines or
    annotation records (detected by dataset_name)."""
    out: dict[str, dict[int, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline()
        if not head.strip():
            return out
        is_annotation = "dataset_name" in json.loads(head)
    if is_annotation:
        for rec in read_jsonl(path):
            if rec.progress is None:
                raise ConfigError(
                    f"{rec.episode.trajectory_id} frame {rec.frame_id} has no "
                    "progress value")
            out.setdefault(rec.episode.trajectory_id, {})[rec.frame_id] = rec.progress
        return out
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            try:
                out.setdefault(row["trajectory_id"], {})[int(row["frame_id"])] = \
                    float(row["progress"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad progress row ({exc})")
    return out


def _load_segmentations(path) -> dict[str, tuple[list[dict], int]]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out[row["trajectory_id"]] = (row["segments"], int(row["num_frames"]))
    return out


def cmd_eval(args) -> int:
    metric_names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    report: dict = {"schema_version": "proclab-report-v1"}
    progress_metrics = [m for m in metric_names if m != "bf1"]
    if progress_metrics and (args.pred or args.gt):
        if not (args.pred and args.gt):
            raise ConfigError("--pred and --gt must be given together")
        preds = _load_progress_file(args.pred)
        gts = _load_progress_file(args.gt)
        missing = sorted(set(gts) - set(preds))
        if missing:
            raise ConfigError(f"predictions missing for trajectories: {missing}")
        cutoffs: dict[str, int] = {}
        if args.cutoffs:
            with open(args.cutoffs, "r", encoding="utf-8", newline="") as fh:
                for row in csv.DictReader(fh):
                    cutoffs[row["trajectory_id"]] = int(row["t_cut"])
        series = []
        for tid in sorted(gts):
            frames = sorted(gts[tid])
            missing_frames = [f for f in frames if f not in preds[tid]]
            if missing_frames:
                raise ConfigError(
                    f"{tid}: predictions missing at frames {missing_frames[:5]}")
            series.append(ProgressSeries(
                trajectory_id=tid,
                predictions=[preds[tid][f] for f in frames],
                ground_truth=[gts[tid][f] for f in frames],
                t_cut=cutoffs.get(tid)))
        report["progress"] = progress_report(
            series, progress_metrics,
            epr_config=EprConfig(tau=args.tau, k_max=args.k_max),
            mcc_threshold=args.threshold)
    if args.pred_seg or args.gt_seg:
        if not (args.pred_seg and args.gt_seg):
            raise ConfigError("--pred-seg and --gt-seg must be given together")
        pred_segs = _load_segmentations(args.pred_seg)
        gt_segs = _load_segmentations(args.gt_seg)
        missing = sorted(set(gt_segs) - set(pred_segs))
        if missing:
            raise ConfigError(f"segmentations missing for trajectories: {missing}")
        pairs = {}
        for tid in sorted(gt_segs):
            gt_rows, num_frames = gt_segs[tid]
            pred_rows, _ = pred_segs[tid]

            def bounds(rows):
                frames = []
                for r in rows:
                    frames.extend((int(r["start_frame"]), int(r["end_frame"])))
                return BoundarySet.from_frames(frames, num_frames)

            pairs[tid] = (bounds(pred_rows), bounds(gt_rows))
        report["segmentation"] = segmentation_report(pairs, tol=args.tol)
    if len(report) == 1:
        raise ConfigError("nothing to evaluate: pass --pred/--gt or --pred-seg/--gt-seg")
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for section in ("progress", "segmentation"):
        if section in report:
            for name, value in sorted(report[section]["metrics"].items()):
                print(f"{name}={value}")
    return EXIT_OK


def cmd_split(args) -> int:
    tags = read_tags_csv(args.tags)
    result = build_oneshot_splits(tags, mode=args.mode, seed=args.seed)
    write_id_list(result.train, args.train_out)
    write_id_list(result.test, args.test_out)
    print(f"train={len(result.train)} test={len(result.test)}")
    return EXIT_OK


def cmd_rft_label(args) -> int:
    progress = _load_progress_file(args.progress)
    tags = {t.trajectory_id: t for t in read_tags_csv(args.tags)}
    missing = sorted(set(progress) - set(tags))
    if missing:
        raise ConfigError(f"no task tag for trajectories: {missing}")
    by_task: dict[str, dict[str, list[float]]] = {}
    for tid, frames in progress.items():
        values = [frames[f] for f in sorted(frames)]
        by_task.setdefault(tags[tid].task, {})[tid] = values
    config = AdvantageConfig(horizon=args.horizon, top_fraction=args.top_fraction,
                             per_trajectory=args.per_trajectory)
    labels = rft_advantage_labels(by_task, config)
    write_advantage_jsonl(labels, args.out)
    positives = sum(1 for l in labels if l.label == "positive")
    print(f"samples={len(labels)} positives={positives}")
    return EXIT_OK


def cmd_profile(args) -> int:
    parts = [float(x) for x in args.delays.split(",")]
    if len(parts) != 4:
        raise ConfigError("--delays needs four comma-separated values (ms)")
    delays = StageDelays(read=parts[0] / 1e3, preprocess=parts[1] / 1e3,
                         annotate=parts[2] / 1e3, consume=parts[3] / 1e3,
                         jitter=args.jitter, seed=args.seed)
    if args.input:
        source = list(corpus_mod.iter_corpus(args.input))
        scripts = corpus_mod.load_scripts(args.input)
    else:
        metas = corpus_mod.synthetic_episodes(args.episodes, seed=args.seed,
                                              frames_range=(10, 20))
        source = [m.episode for m in metas]
        scripts = corpus_mod.scripts_by_instruction(metas)
    backend = MockBackend(scripts, seed=args.seed)
    config = PipelineConfig(
        queue_capacity=args.queue_capacity,
        preprocessor_workers=args.prep_workers,
        annotator_concurrency=args.annotator_concurrency,
        stage_delays=delays)
    result = run_pipeline(source, backend, config)
    payload = result.report.to_json_dict()
    busy_sum = sum(payload["per_stage_busy_time"].values())
    payload["busy_time_sum"] = busy_sum
    payload["overlap_ratio"] = busy_sum / payload["wall_time"] if payload["wall_time"] else 0.0
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    print(text)
    return EXIT_OK if not result.quarantined else EXIT_PARTIAL


def cmd_synth_corpus(args) -> int:
    metas = corpus_mod.generate_corpus(
        args.out, episodes=args.episodes, seed=args.seed, num_tasks=args.tasks,
        subtasks_range=tuple(args.subtasks_range),
        frames_range=tuple(args.frames_range),
        failure_rate=args.failure_rate)
    failures = sum(1 for m in metas if m.script.outcome == "failure")
    print(f"episodes={len(metas)} failures={failures} root={args.out}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------

def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        overrides = load_config_file(known.config) if known.config else {}
        defaults = _Defaults(overrides)
        parser = build_parser(defaults)
        defaults.check_all_used()
        args = parser.parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                            format="%(levelname)s %(name)s: %(message)s")
        resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        logger.info("resolved config: %s", json.dumps(resolved, default=str, sort_keys=True))
        return args.func(args)
    except ProclabError as exc:
        json.dump({"error": exc.code, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_FATAL
    except (FileNotFoundError, NotADirectoryError) as exc:
        json.dump({"error": "FileNotFound", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_FATAL


if __name__ == "__main__":
    raise SystemExit(main())
