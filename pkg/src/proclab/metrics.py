"""Evaluation metrics for progress predictions and action segmentations.

Boundary F1 (BF1@5) and matched-boundary localization error (mMAE) score
segment boundaries under a tolerance given as a fraction of the sequence
length; VOC (Spearman) and KT (Kendall tau-b) score trajectory-internal
progress ordering; EPR scores the effective resolution of the predicted
value distribution; MCC scores thresholded success detection; MAE_fail
scores failure-onset localization on failed trajectories.

Matching diagnostics are kept on the results so reports can show exactly
which boundaries paired up. Everything here is pure and stateless; the
latency harness is the one exception and must run serially.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateVariance,
    EmptyPredictions,
    KeyMismatch,
    LengthMismatch,
    MissingCutoff,
)
from .types import SubtaskSegment

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "proclab-report-v1"


# --- boundary sets ------------------------------------------------------------

@dataclass(frozen=True)
class BoundarySet:
    """Deduplicated segment-boundary positions as fractions of [0, 1]
    (frame index / (T - 1))."""

    positions: tuple[float, ...]
    source_length: int

    def __post_init__(self):
        pos = tuple(sorted(set(float(p) for p in self.positions)))
        for p in pos:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"boundary position {p} outside [0, 1]")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_frames(cls, frames: Sequence[int], num_frames: int,
                    include_endpoints: bool = False) -> "BoundarySet":
        denom = max(num_frames - 1, 1)
        pos = [f / denom for f in frames]
        if not include_endpoints:
            pos = [p for p in pos if 0.0 < p < 1.0]
        return cls(tuple(pos), num_frames)

    @classmethod
    def from_segments(cls, segments: Sequence[SubtaskSegment], num_frames: int,
                      include_endpoints: bool = False) -> "BoundarySet":
        frames = []
        for s in segments:
            if s.is_valid:
                frames.extend((s.start_frame, s.complete_frame))
        return cls.from_frames(frames, num_frames, include_endpoints)


@dataclass(frozen=True)
class BoundaryMatchResult:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    matches: tuple[tuple[float, float], ...]  # (gt, pred) pairs
    pred: BoundarySet
    gt: BoundarySet
    tol: float


def greedy_match(pred_positions: Sequence[float], gt_positions: Sequence[float],
                 tol: float) -> list[tuple[float, float]]:
    """Greedy (gt, pred) pairs in ascending ground-truth order: each ground
    truth takes the nearest still-unmatched prediction within ``tol`` (ties
    to the smaller position); each prediction is usable at most once."""
    preds = sorted(pred_positions)
    used = [False] * len(preds)
    matches: list[tuple[float, float]] = []
    for g in sorted(gt_positions):
        best = None
        best_dist = None
        for j, p in enumerate(preds):
            if used[j]:
                continue
            dist = abs(p - g)
            if dist <= tol and (best is None or dist < best_dist):
                best, best_dist = j, dist
        if best is not None:
            used[best] = True
            matches.append((g, preds[best]))
    return matches


def bf1(pred: BoundarySet, gt: BoundarySet, tol: float = 0.05) -> BoundaryMatchResult:
    """Boundary F1 under greedy matching (see :func:`greedy_match`).

    Two empty sets score F1 = 1, one empty set scores 0.
    """
    preds = list(pred.positions)
    matches = greedy_match(preds, gt.positions, tol)
    tp = len(matches)
    fp = len(preds) - tp
    fn = len(gt.positions) - tp
    if not preds and not gt.positions:
        precision = recall = f1_val = 1.0
    else:
        precision = tp / len(preds) if preds else 0.0
        recall = tp / len(gt.positions) if gt.positions else 0.0
        f1_val = (2 * precision * recall / (precision + recall)
                  if precision + recall > 0 else 0.0)
    return BoundaryMatchResult(precision=precision, recall=recall, f1=f1_val,
                               tp=tp, fp=fp, fn=fn, matches=tuple(matches),
                               pred=pred, gt=gt, tol=tol)


@dataclass(frozen=True)
class MmaeResult:
    matched_mae: float | None
    nearest_mae: float | None
    no_matches: bool


def mmae(match: BoundaryMatchResult) -> MmaeResult:
    """Two localization errors: mean |pred - gt| over matched pairs only
    (tolerance-bounded by construction), and the unthresholded mean
    distance from each ground-truth boundary to its nearest prediction.
    Both are reported; they answer different questions and published
    magnitudes are not unambiguous about which is meant."""
    matched = None
    no_matches = not match.matches
    if match.matches:
        matched = float(np.mean([abs(p - g) for g, p in match.matches]))
    nearest = None
    if match.gt.positions and match.pred.positions:
        preds = np.asarray(match.pred.positions)
        nearest = float(np.mean([np.min(np.abs(preds - g))
                                 for g in match.gt.positions]))
    return MmaeResult(matched_mae=matched, nearest_mae=nearest, no_matches=no_matches)


def optimal_match_count(gt: Sequence[float], pred: Sequence[float],
                        tol: float) -> int:
    """Maximum bipartite matching size (augmenting paths); the oracle the
    greedy matcher is audited against."""
    adj = [[j for j, p in enumerate(pred) if abs(p - g) <= tol] for g in gt]
    owner = [-1] * len(pred)

    def assign(i: int, visited: set[int]) -> bool:
        for j in adj[i]:
            if j in visited:
                continue
            visited.add(j)
            if owner[j] == -1 or assign(owner[j], visited):
                owner[j] = i
                return True
        return False

    return sum(1 for i in range(len(gt)) if assign(i, set()))


@dataclass(frozen=True)
class MatchingAudit:
    instances: int
    divergences: tuple[dict, ...]

    @property
    def max_loss(self) -> int:
        return max((d["optimal"] - d["greedy"] for d in self.divergences), default=0)


def audit_greedy_matching(num_frames: int = 20, max_size: int = 5,
                          tol: float = 0.05,
                          frame_units: bool = False) -> MatchingAudit:
    """Exhaustive greedy-vs-optimal audit over a frame grid.

    Matching instances decompose at gaps wider than the tolerance (no
    candidate edge crosses such a gap, for greedy or optimal), so every
    (gt, pred) pair of sizes <= max_size over the grid is a concatenation
    of runs of consecutive occupied points; enumerating every labeled run
    up to the maximum reachable width (2 * max_size points) audits the
    identical set of matching patterns as the full product enumeration.

    By default positions follow the BoundarySet convention (frame /
    (num_frames - 1)) with ``tol`` a fraction of the sequence; on a
    20-frame grid the 0.05 tolerance sits below the 1/19 spacing, matching
    degenerates to exact equality, and greedy is provably optimal (zero
    divergences). ``frame_units=True`` keeps integer positions and reads
    ``tol`` in frames, which admits adjacent-frame chains and documents
    where nearest-first greedy can lose matches (losses are logged).
    """
    window = min(num_frames, 2 * max_size)
    scale = 1.0 if frame_units else 1.0 / max(num_frames - 1, 1)
    divergences: list[dict] = []
    instances = 0
    labels = ("gt", "pred", "both")
    for width in range(1, window + 1):
        for coded in range(3 ** width):
            gt: list[float] = []
            pred: list[float] = []
            c = coded
            for pos in range(width):
                lab = labels[c % 3]
                c //= 3
                if lab in ("gt", "both"):
                    gt.append(pos * scale)
                if lab in ("pred", "both"):
                    pred.append(pos * scale)
            if len(gt) > max_size or len(pred) > max_size:
                continue
            instances += 1
            greedy = len(greedy_match(pred, gt, tol))
            optimal = optimal_match_count(gt, pred, tol)
            if greedy != optimal:
                entry = {"gt": tuple(gt), "pred": tuple(pred),
                         "greedy": greedy, "optimal": optimal}
                divergences.append(entry)
                logger.warning("greedy matching lost an instance: %s", entry)
    return MatchingAudit(instances=instances, divergences=tuple(divergences))


# --- rank correlations ----------------------------------------------------------

def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _check_pair(predictions, reference) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(reference, dtype=np.float64).reshape(-1)
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch("need at least 2 points")
    if np.all(x == x[0]):
        raise DegenerateVariance("all predictions are equal")
    if np.all(y == y[0]):
        raise DegenerateVariance("reference values are all equal")
    return x, y


def voc(predictions, reference) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    x, y = _check_pair(predictions, reference)
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.sum(rx * ry) / math.sqrt(np.sum(rx * rx) * np.sum(ry * ry)))


def kendall_tau(predictions, reference) -> float:
    """Kendall tau-b with tie correction."""
    x, y = _check_pair(predictions, reference)
    sx = np.sign(np.subtract.outer(x, x))
    sy = np.sign(np.subtract.outer(y, y))
    upper = np.triu_indices(len(x), k=1)
    concordance = float(np.sum(sx[upper] * sy[upper]))
    n0 = len(x) * (len(x) - 1) / 2
    tied_x = n0 - float(np.sum(np.abs(sx[upper])))
    tied_y = n0 - float(np.sum(np.abs(sy[upper])))
    denom = math.sqrt((n0 - tied_x) * (n0 - tied_y))
    if denom == 0:
        raise DegenerateVariance("all pairs tied")
    return concordance / denom


# --- effective progress resolution ----------------------------------------------

@dataclass(frozen=True)
class EprConfig:
    tau: float = 0.5
    k_max: int = 4096

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")


def epr(predictions, config: EprConfig = EprConfig()) -> float:
    """-log2 of the finest admissible quantization bin width.

    A bin width 1/k is admissible when the occupied-bin fraction
    (1/k) * |occupied bins| reaches tau; p = 1.0 clamps into the top bin.
    k = 1 is always admissible for tau <= 1, and occupancy is bounded by
    the number of distinct predictions, which caps the scan.
    """
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if len(p) == 0:
        raise EmptyPredictions("EPR needs at least one prediction")
    p = np.clip(p, 0.0, 1.0)
    distinct = len(np.unique(p))
    cap = min(config.k_max, int(distinct / config.tau) + 1)
    best = 1
    for k in range(1, cap + 1):
        bins = np.minimum(np.floor(p * k).astype(np.int64), k - 1)
        occupied = len(np.unique(bins))
        if occupied / k >= config.tau:
            best = k
    return math.log2(best)


# --- success detection ------------------------------------------------------------

def success_labels(progress_values, threshold: float = 0.95) -> np.ndarray:
    return np.asarray(progress_values, dtype=np.float64).reshape(-1) >= threshold


@dataclass(frozen=True)
class MccResult:
    value: float
    degenerate: bool
    tp: int
    tn: int
    fp: int
    fn: int


def mcc(pred_labels, gt_labels) -> MccResult:
    p = np.asarray(pred_labels, dtype=bool).reshape(-1)
    g = np.asarray(gt_labels, dtype=bool).reshape(-1)
    if len(p) != len(g):
        raise LengthMismatch(f"label lengths differ: {len(p)} vs {len(g)}")
    tp = int(np.sum(p & g))
    tn = int(np.sum(~p & ~g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    denom = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    if denom == 0:
        return MccResult(0.0, True, tp, tn, fp, fn)
    return MccResult((tp * tn - fp * fn) / denom, False, tp, tn, fp, fn)


# --- failure localization -----------------------------------------------------------

@dataclass(frozen=True)
class ProgressSeries:
    """Aligned predictions and ground truth for one trajectory. For failed
    trajectories, t_cut carries the annotated failure-onset frame."""

    trajectory_id: str
    predictions: np.ndarray
    ground_truth: np.ndarray
    t_cut: int | None = None
    clamped: bool = False

    def __post_init__(self):
        p = np.asarray(self.predictions, dtype=np.float64).reshape(-1)
        g = np.asarray(self.ground_truth, dtype=np.float64).reshape(-1)
        if len(p) != len(g):
            raise LengthMismatch(
                f"{self.trajectory_id}: predictions ({len(p)}) vs "
                f"ground truth ({len(g)})")
        clamped = bool(np.any(p < 0) or np.any(p > 1))
        object.__setattr__(self, "predictions", np.clip(p, 0.0, 1.0))
        object.__setattr__(self, "ground_truth", g)
        object.__setattr__(self, "clamped", clamped or self.clamped)


@dataclass(frozen=True)
class MaeFailResult:
    mae_frames: float
    mae_normalized: float
    per_trajectory: dict[str, dict] = field(default_factory=dict)


def turning_point(predictions) -> int:
    """Earliest frame attaining the maximum predicted progress."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    return int(np.argmax(p))


def mae_fail(series: Sequence[ProgressSeries]) -> MaeFailResult:
    if not series:
        raise EmptyPredictions("mae_fail needs at least one failed trajectory")
    per = {}
    frame_errors = []
    norm_errors = []
    for s in series:
        if s.t_cut is None:
            raise MissingCutoff(f"{s.trajectory_id} has no t_cut annotation")
        t_star = turning_point(s.predictions)
        err = abs(t_star - s.t_cut)
        denom = max(len(s.predictions) - 1, 1)
        per[s.trajectory_id] = {"t_star": t_star, "t_cut": s.t_cut,
                                "error_frames": err,
                                "error_normalized": err / denom}
        frame_errors.append(err)
        norm_errors.append(err / denom)
    return MaeFailResult(mae_frames=float(np.mean(frame_errors)),
                         mae_normalized=float(np.mean(norm_errors)),
                         per_trajectory=per)


def progress_mae(predictions, reference) -> float:
    """Plain element-wise mean absolute error on aligned fractions."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    g = np.asarray(reference, dtype=np.float64).reshape(-1)
    if len(p) != len(g):
        raise LengthMismatch(f"lengths differ: {len(p)} vs {len(g)}")
    if len(p) == 0:
        raise EmptyPredictions("progress_mae needs at least one value")
    return float(np.mean(np.abs(p - g)))


# --- latency -------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyResult:
    mean_seconds: float
    per_trajectory: tuple[float, ...]


def latency_harness(evaluator: Callable, trajectories: Sequence) -> LatencyResult:
    """Mean wall-clock seconds per trajectory; one untimed warm-up run.

    Evaluations run serially; keep the thread quiet."""
    if not trajectories:
        raise EmptyPredictions("latency harness needs at least one trajectory")
    evaluator(trajectories[0])  # warm-up, excluded
    times = []
    for traj in trajectories:
        t0 = time.perf_counter()
        evaluator(traj)
        times.append(time.perf_counter() - t0)
    return LatencyResult(mean_seconds=float(np.mean(times)),
                         per_trajectory=tuple(times))


# --- human evaluation export -----------------------------------------------------------

def human_eval_export(model_outputs: Mapping[str, Mapping[str, str]],
                      seed: int = 0) -> tuple[dict, dict]:
    """Anonymized comparison bundle plus the separate answer key.

    Model names become random codes, and each sample's candidate order is
    shuffled with the recorded seed, so raters never see model identity.
    """
    import random as _random
    models = sorted(model_outputs)
    if not models:
        raise KeyMismatch("no model outputs supplied")
    key_sets = {m: frozenset(model_outputs[m]) for m in models}
    reference = key_sets[models[0]]
    for m, keys in key_sets.items():
        if keys != reference:
            missing = sorted(reference ^ keys)
            raise KeyMismatch(f"model {m!r} sample keys differ", differing=missing)
    rng = _random.Random(seed)
    codes = {}
    for m in models:
        code = "M" + "".join(rng.choice("0123456789abcdef") for _ in range(6))
        while code in codes.values():
            code = "M" + "".join(rng.choice("0123456789abcdef") for _ in range(6))
        codes[m] = code
    samples = []
    for sample_id in sorted(reference):
        order = models[:]
        rng.shuffle(order)
        samples.append({
            "sample_id": sample_id,
            "candidates": [{"code": codes[m], "output": model_outputs[m][sample_id]}
                           for m in order],
        })
    bundle = {"schema_version": REPORT_SCHEMA_VERSION, "seed": seed,
              "samples": samples}
    answer_key = {"schema_version": REPORT_SCHEMA_VERSION, "seed": seed,
                  "codes": {codes[m]: m for m in models}}
    return bundle, answer_key


# --- report assembly ----------------------------------------------------------------------

def progress_report(series: Sequence[ProgressSeries], metrics: Sequence[str],
                    epr_config: EprConfig = EprConfig(),
                    mcc_threshold: float = 0.95) -> dict:
    """Named metric values plus per-trajectory breakdowns.

    Degenerate trajectories (constant predictions) are flagged per
    trajectory rather than silently scored 0; aggregate rank metrics
    average over the non-degenerate ones.
    """
    per_traj: dict[str, dict] = {s.trajectory_id: {} for s in series}
    values: dict[str, object] = {}
    diagnostics: dict[str, object] = {
        "clamped_trajectories": [s.trajectory_id for s in series if s.clamped],
    }

    def rank_metric(name: str, fn) -> None:
        scores = []
        degenerate = []
        for s in series:
            try:
                score = fn(s.predictions, s.ground_truth)
                per_traj[s.trajectory_id][name] = score
                scores.append(score)
            except DegenerateVariance:
                per_traj[s.trajectory_id][name] = None
                degenerate.append(s.trajectory_id)
        values[name] = float(np.mean(scores)) if scores else None
        if degenerate:
            diagnostics[f"{name}_degenerate"] = degenerate

    if "voc" in metrics:
        rank_metric("voc", voc)
    if "kt" in metrics:
        rank_metric("kt", kendall_tau)
    if "epr" in metrics:
        pooled = np.concatenate([s.predictions for s in series]) if series else []
        values["epr"] = epr(pooled, epr_config) if len(pooled) else None
    if "mae" in metrics:
        maes = []
        for s in series:
            m = progress_mae(s.predictions, s.ground_truth)
            per_traj[s.trajectory_id]["mae"] = m
            maes.append(m)
        values["mae"] = float(np.mean(maes)) if maes else None
    if "mcc" in metrics:
        pred_last = [s.predictions[-1] for s in series]
        gt_last = [s.ground_truth[-1] for s in series]
        result = mcc(success_labels(pred_last, mcc_threshold),
                     success_labels(gt_last, mcc_threshold))
        values["mcc"] = result.value
        diagnostics["mcc"] = {"degenerate": result.degenerate, "tp": result.tp,
                              "tn": result.tn, "fp": result.fp, "fn": result.fn}
    if "mae_fail" in metrics:
        failed = [s for s in series if s.t_cut is not None]
        if not failed:
            raise MissingCutoff("mae_fail requested but no trajectory has t_cut")
        result = mae_fail(failed)
        values["mae_fail"] = result.mae_frames
        values["mae_fail_normalized"] = result.mae_normalized
        for tid, row in result.per_trajectory.items():
            per_traj[tid]["mae_fail"] = row
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": {"epr_tau": epr_config.tau, "epr_k_max": epr_config.k_max,
                   "mcc_threshold": mcc_threshold},
        "metrics": values,
        "per_trajectory": per_traj,
        "diagnostics": diagnostics,
    }


def segmentation_report(pairs: Mapping[str, tuple[BoundarySet, BoundarySet]],
                        tol: float = 0.05) -> dict:
    """BF1/mMAE over {trajectory_id: (pred, gt)} boundary sets."""
    per_traj = {}
    f1s, matched, nearest = [], [], []
    for tid, (pred, gt) in sorted(pairs.items()):
        res = bf1(pred, gt, tol=tol)
        err = mmae(res)
        per_traj[tid] = {
            "precision": res.precision, "recall": res.recall, "f1": res.f1,
            "tp": res.tp, "fp": res.fp, "fn": res.fn,
            "matches": [list(m) for m in res.matches],
            "matched_mae": err.matched_mae, "nearest_mae": err.nearest_mae,
        }
        f1s.append(res.f1)
        if err.matched_mae is not None:
            matched.append(err.matched_mae)
        if err.nearest_mae is not None:
            nearest.append(err.nearest_mae)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": {"tol": tol},
        "metrics": {
            "bf1": float(np.mean(f1s)) if f1s else None,
            "matched_mae": float(np.mean(matched)) if matched else None,
            "nearest_mae": float(np.mean(nearest)) if nearest else None,
        },
        "per_trajectory": per_traj,
    }
