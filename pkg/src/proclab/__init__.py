"""proclab: procedure-grounded progress labels, annotation pipeline, VQA
sample generation, and evaluation metrics for manipulation trajectories."""

from .backends import (
    AnnotatorBackend,
    EpisodeScript,
    FramePayload,
    MockBackend,
    RemoteBackend,
    remote_annotator,
)
from .errors import ProclabError
from .features import VisualSignal, frame_diffs, read_feature_matrix, write_feature_matrix
from .jsonl import group_by_episode, read_jsonl, write_jsonl
from .metrics import (
    BoundarySet,
    EprConfig,
    ProgressSeries,
    bf1,
    epr,
    kendall_tau,
    mae_fail,
    mcc,
    mmae,
    progress_mae,
    success_labels,
    voc,
)
from .pipeline import (
    Episode,
    PipelineConfig,
    PipelineReport,
    PipelineResult,
    StageDelays,
    dedup_keyframes,
    run_pipeline,
)
from .progress import (
    ProgressConfig,
    ProgressLabels,
    progress_labels,
    subtask_weights,
    time_interp_baseline,
)
from .segments import (
    expand_segments_to_frames,
    propagate_keyframe_reasoning,
    segments_from_records,
    validate_segmentation,
)
from .splits import AdvantageConfig, TrajectoryTag, build_oneshot_splits, rft_advantage_labels
from .types import (
    AnnotationRecord,
    CompletionState,
    EpisodeRef,
    GroundingBox,
    ReasoningSource,
    SegmentationResult,
    SubtaskSegment,
)
from .vqa import (
    SamplingConfig,
    VqaSample,
    gen_action_segmentation,
    gen_future_plan,
    gen_next_step,
    gen_progress,
    parse_progress_tag,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatorBackend", "EpisodeScript", "FramePayload", "MockBackend",
    "RemoteBackend", "remote_annotator", "ProclabError", "VisualSignal",
    "frame_diffs", "read_feature_matrix", "write_feature_matrix",
    "group_by_episode", "read_jsonl", "write_jsonl", "BoundarySet",
    "EprConfig", "ProgressSeries", "bf1", "epr", "kendall_tau", "mae_fail",
    "mcc", "mmae", "progress_mae", "success_labels", "voc", "Episode",
    "PipelineConfig", "PipelineReport", "PipelineResult", "StageDelays",
    "dedup_keyframes", "run_pipeline", "ProgressConfig", "ProgressLabels",
    "progress_labels", "subtask_weights", "time_interp_baseline",
    "expand_segments_to_frames", "propagate_keyframe_reasoning",
    "segments_from_records", "validate_segmentation", "AdvantageConfig",
    "TrajectoryTag", "build_oneshot_splits", "rft_advantage_labels",
    "AnnotationRecord", "CompletionState", "EpisodeRef", "GroundingBox",
    "ReasoningSource", "SegmentationResult", "SubtaskSegment",
    "SamplingConfig", "VqaSample", "gen_action_segmentation",
    "gen_future_plan", "gen_next_step", "gen_progress", "parse_progress_tag",
]
