"""proclab-train: thin bindings exposing proclab's annotation reading,
progress-label computation, VQA batch iteration, and metric evaluation to
training loops, over the proclab CLI and file formats."""

from .bindings import (
    BoundSampleIterator,
    PrimaryToolError,
    ProgressSettings,
    compute_progress,
    evaluate,
    iter_vqa,
    open_annotations,
)

__version__ = "0.1.0"

__all__ = [
    "BoundSampleIterator",
    "PrimaryToolError",
    "ProgressSettings",
    "compute_progress",
    "evaluate",
    "iter_vqa",
    "open_annotations",
]
