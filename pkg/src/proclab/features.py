"""Per-frame visual signals and their file formats.

Two interchangeable signal sources:
  * per-frame feature vectors, shape (T, d), carried in a small binary
    matrix file (magic ``FMX1``, uint32 T, uint32 d, little-endian,
    float32 row-major payload);
  * precomputed per-step change magnitudes, length T - 1, carried as a
    headerless one-column CSV.

The default pixel extractor is a downscaled grayscale intensity vector;
richer representations arrive as precomputed features.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

FEATURE_MAGIC = b"FMX1"
_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True, eq=False)
class VisualSignal:
    """Either per-frame features phi_t or per-step magnitudes d_t."""

    features: np.ndarray | None = None
    magnitudes: np.ndarray | None = None

    def __post_init__(self):
        if (self.features is None) == (self.magnitudes is None):
            raise ValueError("provide exactly one of features or magnitudes")
        if self.features is not None:
            arr = np.asarray(self.features, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
                raise DimensionMismatch(
                    f"features must have shape (T, d) with T, d >= 1, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError("features must be finite")
            object.__setattr__(self, "features", arr)
        else:
            arr = np.asarray(self.magnitudes, dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise ValueError("magnitudes must be finite")
            if np.any(arr < 0):
                raise ValueError("magnitudes must be >= 0")
            object.__setattr__(self, "magnitudes", arr)

    @classmethod
    def from_features(cls, features) -> "VisualSignal":
        return cls(features=features)

    @classmethod
    def from_magnitudes(cls, magnitudes) -> "VisualSignal":
        return cls(magnitudes=magnitudes)

    @property
    def num_frames(self) -> int:
        if self.features is not None:
            return int(self.features.shape[0])
        return int(len(self.magnitudes)) + 1


def frame_diffs(signal: VisualSignal, metric: str = "l2") -> np.ndarray:
    """Per-step change magnitudes d_t = ||phi_t - phi_{t-1}||, t = 1..T-1.

    Magnitudes supplied directly are returned unchanged; a single-frame
    signal yields an empty array.
    """
    if metric not in ("l1", "l2"):
        raise ValueError(f"unknown diff metric {metric!r}")
    if signal.magnitudes is not None:
        return signal.magnitudes.copy()
    phi = signal.features
    if phi.shape[0] == 1:
        return np.zeros(0, dtype=np.float64)
    steps = np.diff(phi, axis=0)
    if metric == "l1":
        return np.sum(np.abs(steps), axis=1)
    return np.sqrt(np.sum(steps * steps, axis=1))


# --- file formats ------------------------------------------------------------

def write_feature_matrix(path: str | os.PathLike, features: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(features, dtype=np.float32))
    if arr.ndim != 2:
        raise DimensionMismatch(f"feature matrix must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_feature_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DimensionMismatch(f"{path}: truncated feature file header")
        magic, t, d = _HEADER.unpack(header)
        if magic != FEATURE_MAGIC:
            raise DimensionMismatch(f"{path}: bad magic {magic!r}")
        payload = fh.read(4 * t * d)
        if len(payload) != 4 * t * d:
            raise DimensionMismatch(f"{path}: truncated feature payload")
    arr = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    return arr.astype(np.float64)


def write_diffs_csv(path: str | os.PathLike, diffs: np.ndarray) -> None:
    arr = np.asarray(diffs, dtype=np.float64).reshape(-1)
    with open(path, "w", encoding="utf-8") as fh:
        for v in arr:
            fh.write(f"{float(v)!r}\n")  # repr round-trips doubles exactly


def read_diffs_csv(path: str | os.PathLike) -> np.ndarray:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                values.append(float(line))
    return np.asarray(values, dtype=np.float64)


def pixel_grayscale_features(image_paths, size: int = 16) -> np.ndarray:
    """Downscaled grayscale intensity vectors for a list of frame images.

    Needs pillow; imported lazily so feature-only corpora never require it.
    """
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise RuntimeError("pillow is required to read image frames") from exc
    rows = []
    for path in image_paths:
        with Image.open(path) as img:
            gray = img.convert("L").resize((size, size), Image.BILINEAR)
            rows.append(np.asarray(gray, dtype=np.float64).reshape(-1) / 255.0)
    if not rows:
        raise DimensionMismatch("no image frames provided")
    return np.stack(rows, axis=0)
