"""
Time / frame / feature / segment arithmetic shared by every other module.

Segments are 1-based everywhere (k = 1..S_i), in memory and in files.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_FPS = 30.0
DEFAULT_FEATURE_STRIDE = 16
DEFAULT_MAX_SEGMENTS = 512

# Slack in segment units so that t = (k-1) * segment_duration maps back to k
_INDEX_TOL = 1e-9


class GroundingError(Exception):
    """Base class for every error raised by this toolkit"""


class ValidationError(GroundingError, ValueError):
    """Malformed input: bad metadata, shapes, annotations or files"""


class SegmentRangeError(GroundingError, IndexError):
    """A time, segment or query index falls outside its valid range"""


class GenerationError(GroundingError):
    """A synthetic scenario cannot be generated from the given config"""


class TrainingError(GroundingError):
    """Training diverged"""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class KeyMismatchError(ValidationError):
    """Predictions and annotations are not keyed by the same query ids"""

    def __init__(self, missing: list[str], extra: list[str]):
        parts = []
        if missing:
            parts.append(f"missing predictions for {len(missing)} queries: {', '.join(missing[:10])}")
        if extra:
            parts.append(f"{len(extra)} predictions without annotation: {', '.join(extra[:10])}")
        super().__init__("; ".join(parts) or "query id mismatch")
        self.missing = missing
        self.extra = extra


@dataclass(frozen=True)
class VideoMeta:
    """Frame count and feature/segment scale of one video"""

    video_id: str
    num_frames: int
    fps: float = DEFAULT_FPS
    feature_stride: int = DEFAULT_FEATURE_STRIDE
    max_segments: int = DEFAULT_MAX_SEGMENTS

    def __post_init__(self):
        if not isinstance(self.num_frames, (int, np.integer)) or isinstance(self.num_frames, bool):
            raise ValidationError(f"{self.video_id}: num_frames must be an integer, got {self.num_frames!r}")
        if not self.fps > 0:
            raise ValidationError(f"{self.video_id}: fps must be > 0, got {self.fps}")
        if self.feature_stride < 1:
            raise ValidationError(f"{self.video_id}: feature_stride must be >= 1, got {self.feature_stride}")
        if self.max_segments < 1:
            raise ValidationError(f"{self.video_id}: max_segments must be >= 1, got {self.max_segments}")
        if self.num_frames < self.feature_stride:
            raise ValidationError(
                f"{self.video_id}: num_frames={self.num_frames} is shorter than one feature "
                f"(stride {self.feature_stride})"
            )

    @property
    def duration(self) -> float:
        """Video length in seconds"""
        return self.num_frames / self.fps

    @property
    def feature_count(self) -> int:
        return self.num_frames // self.feature_stride

    @property
    def segment_count(self) -> int:
        return min(self.feature_count, self.max_segments)

    @property
    def segment_duration(self) -> float:
        """Seconds covered by one segment (features per segment times feature period)"""
        return self.feature_stride / self.fps * self.feature_count / self.segment_count

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "num_frames": int(self.num_frames),
            "fps": float(self.fps),
            "feature_stride": int(self.feature_stride),
        }


@dataclass(frozen=True, order=True)
class SegmentInterval:
    """Inclusive 1-based (start_segment, end_segment) pair"""

    start_segment: int
    end_segment: int

    def __post_init__(self):
        if self.start_segment < 1 or self.end_segment < self.start_segment:
            raise SegmentRangeError(f"invalid segment interval ({self.start_segment}, {self.end_segment})")

    @property
    def length(self) -> int:
        return self.end_segment - self.start_segment + 1

    def check(self, meta: VideoMeta) -> None:
        if self.end_segment > meta.segment_count:
            raise SegmentRangeError(
                f"{meta.video_id}: interval ({self.start_segment}, {self.end_segment}) "
                f"exceeds {meta.segment_count} segments"
            )


def feature_count(meta: VideoMeta) -> int:
    """n_i = floor(N_i / s)"""
    return meta.feature_count


def segment_count(meta: VideoMeta) -> int:
    """S_i = min(n_i, S)"""
    return meta.segment_count


def time_to_segment(t: float, meta: VideoMeta) -> int:
    """
    Map a time in seconds to the 1-based segment that contains it.

    Args:
        t: Time in seconds, 0 <= t <= duration
        meta: Video the time belongs to

    Returns:
        Segment index in 1..S_i; t == duration maps to S_i
    """
    if not 0.0 <= t <= meta.duration:
        raise SegmentRangeError(f"{meta.video_id}: time {t} outside [0, {meta.duration}]")

    position = t * meta.fps / meta.feature_stride * meta.segment_count / meta.feature_count
    k = math.floor(position + _INDEX_TOL) + 1
    return min(max(k, 1), meta.segment_count)


def segment_to_interval_seconds(seg: SegmentInterval, meta: VideoMeta) -> tuple[float, float]:
    """
    Time span covered by segments [k_s, k_e].

    The last segment is stretched to the end of the video so that frames past
    the final full feature are still covered.
    """
    seg.check(meta)
    length = meta.segment_duration
    start_s = (seg.start_segment - 1) * length
    if seg.end_segment == meta.segment_count:
        end_s = meta.duration
    else:
        end_s = seg.end_segment * length
    return start_s, end_s


def chunk_boundaries(n_rows: int, n_chunks: int) -> np.ndarray:
    """
    Row offsets splitting n_rows into n_chunks uniform chunks.

    Boundary k is round(k * n_rows / n_chunks) with ties to even, so chunk k
    (1-based) covers rows [b[k-1], b[k]). Returns n_chunks + 1 offsets.
    """
    if n_chunks < 1 or n_rows < n_chunks:
        raise ValidationError(f"cannot split {n_rows} rows into {n_chunks} chunks")
    bounds = np.rint(np.arange(n_chunks + 1) * n_rows / n_chunks).astype(int)
    bounds[0], bounds[-1] = 0, n_rows
    return bounds


def downsample_features(feats: np.ndarray, meta: VideoMeta) -> np.ndarray:
    """
    Sparse sampling: compress n_i feature rows into S_i rows by chunk means.

    Args:
        feats: n_i x d feature matrix
        meta: Video metadata (gives n_i and S_i)

    Returns:
        S_i x d matrix; the input itself when n_i <= S
    """
    feats = np.asarray(feats, dtype=float)
    if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
        raise ValidationError(f"{meta.video_id}: features must be a non-empty 2-D matrix, got shape {feats.shape}")
    if feats.shape[0] != meta.feature_count:
        raise ValidationError(
            f"{meta.video_id}: expected {meta.feature_count} feature rows, got {feats.shape[0]}"
        )

    n_segments = meta.segment_count
    if feats.shape[0] == n_segments:
        return feats

    bounds = chunk_boundaries(feats.shape[0], n_segments)
    sums = np.add.reduceat(feats, bounds[:-1], axis=0)
    counts = np.diff(bounds)[:, None]
    logger.debug(f"{meta.video_id}: downsampled {feats.shape[0]} features to {n_segments} segments")
    return sums / counts


def concat_features(*matrices: np.ndarray) -> np.ndarray:
    """Concatenate per-backbone feature matrices of one video along the feature axis"""
    if not matrices:
        raise ValidationError("no feature matrices to concatenate")
    mats = [np.asarray(m, dtype=float) for m in matrices]
    rows = {m.shape[0] for m in mats}
    if any(m.ndim != 2 for m in mats) or len(rows) != 1:
        raise ValidationError(f"feature matrices disagree on shape: {[m.shape for m in mats]}")
    return np.concatenate(mats, axis=1)
