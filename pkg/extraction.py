"""
Interval extraction from a per-segment score vector.

Seed at the most likely segment and grow the interval in both directions while
scores stay at or above the alpha-percentile of the vector.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core import SegmentInterval, ValidationError, VideoMeta, segment_to_interval_seconds
from ground_truth import QueryAnnotation
from prior import PriorConfig, refine_video

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 85.0


@dataclass(frozen=True)
class ExtractionConfig:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0 < self.alpha < 100:
            raise ValidationError(f"alpha must be in (0, 100), got {self.alpha}")


@dataclass(frozen=True)
class Prediction:
    """Top-1 interval predicted for one query"""

    video_id: str
    query_id: str
    segments: SegmentInterval
    start_s: float
    end_s: float

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


def _as_scores(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"score vector must be 1-D and non-empty, got shape {p.shape}")
    return p


def percentile_threshold(p, alpha: float) -> float:
    """
    Nearest-rank percentile: the element at 1-based rank ceil(alpha/100 * n)
    of the ascending sort. Always an element of p.
    """
    p = _as_scores(p)
    # round first so that e.g. 85 * 20 / 100 lands on 17, not 17.000000000000004
    rank = math.ceil(round(alpha * p.size / 100.0, 9))
    rank = min(max(rank, 1), p.size)
    return float(np.partition(p, rank - 1)[rank - 1])


def extract_segment(p, cfg: ExtractionConfig) -> SegmentInterval:
    """
    Maximal interval through argmax(p) whose scores are all >= threshold.

    The seed is the earliest argmax. Neighbours outside the video count as
    below threshold.
    """
    p = _as_scores(p)
    threshold = percentile_threshold(p, cfg.alpha)
    seed = int(np.argmax(p))

    start = seed
    while start > 0 and p[start - 1] >= threshold:
        start -= 1
    end = seed
    while end < p.size - 1 and p[end + 1] >= threshold:
        end += 1
    return SegmentInterval(start + 1, end + 1)


def predict_intervals(
    scores: dict[str, np.ndarray],
    meta: VideoMeta,
    cfg: ExtractionConfig,
) -> list[Prediction]:
    """
    One interval per query, in segments and in seconds.

    Queries are emitted in sorted query_id order.
    """
    predictions = []
    for query_id in sorted(scores):
        p = _as_scores(scores[query_id])
        if p.size != meta.segment_count:
            raise ValidationError(
                f"{meta.video_id}/{query_id}: {p.size} scores for {meta.segment_count} segments"
            )
        segments = extract_segment(p, cfg)
        start_s, end_s = segment_to_interval_seconds(segments, meta)
        predictions.append(Prediction(meta.video_id, query_id, segments, start_s, end_s))
    return predictions


def localize_video(
    meta: VideoMeta,
    queries: list[QueryAnnotation],
    scores: dict[str, np.ndarray],
    cfg: ExtractionConfig,
    prior_cfg: Optional[PriorConfig] = None,
) -> list[Prediction]:
    """Refine (unless prior_cfg is None) then extract every query of a video"""
    if prior_cfg is not None:
        scores = refine_video(scores, queries, prior_cfg)
    return predict_intervals(scores, meta, cfg)
