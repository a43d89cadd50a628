"""
Ground truth for step queries: segment spans, event vectors and query groups.

A video's step texts can repeat (the same step performed several times). The
event vector of a query marks every segment where ANY annotation with the same
text occurs, so repeated steps are labelled consistently during training.
"""

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from core import (
    SegmentInterval,
    SegmentRangeError,
    ValidationError,
    VideoMeta,
    time_to_segment,
)

logger = logging.getLogger(__name__)

# Annotation ends are exclusive: a span ending exactly on a segment boundary
# does not spill into the next segment
END_EPSILON = 1e-6


@dataclass(frozen=True)
class QueryAnnotation:
    """One natural-language step with its annotated time span (seconds)"""

    query_id: str
    text: str
    start_s: float
    end_s: float

    def check(self, meta: VideoMeta) -> None:
        if not 0.0 <= self.start_s < self.end_s <= meta.duration + 1e-9:
            raise ValidationError(
                f"{meta.video_id}/{self.query_id}: span [{self.start_s}, {self.end_s}] "
                f"invalid for a {meta.duration:.3f}s video"
            )

    @property
    def key(self) -> str:
        return normalize_text(self.text)


@dataclass(frozen=True)
class QueryGroup:
    """Annotations of one video sharing the same step text"""

    text: str
    members: tuple[int, ...]  # 1-based positions in the annotation list

    @property
    def count(self) -> int:
        return len(self.members)


def normalize_text(text: str) -> str:
    """Trim and collapse internal whitespace; case is kept"""
    return " ".join(text.split())


def annotation_to_segment_span(q: QueryAnnotation, meta: VideoMeta) -> SegmentInterval:
    """
    Segment span (k_s, k_e) covered by an annotation.

    Args:
        q: The annotation
        meta: Video it belongs to

    Returns:
        SegmentInterval with k_s <= k_e, clamped to 1..S_i
    """
    q.check(meta)
    end_s = min(q.end_s, meta.duration)
    start = time_to_segment(q.start_s, meta)
    end = time_to_segment(max(end_s - END_EPSILON, q.start_s), meta)
    return SegmentInterval(start, max(start, end))


def group_identical_queries(queries: list[QueryAnnotation]) -> list[QueryGroup]:
    """
    Partition annotation positions by normalized text.

    Members are 1-based and sorted by start time; groups are ordered by their
    earliest occurrence.
    """
    by_text: dict[str, list[int]] = {}
    for position, q in enumerate(queries, start=1):
        by_text.setdefault(q.key, []).append(position)

    def start_of(position: int) -> tuple[float, float, str]:
        q = queries[position - 1]
        return q.start_s, q.end_s, q.query_id

    groups = [
        QueryGroup(text, tuple(sorted(members, key=start_of)))
        for text, members in by_text.items()
    ]
    groups.sort(key=lambda g: (start_of(g.members[0]), g.text))
    return groups


def build_event_vector(queries: list[QueryAnnotation], j: int, meta: VideoMeta) -> np.ndarray:
    """
    Event vector p_ij of query j (1-based) in one video.

    p^k = 1 iff some annotation q has the same text as query j and k lies
    inside q's segment span.

    Returns:
        int8 array of length S_i
    """
    if not 1 <= j <= len(queries):
        raise SegmentRangeError(f"{meta.video_id}: query index {j} outside 1..{len(queries)}")

    key = queries[j - 1].key
    vector = np.zeros(meta.segment_count, dtype=np.int8)
    for q in queries:
        if q.key != key:
            continue
        span = annotation_to_segment_span(q, meta)
        vector[span.start_segment - 1:span.end_segment] = 1
    return vector


def build_event_vectors(queries: list[QueryAnnotation], meta: VideoMeta) -> dict[str, np.ndarray]:
    """Event vector for every annotation of a video, keyed by query_id"""
    vectors: dict[str, np.ndarray] = {}
    for group in group_identical_queries(queries):
        shared = build_event_vector(queries, group.members[0], meta)
        for position in group.members:
            vectors[queries[position - 1].query_id] = shared.copy()
        if group.count > 1 and logger.isEnabledFor(logging.DEBUG):
            spans = []
            for position in group.members:
                start, end = boundary_vectors(queries[position - 1], meta)
                spans.append(f"{int(np.argmax(start)) + 1}-{int(np.argmax(end)) + 1}")
            logger.debug(
                f"{meta.video_id}: step '{group.text}' repeated {group.count} times; "
                f"boundary labels {', '.join(spans)}, {int(shared.sum())} event segments"
            )
    return vectors


def boundary_vectors(q: QueryAnnotation, meta: VideoMeta) -> tuple[np.ndarray, np.ndarray]:
    """
    One-hot start and end vectors of a single annotation.

    This is the span-localization ground truth: one start and one end per
    query, which cannot express a repeated step.
    """
    span = annotation_to_segment_span(q, meta)
    start = np.zeros(meta.segment_count, dtype=np.int8)
    end = np.zeros(meta.segment_count, dtype=np.int8)
    start[span.start_segment - 1] = 1
    end[span.end_segment - 1] = 1
    return start, end


def text_embedding(text: str, dim: int) -> np.ndarray:
    """
    Deterministic unit vector for a step text.

    Seeded by a SHA-256 of the normalized text, so identical texts always share
    an embedding across processes and platforms.
    """
    if dim < 1:
        raise ValidationError(f"embedding dim must be >= 1, got {dim}")
    digest = hashlib.sha256(normalize_text(text).encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vector = rng.standard_normal(dim)
    return vector / np.linalg.norm(vector)
